"""Outer-boundary discretization and system assembly.

The boundary is a closed loop of NURBS patches with geometry-independent
displacement and traction bases.  Collocation happens at the Greville
abscissae of the displacement bases, with corner nodes shared between
patches.  The strongly singular diagonal is never computed from kernel
values: regularized integrals carry the smooth part and the missing free
term plus CPV remainder is completed from the rigid-body row-sum identity
(zero row sum for a finite domain, identity row sum for the infinite one).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .kernels import IsotropicMaterial, kernel_R, kernel_S, kernel_T, kernel_U
from .nurbs import NurbsCurve, SplineBasis
from .quadrature import (adaptive_subintervals, gauss_on_interval, order_for,
                         split_interval_at)

SING_ORDER = 16


class ModelError(ValueError):
    """Inconsistent boundary model (open loop, BC mismatch, ...)."""


class SolverError(RuntimeError):
    """Linear system could not be solved."""


@dataclass
class BoundaryCondition:
    kind: str                       # free | fixed | traction | field_traction
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("free", "fixed", "traction", "field_traction"):
            raise ModelError(f"unknown boundary condition kind {self.kind!r}")
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=float)


@dataclass
class Patch:
    geometry: NurbsCurve
    disp_basis: SplineBasis
    trac_basis: SplineBasis
    bc: BoundaryCondition

    def __post_init__(self):
        if self.bc.kind == "traction":
            if self.bc.values is None or self.bc.values.shape != (self.trac_basis.size, 2):
                raise ModelError("traction BC needs one (tx, ty) row per traction basis function")
        if self.bc.kind == "field_traction":
            if self.bc.values is None or self.bc.values.shape != (3,):
                raise ModelError("field_traction BC needs a Voigt stress (sxx, syy, sxy)")
        if self.bc.kind == "fixed" and self.bc.values is None:
            self.bc.values = np.zeros(2)

    def elements(self):
        brk = np.unique(np.concatenate([
            self.geometry.breakpoints(),
            self.disp_basis.breakpoints(),
            self.trac_basis.breakpoints(),
        ]))
        return list(zip(brk[:-1], brk[1:]))


@dataclass
class CollocationPoint:
    index: int
    point: np.ndarray
    memberships: list          # [(patch_idx, u)]
    constrained: np.ndarray    # (2,) bool
    values: np.ndarray         # (2,) prescribed displacement


class BoundaryModel:
    """Closed loop of patches plus domain type and background material."""

    def __init__(self, patches: list[Patch], material: IsotropicMaterial,
                 finite: bool = True):
        if not patches:
            raise ModelError("boundary model needs at least one patch")
        self.patches = patches
        self.material = material
        self.finite = finite
        self.scale = self._scale()
        self._check_closed()
        self.normal_sign = self._orientation_sign()
        self._build_nodes()
        self.colloc = place_collocation_points(self)

    def _scale(self):
        pts = np.vstack([p.geometry.control_points for p in self.patches])
        span = pts.max(axis=0) - pts.min(axis=0)
        return float(max(np.hypot(*span), 1e-30))

    def _check_closed(self):
        n = len(self.patches)
        for e in range(n):
            end = self.patches[e].geometry.evaluate(1.0)
            start = self.patches[(e + 1) % n].geometry.evaluate(0.0)
            if np.hypot(*(end - start)) > 1e-9 * self.scale:
                raise ModelError(
                    f"open boundary: patch {e} ends at {end} but patch {(e + 1) % n} "
                    f"starts at {start}")

    def _orientation_sign(self):
        area2 = 0.0
        for p in self.patches:
            for a, b in p.elements():
                u, w = gauss_on_interval(a, b, 8)
                x = p.geometry.evaluate(u)
                dx = p.geometry.evaluate_derivative(u)
                area2 += np.sum(w * (x[:, 0] * dx[:, 1] - x[:, 1] * dx[:, 0]))
        ccw = area2 > 0
        return 1.0 if ccw == self.finite else -1.0

    def normal(self, patch_idx: int, u):
        """Out-of-domain unit normal(s) at parameter(s) u."""
        tang = self.patches[patch_idx].geometry.evaluate_derivative(np.atleast_1d(u))
        jac = np.hypot(tang[:, 0], tang[:, 1])
        n = self.normal_sign * np.c_[tang[:, 1], -tang[:, 0]] / jac[:, None]
        return n, jac

    def _build_nodes(self):
        n = len(self.patches)
        self.node_of = []
        next_id = 0
        for e, p in enumerate(self.patches):
            K = p.disp_basis.size
            ids = np.empty(K, dtype=int)
            if e == 0:
                ids[:] = np.arange(K)
                next_id = K
            else:
                ids[0] = self.node_of[e - 1][-1]
                ids[1:] = np.arange(next_id, next_id + K - 1)
                next_id += K - 1
            self.node_of.append(ids)
        # close the loop: last node of last patch is node 0
        last = self.node_of[-1]
        dropped = last[-1]
        if len(self.patches) > 1:
            last[-1] = self.node_of[0][0]
            next_id = dropped
        else:
            last[-1] = last[0]
            next_id = dropped
        self.n_nodes = next_id

    @property
    def element_count(self):
        return sum(len(p.elements()) for p in self.patches)


def place_collocation_points(model: BoundaryModel) -> list[CollocationPoint]:
    """Greville collocation with corner nodes shared across patch joins."""
    memberships: dict[int, list] = {}
    for e, p in enumerate(model.patches):
        grev = p.disp_basis.greville()
        for k, u in enumerate(grev):
            memberships.setdefault(int(model.node_of[e][k]), []).append((e, float(u)))
    points = []
    for node in range(model.n_nodes):
        mem = memberships[node]
        e, u = mem[0]
        pt = model.patches[e].geometry.evaluate(u)
        for e2, u2 in mem[1:]:
            pt2 = model.patches[e2].geometry.evaluate(u2)
            if np.hypot(*(pt2 - pt)) > 1e-8 * model.scale:
                raise ModelError(f"incompatible patch join at node {node}: {pt} vs {pt2}")
        constrained = np.zeros(2, dtype=bool)
        values = np.zeros(2)
        for e2, _u2 in mem:
            bc = model.patches[e2].bc
            if bc.kind == "fixed":
                constrained[:] = True
                values[:] = bc.values
        points.append(CollocationPoint(node, pt, mem, constrained, values))
    return points


# ---------------------------------------------------------------------------
# quadrature helpers over boundary elements


def _element_geometry(patch: Patch, u):
    x = patch.geometry.evaluate(u)
    dx = patch.geometry.evaluate_derivative(u)
    jac = np.hypot(dx[:, 0], dx[:, 1])
    return x, dx, jac


def regular_subintervals(patch: Patch, a: float, b: float, y, scale: float):
    """(u, w) quadrature on [a, b], graded toward y when it is close."""
    probe = np.linspace(a, b, 7)
    xp = patch.geometry.evaluate(probe)
    d = np.hypot(xp[:, 0] - y[0], xp[:, 1] - y[1])
    closest = probe[int(np.argmin(d))]
    # approximate element arc length
    size = np.sum(np.hypot(*(np.diff(xp, axis=0).T)))
    dmin = float(d.min())
    if dmin >= 0.5 * size or size == 0.0:
        n = order_for(dmin, size)
        return [gauss_on_interval(a, b, n)]
    pieces = adaptive_subintervals(a, b, closest)
    out = []
    for lo, hi in pieces:
        frac = (hi - lo) / (b - a)
        mid = patch.geometry.evaluate(np.array([0.5 * (lo + hi)]))[0]
        dloc = max(np.hypot(*(mid - y)), 1e-12 * scale)
        out.append(gauss_on_interval(lo, hi, order_for(dloc, size * frac)))
    return out


def _traction_values(model: BoundaryModel, e: int, u, solution=None):
    """Boundary traction at parameters u of patch e (prescribed or solved)."""
    p = model.patches[e]
    bc = p.bc
    if bc.kind == "free":
        return np.zeros((len(u), 2))
    if solution is not None and not solution.includes_loads and bc.kind != "fixed":
        return np.zeros((len(u), 2))
    if bc.kind == "traction":
        return p.trac_basis.basis_matrix(u) @ bc.values
    if bc.kind == "field_traction":
        n, _ = model.normal(e, u)
        s = bc.values
        return np.c_[s[0] * n[:, 0] + s[2] * n[:, 1], s[2] * n[:, 0] + s[1] * n[:, 1]]
    # fixed: solved coefficients
    if solution is None or solution.traction_coefs.get(e) is None:
        raise SolverError("traction on a fixed patch requires a solved system")
    return p.trac_basis.basis_matrix(u) @ solution.traction_coefs[e]


# ---------------------------------------------------------------------------
# assembly


@dataclass
class Solution:
    u_nodes: np.ndarray                 # (N, 2)
    traction_coefs: dict = field(default_factory=dict)
    includes_loads: bool = True         # False for pure initial-stress increments
    z: Optional[np.ndarray] = None      # raw unknown vector of the linear solve

    def displacement_coefs(self, model: BoundaryModel, e: int):
        return self.u_nodes[model.node_of[e]]


class AssembledSystem:
    """Dense collocation system [T]{u} = {F} + {F0} with cached factorization."""

    def __init__(self, model: BoundaryModel):
        self.model = model
        self._assemble()

    # -- public API ---------------------------------------------------------

    @property
    def T_matrix(self):
        return self.lhs

    def solve(self, F0=None, incremental=False) -> Solution:
        """Solve for the boundary unknowns.

        `incremental` drops the external-load right-hand side and the
        prescribed displacement values: the solve then yields the pure
        response to the initial-stress loads F0.
        """
        model = self.model
        rhs = np.zeros_like(self.rhs_base) if incremental else self.rhs_base.copy()
        if F0 is not None:
            rhs = rhs + np.asarray(F0, dtype=float).ravel()
        try:
            z = lu_solve(self.lu, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverError(str(exc)) from exc
        resid = np.linalg.norm(self.lhs @ z - rhs)
        ref = max(np.linalg.norm(rhs), 1.0)
        if not np.isfinite(resid) or resid > 1e-8 * ref:
            raise SolverError(f"direct solve residual {resid:.2e} too large")
        u = np.zeros(2 * model.n_nodes)
        u[self.free_cols] = z[: len(self.free_cols)]
        if not incremental:
            for cp in model.colloc:
                for d in range(2):
                    if cp.constrained[d]:
                        u[2 * cp.index + d] = cp.values[d]
        sol = Solution(u.reshape(-1, 2), includes_loads=not incremental, z=z)
        off = len(self.free_cols)
        for e, cols in self.trac_cols.items():
            sol.traction_coefs[e] = z[off + np.asarray(cols)].reshape(-1, 2)
        return sol

    # -- construction -------------------------------------------------------

    def _assemble(self):
        model = self.model
        N = model.n_nodes
        Tmat = np.zeros((2 * N, 2 * N))
        F = np.zeros(2 * N)
        # traction unknown columns for fixed patches
        self.trac_cols = {}
        nt_cols = 0
        for e, p in enumerate(model.patches):
            if p.bc.kind == "fixed":
                self.trac_cols[e] = list(range(nt_cols, nt_cols + 2 * p.trac_basis.size))
                nt_cols += 2 * p.trac_basis.size
        G = np.zeros((2 * N, nt_cols))

        for cp in model.colloc:
            self._assemble_row(cp, Tmat, F, G)

        # free-term completion: rows of the c + T operator must sum to the
        # rigid-body target (0 interior, +I for the infinite domain)
        target = np.zeros((2, 2)) if model.finite else np.eye(2)
        for cp in model.colloc:
            n = cp.index
            rs = Tmat[2 * n: 2 * n + 2].reshape(2, N, 2).sum(axis=1)
            D = target - rs
            weights = self._nodal_weights(cp)
            for node, wgt in weights.items():
                Tmat[2 * n: 2 * n + 2, 2 * node: 2 * node + 2] += wgt * D

        self.Tmat_full = Tmat
        # column partition: unknown u dofs vs prescribed ones
        fixed_mask = np.zeros(2 * N, dtype=bool)
        fixed_vals = np.zeros(2 * N)
        for cp in model.colloc:
            for d in range(2):
                if cp.constrained[d]:
                    fixed_mask[2 * cp.index + d] = True
                    fixed_vals[2 * cp.index + d] = cp.values[d]
        self.free_cols = np.where(~fixed_mask)[0]
        n_unknown = len(self.free_cols) + nt_cols
        if n_unknown != 2 * N:
            raise ModelError(
                f"system not square: {2 * N} equations vs {n_unknown} unknowns "
                "(check Dirichlet patch layout)")
        self.lhs = np.hstack([Tmat[:, self.free_cols], -G])
        self.F = F
        self.rhs_base = F - Tmat[:, fixed_mask] @ fixed_vals[fixed_mask]
        try:
            self.lu = lu_factor(self.lhs)
        except np.linalg.LinAlgError as exc:
            raise SolverError(
                "singular boundary system (pure Neumann interior problem has a "
                "rigid-body null space; add constraints)") from exc

    def _nodal_weights(self, cp: CollocationPoint):
        """Displacement basis values at the collocation point, per global node."""
        model = self.model
        weights: dict[int, float] = {}
        e, u = cp.memberships[0]
        R = model.patches[e].disp_basis.basis_matrix(np.array([u]))[0]
        for k, node in enumerate(model.node_of[e]):
            if R[k] != 0.0:
                weights[int(node)] = weights.get(int(node), 0.0) + R[k]
        total = sum(weights.values())
        return {k: v / total for k, v in weights.items()}

    def _assemble_row(self, cp: CollocationPoint, Tmat, F, G):
        model = self.model
        mat = model.material
        y = cp.point
        n_row = 2 * cp.index
        mem = {e: u for e, u in cp.memberships}
        for e, p in enumerate(model.patches):
            nodes = model.node_of[e]
            bc = p.bc
            for a, b in p.elements():
                u0 = mem.get(e)
                singular = u0 is not None and a - 1e-12 <= u0 <= b + 1e-12
                if singular:
                    uq, wq = split_interval_at(a, b, float(np.clip(u0, a, b)), SING_ORDER)
                else:
                    pieces = regular_subintervals(p, a, b, y, model.scale)
                    uq = np.concatenate([u for u, _ in pieces])
                    wq = np.concatenate([w for _, w in pieces])
                x, _, jarc = _element_geometry(p, uq)
                nrm, _ = model.normal(e, uq)
                w_arc = wq * jarc
                Rd = p.disp_basis.basis_matrix(uq)
                T = kernel_T(y, x, nrm, mat)
                if singular:
                    Rd0 = p.disp_basis.basis_matrix(np.array([np.clip(u0, a, b)]))[0]
                    Rd = Rd - Rd0[None, :]
                blocks = np.einsum("m,mij,mk->kij", w_arc, T, Rd)
                for k, node in enumerate(nodes):
                    Tmat[n_row: n_row + 2, 2 * node: 2 * node + 2] += blocks[k]
                # right-hand side / traction columns from the U kernel
                U = kernel_U(y, x, mat)
                if bc.kind in ("traction", "field_traction"):
                    tvals = _traction_values(model, e, uq)
                    F[n_row: n_row + 2] += np.einsum("m,mij,mj->i", w_arc, U, tvals)
                elif bc.kind == "fixed":
                    Rt = p.trac_basis.basis_matrix(uq)
                    gb = np.einsum("m,mij,mk->kij", w_arc, U, Rt)
                    cols = self.trac_cols[e]
                    for k in range(p.trac_basis.size):
                        G[n_row: n_row + 2, cols[2 * k]: cols[2 * k] + 2] += gb[k]


def assemble(model: BoundaryModel) -> AssembledSystem:
    return AssembledSystem(model)


# ---------------------------------------------------------------------------
# internal-point boundary integrals


class BoundarySolutionField:
    """Batched Somigliana evaluator for a fixed boundary solution.

    Element geometry, field values and baseline Gauss weights are
    precomputed once; each internal point then needs a single vectorized
    kernel evaluation plus refined treatment of the few nearby elements.
    """

    def __init__(self, model: BoundaryModel, solution: Solution, order: int = 8,
                 piece_fraction: float = 0.06):
        self.model = model
        self.solution = solution
        xs, ns, ws, uv, tv = [], [], [], [], []
        self.elems = []              # (patch_idx, a, b, slice, arc_len, center)
        pos = 0
        max_piece = piece_fraction * model.scale
        for e, p in enumerate(model.patches):
            ucoef = solution.displacement_coefs(model, e)
            for ea, eb in p.elements():
                probe = np.linspace(ea, eb, 9)
                xp = p.geometry.evaluate(probe)
                est = float(np.sum(np.hypot(*(np.diff(xp, axis=0).T))))
                npc = max(1, int(np.ceil(est / max_piece)))
                bounds = np.linspace(ea, eb, npc + 1)
                pieces = list(zip(bounds[:-1], bounds[1:]))
                for a, b in pieces:
                    uq, wq = gauss_on_interval(a, b, order)
                    x, _, jarc = _element_geometry(p, uq)
                    nrm, _ = model.normal(e, uq)
                    w = wq * jarc
                    xs.append(x)
                    ns.append(nrm)
                    ws.append(w)
                    uv.append(p.disp_basis.basis_matrix(uq) @ ucoef)
                    tv.append(_traction_values(model, e, uq, solution))
                    arc = float(np.sum(w))
                    self.elems.append((e, a, b, slice(pos, pos + len(uq)), arc,
                                       x[len(uq) // 2].copy()))
                    pos += len(uq)
        self.x = np.vstack(xs)
        self.n = np.vstack(ns)
        self.w = np.concatenate(ws)
        self.uvals = np.vstack(uv)
        self.tvals = np.vstack(tv)

    def _near(self, y):
        return [k for k, (_e, _a, _b, _sl, arc, center) in enumerate(self.elems)
                if np.hypot(*(center - y)) < 1.5 * arc]

    def _element_exact(self, k, y, strain):
        e, a, b, _sl, _arc, _c = self.elems[k]
        p = self.model.patches[e]
        ucoef = self.solution.displacement_coefs(self.model, e)
        pieces = regular_subintervals(p, a, b, y, self.model.scale)
        uq = np.concatenate([u for u, _ in pieces])
        wq = np.concatenate([w for _, w in pieces])
        x, _, jarc = _element_geometry(p, uq)
        nrm, _ = self.model.normal(e, uq)
        w = wq * jarc
        uvals = p.disp_basis.basis_matrix(uq) @ ucoef
        tvals = _traction_values(self.model, e, uq, self.solution)
        K1 = kernel_S(y, x, self.model.material) if strain \
            else kernel_U(y, x, self.model.material)
        K2 = kernel_R(y, x, nrm, self.model.material) if strain \
            else kernel_T(y, x, nrm, self.model.material)
        return (np.einsum("m,mij,mj->i", w, K1, tvals)
                - np.einsum("m,mij,mj->i", w, K2, uvals))

    def _evaluate(self, y, strain):
        y = np.asarray(y, dtype=float)
        near = self._near(y)
        w = self.w
        if near:
            w = w.copy()
            for k in near:
                w[self.elems[k][3]] = 0.0
        mat = self.model.material
        K1 = kernel_S(y, self.x, mat) if strain else kernel_U(y, self.x, mat)
        K2 = kernel_R(y, self.x, self.n, mat) if strain else kernel_T(y, self.x, self.n, mat)
        acc = np.einsum("m,mij,mj->i", w, K1, self.tvals)
        acc -= np.einsum("m,mij,mj->i", w, K2, self.uvals)
        for k in near:
            acc += self._element_exact(k, y, strain)
        return acc

    def displacement_at(self, y):
        return self._evaluate(y, strain=False)

    def strain_at(self, y):
        return self._evaluate(y, strain=True)


def _boundary_integrals(model: BoundaryModel, solution: Solution, y, strain: bool):
    mat = model.material
    acc = np.zeros(3 if strain else 2)
    for e, p in enumerate(model.patches):
        ucoef = solution.displacement_coefs(model, e)
        for a, b in p.elements():
            for uq, wq in regular_subintervals(p, a, b, y, model.scale):
                x, _, jarc = _element_geometry(p, uq)
                nrm, _ = model.normal(e, uq)
                w_arc = wq * jarc
                uvals = p.disp_basis.basis_matrix(uq) @ ucoef
                tvals = _traction_values(model, e, uq, solution)
                if strain:
                    Sk = kernel_S(y, x, mat)
                    Rk = kernel_R(y, x, nrm, mat)
                    acc += np.einsum("m,mij,mj->i", w_arc, Sk, tvals)
                    acc -= np.einsum("m,mij,mj->i", w_arc, Rk, uvals)
                else:
                    Uk = kernel_U(y, x, mat)
                    Tk = kernel_T(y, x, nrm, mat)
                    acc += np.einsum("m,mij,mj->i", w_arc, Uk, tvals)
                    acc -= np.einsum("m,mij,mj->i", w_arc, Tk, uvals)
    return acc


def boundary_displacement_terms(model, solution, y):
    """Somigliana boundary part of u(y) for an interior point y."""
    return _boundary_integrals(model, solution, np.asarray(y, dtype=float), strain=False)


def boundary_strain_terms(model, solution, y):
    """Boundary part of the Voigt strain at an interior point y."""
    return _boundary_integrals(model, solution, np.asarray(y, dtype=float), strain=True)


def corrector_strain_rows(system: AssembledSystem, y):
    """(3, nz) rows mapping a corrector solve vector z to the strain at y.

    Valid for incremental solutions only: there the boundary displacement
    and any solved tractions are linear in z while every prescribed value
    is zero, so the whole Somigliana strain evaluation collapses to one
    matrix row per strain component.
    """
    model = system.model
    mat = model.material
    y = np.asarray(y, dtype=float)
    N = model.n_nodes
    nfree = len(system.free_cols)
    nz = nfree + sum(len(c) for c in system.trac_cols.values())
    row_u = np.zeros((3, 2 * N))
    rows = np.zeros((3, nz))
    for e, p in enumerate(model.patches):
        nodes = model.node_of[e]
        for a, b in p.elements():
            for uq, wq in regular_subintervals(p, a, b, y, model.scale):
                x, _, jarc = _element_geometry(p, uq)
                nrm, _ = model.normal(e, uq)
                w = wq * jarc
                Rk = kernel_R(y, x, nrm, mat)
                Rd = p.disp_basis.basis_matrix(uq)
                blocks = np.einsum("m,mij,mk->kij", w, Rk, Rd)
                for k, node in enumerate(nodes):
                    row_u[:, 2 * node: 2 * node + 2] -= blocks[k]
                if p.bc.kind == "fixed":
                    Sk = kernel_S(y, x, mat)
                    Rt = p.trac_basis.basis_matrix(uq)
                    sb = np.einsum("m,mij,mk->kij", w, Sk, Rt)
                    cols = system.trac_cols[e]
                    for k in range(p.trac_basis.size):
                        rows[:, nfree + cols[2 * k]: nfree + cols[2 * k] + 2] += sb[k]
    rows[:, :nfree] += row_u[:, system.free_cols]
    return rows
