"""Iterative initial-stress solution driver.

One elastic solve is followed by repeated corrector solves: stresses are
evaluated at the inclusion grid nodes, the material models turn them into
initial-stress increments, those become (t0, b0) loads integrated into F0,
and the factorized boundary system is re-solved until the increment norm
is small.  The physical stress at a grid node is

    sigma = sigma_virgin + C * eps_accumulated - sigma0_accumulated

with C the background constitutive matrix.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import (AssembledSystem, BoundaryModel, BoundarySolutionField,
                       Solution, assemble, corrector_strain_rows)
from .field_grid import FieldGrid
from .geometry import Inclusion
from .materials import (constitutive, elastic_mismatch_initial_stress,
                        viscoplastic_step, yield_value)
from .volume import SourceOperator, SourceQuadrature

log = logging.getLogger(__name__)


@dataclass
class MetricSpec:
    kind: str = "initial_stress_norm"   # | displacement_ratio | moment_ratio | point_displacement
    reference: Optional[float] = None   # exact value for the ratio metrics
    point: Optional[np.ndarray] = None  # for point_displacement
    section_t: float = 0.5              # grid row for the internal moment
    section_component: str = "y"        # bending stress component
    section_center: float = 0.5         # lever-arm origin along the section


@dataclass
class IterationConfig:
    max_iterations: int = 50
    tolerance: float = 1e-3
    metric: MetricSpec = field(default_factory=MetricSpec)

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise ValueError("tolerance must be > 0 and max_iterations >= 1")


@dataclass
class ProblemModel:
    boundary: BoundaryModel
    inclusions: list[Inclusion] = field(default_factory=list)
    virgin_stress: Optional[np.ndarray] = None
    name: str = "model"

    def __post_init__(self):
        if self.virgin_stress is not None:
            self.virgin_stress = np.asarray(self.virgin_stress, dtype=float)


@dataclass
class IterationRecord:
    iteration: int
    sigma0_norm: float
    metric: float
    elapsed: float


@dataclass
class SolverState:
    model: ProblemModel
    system: AssembledSystem
    grids: list[FieldGrid]
    solution: Solution                       # accumulated boundary solution
    increments: list = field(default_factory=list)   # one Solution per iteration
    history: list = field(default_factory=list)
    converged: bool = False
    reference_norm: float = 0.0
    _post_sources: Optional[list] = field(default=None, repr=False)
    _bfields: Optional[list] = field(default=None, repr=False)

    def boundary_fields(self):
        """One BoundarySolutionField per recorded increment (built lazily)."""
        if self._bfields is None or len(self._bfields) != len(self.increments):
            self._bfields = [BoundarySolutionField(self.model.boundary, sol)
                             for sol in self.increments]
        return self._bfields

    def total_sources(self):
        """One SourceQuadrature per grid over the accumulated sigma0."""
        if self._post_sources is None:
            mat = self.model.boundary.material
            self._post_sources = [
                SourceQuadrature(grid, mat, sigma0=grid.sigma0_total)
                for grid in self.grids]
        return self._post_sources


def _strain_increment(grid: FieldGrid, boundary_field: BoundarySolutionField,
                      strain_ops, source_incs) -> np.ndarray:
    """Nodal Voigt strain increment at every grid node.

    `strain_ops[g]` maps inclusion g's nodal sigma0 onto this grid's
    nodal strains; `source_incs[g]` is the corresponding previous
    initial-stress increment (or None before the first one exists).
    Edge nodes are evaluated a quarter cell inside the grid, matching the
    source operators, so no value is ever extrapolated.
    """
    sc = np.clip(grid.s, 0.25 * grid.ds, 1.0 - 0.25 * grid.ds)
    tc = np.clip(grid.t, 0.25 * grid.dt, 1.0 - 0.25 * grid.dt)
    eps = np.zeros((grid.ns, grid.nt, 3))
    for i in range(grid.ns):
        for j in range(grid.nt):
            y = grid.inclusion.map_to_global([sc[i]], [tc[j]])[0]
            eps[i, j] = boundary_field.strain_at(y)
    for op, s0 in zip(strain_ops, source_incs):
        if s0 is None or not np.any(s0):
            continue
        eps += (op @ s0.ravel()).reshape(grid.ns, grid.nt, 3)
    return eps


def _corrector_strain_operator(system, grid: FieldGrid, inset: float = 0.25):
    """(ns*nt*3, nz) rows: corrector solve vector z -> nodal strains.

    Uses the same quarter-cell inset evaluation points as the source
    operators.
    """
    sc = np.clip(grid.s, inset * grid.ds, 1.0 - inset * grid.ds)
    tc = np.clip(grid.t, inset * grid.dt, 1.0 - inset * grid.dt)
    rows = []
    for i in range(grid.ns):
        for j in range(grid.nt):
            y = grid.inclusion.map_to_global([sc[i]], [tc[j]])[0]
            rows.append(corrector_strain_rows(system, y))
    return np.vstack(rows)


def _resolve_cap_limits(model: ProblemModel, grids):
    """Turn fractional normal-stress caps into absolute ones (post-elastic)."""
    from .materials import _COMP
    for inc, grid in zip(model.inclusions, grids):
        ym = inc.yield_model
        if ym is None or getattr(ym, "limit_fraction", None) is None:
            continue
        sig = grid.true_stress(model.virgin_stress)
        peak = float(np.abs(sig[..., _COMP[ym.component]]).max())
        inc.yield_model = ym.resolved(ym.limit_fraction * peak)
        log.info("resolved stress cap to %.6g (%.0f%% of elastic peak %.6g)",
                 inc.yield_model.limit, 100 * ym.limit_fraction, peak)


def _initial_stress_increment(model: ProblemModel, inc: Inclusion, grid: FieldGrid,
                              eps_inc, C):
    """New nodal initial-stress increment from mismatch and/or yield model."""
    s0 = np.zeros((grid.ns, grid.nt, 3))
    Ci = constitutive(inc.material)
    if not np.allclose(Ci, C):
        # the fixed point requires the background stress to exceed the
        # inclusion stress by sigma0, hence the sign flip of (C_i - C) eps
        s0 -= elastic_mismatch_initial_stress(Ci, C, eps_inc)
    if inc.yield_model is not None:
        sig = grid.true_stress(model.virgin_stress).reshape(-1, 3)
        dt = inc.yield_model.effective_time_step(model.boundary.material)
        s0 += viscoplastic_step(sig, inc.yield_model, Ci, model.boundary.material,
                                dt).reshape(grid.ns, grid.nt, 3)
    return s0


def _metric_value(state: SolverState, spec: MetricSpec, norm: float):
    model = state.model
    if spec.kind == "initial_stress_norm":
        return norm / max(state.reference_norm, 1e-30)
    if spec.kind == "displacement_ratio":
        peak = float(np.hypot(*state.solution.u_nodes.T).max())
        return peak / spec.reference
    if spec.kind == "moment_ratio":
        return internal_moment(state.grids[0], model.virgin_stress,
                               component=spec.section_component,
                               t_value=spec.section_t,
                               center=spec.section_center) / spec.reference
    if spec.kind == "point_displacement":
        d = np.array([np.hypot(*(cp.point - spec.point)) for cp in model.boundary.colloc])
        return float(np.hypot(*state.solution.u_nodes[int(np.argmin(d))]))
    raise ValueError(f"unknown metric {spec.kind!r}")


def internal_moment(grid: FieldGrid, virgin=None, component="y", t_value=0.5,
                    center=0.5, axis="x"):
    """Bending moment of the true stress across one grid section (trapezoid)."""
    comp = {"x": 0, "y": 1}[component]
    ax = {"x": 0, "y": 1}[axis]
    j = int(np.argmin(np.abs(grid.t - t_value)))
    sig = grid.true_stress(virgin)[:, j, comp]
    coord = grid.points[:, j, ax]
    return float(np.trapezoid(sig * (coord - center), coord))


def run_iteration(model: ProblemModel, config: Optional[IterationConfig] = None):
    """Execute the initial-stress iteration; returns (state, history, converged)."""
    config = config or IterationConfig()
    t_start = time.perf_counter()
    system = assemble(model.boundary)
    grids = [FieldGrid(inc) for inc in model.inclusions]
    C = constitutive(model.boundary.material)
    state = SolverState(model, system, grids,
                        Solution(np.zeros((model.boundary.n_nodes, 2))))
    # geometry-only operators: nodal sigma0 -> strains / boundary loads,
    # and corrector solve vector z -> strains at the grid nodes
    ops = [SourceOperator(grid, model.boundary.material) for grid in grids]
    strain_ops = [[op.nodal_strain_operator(grid) for op in ops]
                  for grid in grids]
    f0_ops = [op.f0_operator(model.boundary.colloc) for op in ops]
    z_ops = [_corrector_strain_operator(system, grid) for grid in grids]
    source_incs = [None] * len(grids)   # previous sigma0 increments
    prev_s0 = None
    for it in range(1, config.max_iterations + 1):
        if it == 1:
            sol = system.solve()
        else:
            F0 = np.zeros(2 * model.boundary.n_nodes)
            for fop, s0 in zip(f0_ops, source_incs):
                if s0 is not None and np.any(s0):
                    F0 += fop @ s0.ravel()
            sol = system.solve(F0, incremental=True)
        state.increments.append(sol)
        state.solution.u_nodes = state.solution.u_nodes + sol.u_nodes
        for e, tc in sol.traction_coefs.items():
            acc = state.solution.traction_coefs.get(e)
            state.solution.traction_coefs[e] = tc if acc is None else acc + tc

        # strain increments for every grid (sources are last iteration's)
        if it == 1:
            # the first solve carries the external loads and prescribed
            # values, which the z operator does not represent
            bfield = BoundarySolutionField(model.boundary, sol)
            eps_incs = [_strain_increment(grid, bfield, strain_ops[k], source_incs)
                        for k, grid in enumerate(grids)]
        else:
            eps_incs = []
            for k, grid in enumerate(grids):
                eps = (z_ops[k] @ sol.z).reshape(grid.ns, grid.nt, 3)
                for op, s0 in zip(strain_ops[k], source_incs):
                    if s0 is None or not np.any(s0):
                        continue
                    eps += (op @ s0.ravel()).reshape(grid.ns, grid.nt, 3)
                eps_incs.append(eps)
        for grid, eps_inc in zip(grids, eps_incs):
            grid.sigma_bem += np.einsum("ij,...j->...i", C, eps_inc)
        if it == 1:
            ref = 0.0
            for grid in grids:
                ref = max(ref, float(np.abs(grid.true_stress(model.virgin_stress)).max()))
            state.reference_norm = max(ref, 1e-30)
            _resolve_cap_limits(model, grids)

        norm = 0.0
        all_s0 = []
        for inc, grid, eps_inc in zip(model.inclusions, grids, eps_incs):
            s0 = _initial_stress_increment(model, inc, grid, eps_inc, C)
            grid.sigma0_inc = s0
            grid.sigma0_total += s0
            grid.update_active()
            all_s0.append(s0)
            norm = max(norm, float(np.abs(s0).max()))
        if prev_s0 is not None and all_s0:
            flat_new = np.concatenate([a.ravel() for a in all_s0])
            flat_old = np.concatenate([a.ravel() for a in prev_s0])
            if (np.linalg.norm(flat_new) > np.linalg.norm(flat_old)
                    and flat_new @ flat_old < 0.0):
                log.warning("initial-stress increments oscillate and grow; "
                            "the visco-plastic time step is probably too large")
        prev_s0 = all_s0 or None
        source_incs = all_s0

        metric = _metric_value(state, config.metric, norm)
        state.history.append(IterationRecord(it, norm,
                                             metric, time.perf_counter() - t_start))
        if not grids or norm <= config.tolerance * state.reference_norm:
            state.converged = True
            break
    return state, state.history, state.converged


# ---------------------------------------------------------------------------
# internal results


def internal_displacement(state: SolverState, y):
    """Accumulated displacement at an interior point."""
    y = np.asarray(y, dtype=float)
    u = np.zeros(2)
    for bfield in state.boundary_fields():
        u += bfield.displacement_at(y)
    for src in state.total_sources():
        if not src.negligible:
            u += src.displacement_at(y)
    return u


def internal_strain(state: SolverState, y):
    """Accumulated Voigt strain at an interior point (not on any boundary)."""
    y = np.asarray(y, dtype=float)
    eps = np.zeros(3)
    for bfield in state.boundary_fields():
        eps += bfield.strain_at(y)
    for src in state.total_sources():
        if not src.negligible:
            eps += src.strain_at(y)
    return eps


def stress_at(state: SolverState, y):
    """True stress at an interior point, including virgin and initial stress."""
    y = np.asarray(y, dtype=float)
    C = constitutive(state.model.boundary.material)
    sig = C @ internal_strain(state, y)
    if state.model.virgin_stress is not None:
        sig = sig + state.model.virgin_stress
    for inc, grid in zip(state.model.inclusions, state.grids):
        st = inc.locate(y)
        if st is not None:
            sig = sig - grid.interpolate(st[0], st[1], grid.sigma0_total)[0]
            break
    return sig


def yield_residual(state: SolverState):
    """Worst yield-function value over all grids (<= 0 means admissible)."""
    worst = -np.inf
    for inc, grid in zip(state.model.inclusions, state.grids):
        if inc.yield_model is None:
            continue
        F = yield_value(grid.true_stress(state.model.virgin_stress),
                        inc.yield_model, state.model.boundary.material)
        worst = max(worst, float(np.max(F)))
    return worst
