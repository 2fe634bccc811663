"""Initial-stress load integration over an inclusion.

Converts an inclusion's initial-stress field (boundary tractions t0 and
body forces b0 sampled on its grid) into

  * the extra right-hand side F0 of the boundary system (U-kernel), and
  * strain contributions at internal points (S-kernel),

with cell-aligned Gauss quadrature, degenerate-triangle subdivision when
the evaluation point falls inside an integration region, graded transforms
when it lies on the inclusion boundary, and the volume-to-surface identity
  int_V S dV = oint_{dV} S (n . r) dS
for the strongly singular part of the internal-strain evaluation.
"""

from __future__ import annotations

import numpy as np

from .field_grid import FieldGrid
from .geometry import Inclusion
from .kernels import IsotropicMaterial, kernel_S, kernel_U
from .quadrature import (adaptive_subintervals, gauss_on_interval, gauss_rule_2d,
                         order_for, split_interval_at, triangle_quadrature,
                         triangles_covering)

_KERNELS = {"U": kernel_U, "S": kernel_S}


def subdivide_for_plastic_extent(grid: FieldGrid, active_mask=None):
    """Axis-aligned (s, t) rectangles covering the active cells.

    Maximal runs of consecutive active cell columns become one rectangle
    each, with the t-extent shrunk to the active rows of that run.  Region
    boundaries coincide with grid cell lines, so integrand kinks of the
    piecewise-bilinear field never sit inside a region.
    """
    cells = grid.active_cells() if active_mask is None else np.asarray(active_mask, bool)
    if not cells.any():
        return []
    if cells.all():
        return [(0.0, 1.0, 0.0, 1.0)]
    col_active = cells.any(axis=1)
    regions = []
    i = 0
    while i < len(col_active):
        if not col_active[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(col_active) and col_active[j + 1]:
            j += 1
        rows = np.where(cells[i:j + 1].any(axis=0))[0]
        regions.append((grid.s[i], grid.s[j + 1], grid.t[rows[0]], grid.t[rows[-1] + 1]))
        i = j + 1
    return regions


# ---------------------------------------------------------------------------
# low-level integrators


def _locate_on_segment(inc: Inclusion, y, tol=1e-8):
    """{segment: u} entries for every inclusion boundary segment through y."""
    st = inc.locate(y, boundary_slack=tol)
    if st is None:
        return {}, None
    s, t = st
    hits = {}
    if t <= tol:
        hits["curve_i"] = s
    if t >= 1.0 - tol:
        hits["curve_ii"] = s
    if s <= tol:
        hits["edge1"] = t
    if s >= 1.0 - tol:
        hits["edge2"] = t
    return hits, (s, t)


def _segment_pieces(grid: FieldGrid, segment):
    lines = grid.s if segment in ("curve_i", "curve_ii") else grid.t
    brk = np.asarray(lines, dtype=float)
    if segment in ("curve_i", "curve_ii"):
        crv = grid.inclusion.curve_i if segment == "curve_i" else grid.inclusion.curve_ii
        brk = np.unique(np.concatenate([brk, crv.breakpoints()]))
    return list(zip(brk[:-1], brk[1:]))


def _piece_rule(inc: Inclusion, segment, a, b, y, sing_u, order):
    """(u, w) quadrature for one boundary piece, graded/adaptive as needed."""
    if sing_u is not None and a - 1e-12 <= sing_u <= b + 1e-12:
        return split_interval_at(a, b, float(np.clip(sing_u, a, b)), max(order, 12))
    probe = np.linspace(a, b, 5)
    xp, _, _ = inc.trace_at_param(segment, probe)
    d = np.hypot(xp[:, 0] - y[0], xp[:, 1] - y[1])
    size = float(np.sum(np.hypot(*(np.diff(xp, axis=0).T))))
    dmin = float(d.min())
    if size == 0.0:
        return np.empty(0), np.empty(0)
    if dmin >= 0.5 * size:
        return gauss_on_interval(a, b, max(order, order_for(dmin, size)))
    us, ws = [], []
    for lo, hi in adaptive_subintervals(a, b, probe[int(np.argmin(d))]):
        mid, _, _ = inc.trace_at_param(segment, np.array([0.5 * (lo + hi)]))
        dl = max(np.hypot(*(mid[0] - y)), 1e-12 * inc.diameter())
        u, w = gauss_on_interval(lo, hi, order_for(dl, size * (hi - lo) / (b - a)))
        us.append(u)
        ws.append(w)
    return np.concatenate(us), np.concatenate(ws)


def surface_integral(kernel, y, grid: FieldGrid, t0_field, mat, order=6):
    """sum over S0 of K(y, x) . t0(x) dS for K in {U, S}."""
    inc = grid.inclusion
    K = _KERNELS[kernel]
    hits, _ = _locate_on_segment(inc, y)
    acc = np.zeros(2 if kernel == "U" else 3)
    for segment in inc.segment_names():
        sing_u = hits.get(segment)
        for a, b in _segment_pieces(grid, segment):
            u, w = _piece_rule(inc, segment, a, b, y, sing_u, order)
            if len(u) == 0:
                continue
            x, _, jac = inc.trace_at_param(segment, u)
            t0 = t0_field(segment, u)
            acc += np.einsum("m,mij,mj->i", w * jac, K(y, x, mat), t0)
    return acc


def _cells_in_regions(grid: FieldGrid, regions):
    """Cell index pairs (i, j) whose closed cell lies inside some region."""
    out = []
    eps = 1e-12
    for i in range(grid.ns - 1):
        for j in range(grid.nt - 1):
            s0, s1 = grid.s[i], grid.s[i + 1]
            t0, t1 = grid.t[j], grid.t[j + 1]
            for r in regions:
                if (r[0] - eps <= s0 and s1 <= r[1] + eps
                        and r[2] - eps <= t0 and t1 <= r[3] + eps):
                    out.append((i, j))
                    break
    return out


def _cell_quadrature(inc: Inclusion, rect, y_st, order):
    """(s, t, w) points over one cell; triangle fan when y_st is inside."""
    s0, s1, t0, t1 = rect
    if y_st is not None and s0 - 1e-12 <= y_st[0] <= s1 + 1e-12 \
            and t0 - 1e-12 <= y_st[1] <= t1 + 1e-12:
        apex = (float(np.clip(y_st[0], s0, s1)), float(np.clip(y_st[1], t0, t1)))
        pts, wts = [], []
        for tri in triangles_covering((s0, s1, t0, t1), apex):
            p, w = triangle_quadrature(tri, max(order, 8))
            pts.append(p)
            wts.append(w)
        pts = np.vstack(pts)
        return pts[:, 0], pts[:, 1], np.concatenate(wts)
    XY, W = gauss_rule_2d(order)
    s = s0 + 0.5 * (XY[:, 0] + 1.0) * (s1 - s0)
    t = t0 + 0.5 * (XY[:, 1] + 1.0) * (t1 - t0)
    return s, t, W * 0.25 * (s1 - s0) * (t1 - t0)


def _cell_order(inc, rect, y, base_order):
    s0, s1, t0, t1 = rect
    sc = np.array([0.5 * (s0 + s1)])
    tc = np.array([0.5 * (t0 + t1)])
    center = inc.map_to_global(sc, tc)[0]
    corner = inc.map_to_global(np.array([s0]), np.array([t0]))[0]
    diam = 2.0 * np.hypot(*(center - corner))
    dist = np.hypot(*(center - y))
    return int(np.clip(max(base_order, order_for(dist, diam)), base_order, 16))


def volume_integral(kernel, y, grid: FieldGrid, b0_field, mat, regions=None,
                    order=4, subtract=None):
    """sum over V of K(y, x) . b0(x) dV, optionally with b0 - subtract."""
    inc = grid.inclusion
    K = _KERNELS[kernel]
    if regions is None:
        regions = [(0.0, 1.0, 0.0, 1.0)]
    _, y_st = _locate_on_segment(inc, y)
    acc = np.zeros(2 if kernel == "U" else 3)
    for i, j in _cells_in_regions(grid, regions):
        rect = (grid.s[i], grid.s[i + 1], grid.t[j], grid.t[j + 1])
        n = _cell_order(inc, rect, y, order)
        s, t, w = _cell_quadrature(inc, rect, y_st, n)
        x = inc.map_to_global(s, t)
        _, det = inc.jacobian(s, t)
        b0 = b0_field(s, t)
        if subtract is not None:
            b0 = b0 - subtract[None, :]
        r2 = (x[:, 0] - y[0]) ** 2 + (x[:, 1] - y[1]) ** 2
        keep = r2 > (1e-13 * inc.diameter()) ** 2
        acc += np.einsum("m,mij,mj->i", (w * det)[keep], K(y, x[keep], mat), b0[keep])
    return acc


def region_boundary_matrix(y, inc: Inclusion, rect, mat, order=8):
    """oint over the rect's mapped boundary of S(y, x) (n . r) dS, a (3, 2) matrix."""
    s0, s1, t0, t1 = rect
    total = np.zeros((3, 2))
    # counterclockwise traversal in (s, t); det J > 0 keeps it ccw in space
    sides = [("s", t0, s0, s1, 1.0), ("t", s1, t0, t1, 1.0),
             ("s", t1, s1, s0, -1.0), ("t", s0, t1, t0, -1.0)]
    for kind, fixed, a, b, _sgn in sides:
        lo, hi = (a, b) if a < b else (b, a)
        probe = np.linspace(lo, hi, 5)
        if kind == "s":
            xp = inc.map_to_global(probe, np.full_like(probe, fixed))
        else:
            xp = inc.map_to_global(np.full_like(probe, fixed), probe)
        d = np.hypot(xp[:, 0] - y[0], xp[:, 1] - y[1])
        size = float(np.sum(np.hypot(*(np.diff(xp, axis=0).T))))
        if size == 0.0:
            continue
        pieces = (adaptive_subintervals(lo, hi, probe[int(np.argmin(d))])
                  if d.min() < 0.5 * size else [(lo, hi)])
        for plo, phi in pieces:
            u, w = gauss_on_interval(plo, phi, max(order, order_for(max(d.min(), 1e-12), size)))
            if kind == "s":
                ss, tt = u, np.full_like(u, fixed)
            else:
                ss, tt = np.full_like(u, fixed), u
            x = inc.map_to_global(ss, tt)
            J, _ = inc.jacobian(ss, tt)
            tang = J[:, 0, :] if kind == "s" else J[:, 1, :]
            if a > b:
                tang = -tang
            jac = np.hypot(tang[:, 0], tang[:, 1])
            nrm = np.c_[tang[:, 1], -tang[:, 0]] / jac[:, None]
            rvec = x - y[None, :]
            ndotr = np.einsum("mi,mi->m", nrm, rvec)
            total += np.einsum("m,mij->ij", w * jac * ndotr, kernel_S(y, x, mat))
    return total


def strongly_singular_S_volume(y, grid: FieldGrid, b0_field, mat, regions=None,
                               order=6):
    """S-kernel volume strain term for y inside the integrated volume.

    Splits off the constant b0(y): the remainder is weakly singular and
    integrated with apex triangles, while the constant part is converted to
    a boundary integral of S (n . r) over each region boundary.
    """
    inc = grid.inclusion
    if regions is None:
        regions = [(0.0, 1.0, 0.0, 1.0)]
    _, y_st = _locate_on_segment(inc, y)
    if y_st is None:
        raise ValueError("strongly singular path needs a point inside the inclusion")
    b0y = np.asarray(b0_field(np.array([y_st[0]]), np.array([y_st[1]])))[0]
    acc = volume_integral("S", y, grid, b0_field, mat, regions, order, subtract=b0y)
    for rect in regions:
        acc += region_boundary_matrix(y, inc, rect, mat) @ b0y
    return acc


# ---------------------------------------------------------------------------
# spec-level F0 operations


def f0_surface(y, grid: FieldGrid, mat, sigma0=None, order=6):
    """U-kernel load vector from the inclusion boundary tractions t0."""
    t0_field = lambda segment, u: grid.boundary_traction(segment, u, sigma0)
    return surface_integral("U", np.asarray(y, dtype=float), grid, t0_field, mat, order)


def f0_volume(y, grid: FieldGrid, mat, sigma0=None, mask=None, regions=None, order=4):
    """U-kernel load vector from the inclusion body forces b0."""
    b0_field = grid.body_force_field(sigma0)
    return volume_integral("U", np.asarray(y, dtype=float), grid, b0_field, mat,
                           regions, order)


class SourceQuadrature:
    """Per-iteration reusable integrator for one inclusion's initial stress.

    Nodal b0, the active-extent regions and baseline quadrature points with
    interpolated field values are all precomputed; an evaluation point then
    costs one vectorized kernel sweep plus refined treatment of the few
    cells/pieces it is close to (or inside).
    """

    def __init__(self, grid: FieldGrid, mat: IsotropicMaterial, sigma0=None,
                 mask=None, restrict_active=False, volume_order=4, surface_order=6):
        self.grid = grid
        self.mat = mat
        self.sigma0 = (grid.sigma0_inc if sigma0 is None
                       else np.asarray(sigma0, float)).copy()
        self._b0_field = grid.body_force_field(self.sigma0)
        if restrict_active and mask is not None:
            cells = mask[:-1, :-1] | mask[1:, :-1] | mask[:-1, 1:] | mask[1:, 1:]
            self.regions = subdivide_for_plastic_extent(grid, cells)
        else:
            self.regions = [(0.0, 1.0, 0.0, 1.0)]
        self.volume_order = volume_order
        self.surface_order = surface_order
        self.negligible = (np.abs(self.sigma0).max() == 0.0
                           or not self.regions)
        self._build_volume()
        self._build_surface()
        self._build_region_boundary()

    def b0_field(self, s, t):
        return self._b0_field(s, t)

    def t0_field(self, segment, u):
        return self.grid.boundary_traction(segment, u, self.sigma0)

    # -- precomputation -----------------------------------------------------

    def _build_volume(self):
        grid, inc = self.grid, self.grid.inclusion
        self.vcells = []     # (rect, slice, center, diam)
        xs, ws, bs = [], [], []
        pos = 0
        for i, j in _cells_in_regions(grid, self.regions):
            rect = (grid.s[i], grid.s[i + 1], grid.t[j], grid.t[j + 1])
            s, t, w = _cell_quadrature(inc, rect, None, self.volume_order)
            x = inc.map_to_global(s, t)
            _, det = inc.jacobian(s, t)
            xs.append(x)
            ws.append(w * det)
            bs.append(self.b0_field(s, t))
            lo = inc.map_to_global(np.array([rect[0]]), np.array([rect[2]]))[0]
            hi = inc.map_to_global(np.array([rect[1]]), np.array([rect[3]]))[0]
            self.vcells.append((rect, slice(pos, pos + len(s)),
                                0.5 * (lo + hi), np.hypot(*(hi - lo))))
            pos += len(s)
        self.vx = np.vstack(xs) if xs else np.zeros((0, 2))
        self.vw = np.concatenate(ws) if ws else np.zeros(0)
        self.vb = np.vstack(bs) if bs else np.zeros((0, 2))

    def _build_surface(self):
        grid, inc = self.grid, self.grid.inclusion
        self.spieces = []    # (segment, a, b, slice, center, size)
        xs, ws, ts = [], [], []
        pos = 0
        for segment in inc.segment_names():
            for a, b in _segment_pieces(grid, segment):
                u, w = gauss_on_interval(a, b, self.surface_order)
                x, _, jac = inc.trace_at_param(segment, u)
                xs.append(x)
                ws.append(w * jac)
                ts.append(self.t0_field(segment, u))
                size = float(np.sum(w * jac))
                self.spieces.append((segment, a, b, slice(pos, pos + len(u)),
                                     x[len(u) // 2].copy(), size))
                pos += len(u)
        self.sx = np.vstack(xs) if xs else np.zeros((0, 2))
        self.sw = np.concatenate(ws) if ws else np.zeros(0)
        self.st0 = np.vstack(ts) if ts else np.zeros((0, 2))

    def _build_region_boundary(self, order: int = 12):
        """Quadrature along every region boundary for the volume-to-surface
        identity; the integrand S (n . r) is bounded, so a fixed rule works."""
        inc = self.grid.inclusion
        xs, ns, ws = [], [], []
        for s0, s1, t0, t1 in self.regions:
            sides = [("s", t0, s0, s1), ("t", s1, t0, t1),
                     ("s", t1, s1, s0), ("t", s0, t1, t0)]
            for kind, fixed, a, b in sides:
                lo, hi = (a, b) if a < b else (b, a)
                if hi - lo < 1e-14:
                    continue
                u, w = gauss_on_interval(lo, hi, order)
                if kind == "s":
                    ss, tt = u, np.full_like(u, fixed)
                else:
                    ss, tt = np.full_like(u, fixed), u
                x = inc.map_to_global(ss, tt)
                J, _ = inc.jacobian(ss, tt)
                tang = J[:, 0, :] if kind == "s" else J[:, 1, :]
                if a > b:
                    tang = -tang
                jac = np.hypot(tang[:, 0], tang[:, 1])
                xs.append(x)
                ns.append(np.c_[tang[:, 1], -tang[:, 0]] / jac[:, None])
                ws.append(w * jac)
        self.rb_x = np.vstack(xs) if xs else np.zeros((0, 2))
        self.rb_n = np.vstack(ns) if ns else np.zeros((0, 2))
        self.rb_w = np.concatenate(ws) if ws else np.zeros(0)

    # -- evaluation ---------------------------------------------------------

    def _locate(self, y, y_st):
        if y_st == "auto":
            hits, st = _locate_on_segment(self.grid.inclusion, y)
            return hits, st
        if y_st is None:
            return {}, None
        s, t = y_st
        hits = {}
        tol = 1e-9
        if t <= tol:
            hits["curve_i"] = s
        if t >= 1.0 - tol:
            hits["curve_ii"] = s
        if s <= tol:
            hits["edge1"] = t
        if s >= 1.0 - tol:
            hits["edge2"] = t
        return hits, (s, t)

    def _surface_part(self, kernel, y, hits):
        inc = self.grid.inclusion
        K = _KERNELS[kernel]
        refine = []
        w = self.sw
        for k, (seg, a, b, sl, center, size) in enumerate(self.spieces):
            sing = hits.get(seg)
            if (sing is not None and a - 1e-12 <= sing <= b + 1e-12) \
                    or np.hypot(*(center - y)) < 1.5 * size:
                refine.append(k)
        if refine:
            w = w.copy()
            for k in refine:
                w[self.spieces[k][3]] = 0.0
        acc = np.einsum("m,mij,mj->i", w, K(y, self.sx, self.mat), self.st0)
        for k in refine:
            seg, a, b, _sl, _c, _s = self.spieces[k]
            u, wq = _piece_rule(inc, seg, a, b, y, hits.get(seg), self.surface_order)
            if len(u) == 0:
                continue
            x, _, jac = inc.trace_at_param(seg, u)
            t0 = self.t0_field(seg, u)
            acc += np.einsum("m,mij,mj->i", wq * jac, K(y, x, self.mat), t0)
        return acc

    def _volume_part(self, kernel, y, y_st, subtract=None):
        inc = self.grid.inclusion
        K = _KERNELS[kernel]
        refine = []
        for k, (rect, sl, center, diam) in enumerate(self.vcells):
            contains = (y_st is not None
                        and rect[0] - 1e-12 <= y_st[0] <= rect[1] + 1e-12
                        and rect[2] - 1e-12 <= y_st[1] <= rect[3] + 1e-12)
            if contains or np.hypot(*(center - y)) < 1.5 * diam:
                refine.append(k)
        w = self.vw
        if refine:
            w = w.copy()
            for k in refine:
                w[self.vcells[k][1]] = 0.0
        b = self.vb if subtract is None else self.vb - subtract[None, :]
        acc = np.einsum("m,mij,mj->i", w, K(y, self.vx, self.mat), b)
        if refine:
            ss, tt, ww = [], [], []
            for k in refine:
                rect, _sl, center, diam = self.vcells[k]
                n = int(np.clip(order_for(np.hypot(*(center - y)), diam),
                                self.volume_order, 16))
                s, t, wq = _cell_quadrature(inc, rect, y_st, n)
                ss.append(s)
                tt.append(t)
                ww.append(wq)
            s = np.concatenate(ss)
            t = np.concatenate(tt)
            wq = np.concatenate(ww)
            x = inc.map_to_global(s, t)
            _, det = inc.jacobian(s, t)
            b0 = self.b0_field(s, t)
            if subtract is not None:
                b0 = b0 - subtract[None, :]
            r2 = (x[:, 0] - y[0]) ** 2 + (x[:, 1] - y[1]) ** 2
            keep = r2 > (1e-13 * inc.diameter()) ** 2
            acc += np.einsum("m,mij,mj->i", (wq * det)[keep], K(y, x[keep], self.mat),
                             b0[keep])
        return acc

    def displacement_at(self, y, y_st="auto"):
        y = np.asarray(y, dtype=float)
        hits, st = self._locate(y, y_st)
        out = self._surface_part("U", y, hits)
        out += self._volume_part("U", y, st)
        return out

    def strain_at(self, y, y_st="auto"):
        y = np.asarray(y, dtype=float)
        hits, st = self._locate(y, y_st)
        out = self._surface_part("S", y, hits)
        inside = st is not None and any(
            r[0] - 1e-12 <= st[0] <= r[1] + 1e-12
            and r[2] - 1e-12 <= st[1] <= r[3] + 1e-12 for r in self.regions)
        if inside:
            b0y = np.asarray(self.b0_field(np.array([st[0]]), np.array([st[1]])))[0]
            out += self._volume_part("S", y, st, subtract=b0y)
            rvec = self.rb_x - y[None, :]
            ndotr = np.einsum("mi,mi->m", self.rb_n, rvec)
            out += np.einsum("m,mij->ij", self.rb_w * ndotr,
                             kernel_S(y, self.rb_x, self.mat)) @ b0y
        else:
            out += self._volume_part("S", y, st)
        return out

    def f0_vector(self, colloc_points):
        """Stacked F0 rows for a sequence of collocation points."""
        rows = [self.displacement_at(cp.point) for cp in colloc_points]
        return np.concatenate(rows)


# ---------------------------------------------------------------------------
# precomputed linear operators


def _b0_weight_matrix(grid: FieldGrid, s, t):
    """(m, 2, ns*nt*3) weights: nodal sigma0 -> b0 at parametric points.

    Same cell-wise differentiation as FieldGrid.body_force_field, expressed
    as an explicit linear map so iteration updates reduce to matvecs.
    """
    s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, 1.0)
    t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, 1.0)
    m = len(s)
    ns, nt = grid.ns, grid.nt
    i = np.clip((s / grid.ds).astype(int), 0, ns - 2)
    j = np.clip((t / grid.dt).astype(int), 0, nt - 2)
    a = s / grid.ds - i
    b = t / grid.dt - j
    J, det = grid.inclusion.jacobian(s, t)
    W = np.zeros((m, 2, ns * nt * 3))
    rows = np.arange(m)
    # corner weights of d/ds and d/dt of the bilinear interpolant
    corner_w = {
        (0, 0): (-(1 - b) / grid.ds, -(1 - a) / grid.dt),
        (1, 0): ((1 - b) / grid.ds, -a / grid.dt),
        (0, 1): (-b / grid.ds, (1 - a) / grid.dt),
        (1, 1): (b / grid.ds, a / grid.dt),
    }
    for (di, dj), (ws, wt) in corner_w.items():
        wx = (J[:, 1, 1] * ws - J[:, 0, 1] * wt) / det   # d/dx weight
        wy = (-J[:, 1, 0] * ws + J[:, 0, 0] * wt) / det  # d/dy weight
        base = ((i + di) * nt + (j + dj)) * 3
        np.add.at(W, (rows, 0, base + 0), -wx)
        np.add.at(W, (rows, 0, base + 2), -wy)
        np.add.at(W, (rows, 1, base + 2), -wx)
        np.add.at(W, (rows, 1, base + 1), -wy)
    return W


def _t0_weight_matrix(grid: FieldGrid, segment, u):
    """(m, 2, ns*nt*3) weights: nodal sigma0 -> t0 = sigma0 . n on a segment."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    m = len(u)
    ns, nt = grid.ns, grid.nt
    _, nrm, _ = grid.inclusion.trace_at_param(segment, u)
    if segment in ("curve_i", "curve_ii"):
        lines, step = grid.s, grid.ds
        k = np.clip((u / step).astype(int), 0, ns - 2)
        jfix = 0 if segment == "curve_i" else nt - 1
        n0 = k * nt + jfix
        n1 = (k + 1) * nt + jfix
    else:
        lines, step = grid.t, grid.dt
        k = np.clip((u / step).astype(int), 0, nt - 2)
        ifix = 0 if segment == "edge1" else ns - 1
        n0 = ifix * nt + k
        n1 = ifix * nt + (k + 1)
    alpha = u / step - k
    W = np.zeros((m, 2, ns * nt * 3))
    rows = np.arange(m)
    for node, wnode in ((n0, 1.0 - alpha), (n1, alpha)):
        base = node * 3
        np.add.at(W, (rows, 0, base + 0), wnode * nrm[:, 0])
        np.add.at(W, (rows, 0, base + 2), wnode * nrm[:, 1])
        np.add.at(W, (rows, 1, base + 1), wnode * nrm[:, 1])
        np.add.at(W, (rows, 1, base + 2), wnode * nrm[:, 0])
    return W


class SourceOperator:
    """Linear maps from one inclusion's nodal sigma0 to its load effects.

    The quadrature geometry never changes during the iteration, so the
    surface, volume and region-boundary integrals are assembled once into
    dense matrices; applying an initial-stress increment is then a matvec.
    Integration always covers the whole unit square (the integrand vanishes
    wherever sigma0 does).
    """

    def __init__(self, grid: FieldGrid, mat: IsotropicMaterial,
                 volume_order=4, surface_order=6):
        self.grid = grid
        self.mat = mat
        self.volume_order = volume_order
        self.surface_order = surface_order
        self.n3 = grid.ns * grid.nt * 3
        inc = grid.inclusion
        # surface pieces
        self.spieces = []
        xs, ws, Ts = [], [], []
        pos = 0
        for segment in inc.segment_names():
            for a, b in _segment_pieces(grid, segment):
                u, w = gauss_on_interval(a, b, surface_order)
                x, _, jac = inc.trace_at_param(segment, u)
                xs.append(x)
                ws.append(w * jac)
                Ts.append(_t0_weight_matrix(grid, segment, u))
                size = float(np.sum(w * jac))
                self.spieces.append((segment, a, b, slice(pos, pos + len(u)),
                                     x[len(u) // 2].copy(), size))
                pos += len(u)
        self.sx = np.vstack(xs)
        self.sw = np.concatenate(ws)
        self.sT = np.concatenate(Ts, axis=0)
        # volume cells
        self.vcells = []
        xs, ws, Bs = [], [], []
        pos = 0
        for i in range(grid.ns - 1):
            for j in range(grid.nt - 1):
                rect = (grid.s[i], grid.s[i + 1], grid.t[j], grid.t[j + 1])
                s, t, w = _cell_quadrature(inc, rect, None, volume_order)
                x = inc.map_to_global(s, t)
                _, det = inc.jacobian(s, t)
                xs.append(x)
                ws.append(w * det)
                Bs.append(_b0_weight_matrix(grid, s, t))
                lo = inc.map_to_global(np.array([rect[0]]), np.array([rect[2]]))[0]
                hi = inc.map_to_global(np.array([rect[1]]), np.array([rect[3]]))[0]
                self.vcells.append((rect, slice(pos, pos + len(s)),
                                    0.5 * (lo + hi), np.hypot(*(hi - lo))))
                pos += len(s)
        self.vx = np.vstack(xs)
        self.vw = np.concatenate(ws)
        self.vB = np.concatenate(Bs, axis=0)
        # region boundary of the full unit square (the inclusion boundary)
        xs, ns_, ws = [], [], []
        sides = [("s", 0.0, 0.0, 1.0), ("t", 1.0, 0.0, 1.0),
                 ("s", 1.0, 1.0, 0.0), ("t", 0.0, 1.0, 0.0)]
        for kind, fixed, a, b in sides:
            lo, hi = (a, b) if a < b else (b, a)
            u, w = gauss_on_interval(lo, hi, 12)
            ss, tt = (u, np.full_like(u, fixed)) if kind == "s" \
                else (np.full_like(u, fixed), u)
            x = inc.map_to_global(ss, tt)
            J, _ = inc.jacobian(ss, tt)
            tang = J[:, 0, :] if kind == "s" else J[:, 1, :]
            if a > b:
                tang = -tang
            jac = np.hypot(tang[:, 0], tang[:, 1])
            xs.append(x)
            ns_.append(np.c_[tang[:, 1], -tang[:, 0]] / jac[:, None])
            ws.append(w * jac)
        self.rb_x = np.vstack(xs)
        self.rb_n = np.vstack(ns_)
        self.rb_w = np.concatenate(ws)

    # -- per-point row assembly ---------------------------------------------

    def _surface_rows(self, kernel, y, hits):
        inc = self.grid.inclusion
        K = _KERNELS[kernel]
        refine = []
        w = self.sw
        for k, (seg, a, b, sl, center, size) in enumerate(self.spieces):
            sing = hits.get(seg)
            if (sing is not None and a - 1e-12 <= sing <= b + 1e-12) \
                    or np.hypot(*(center - y)) < 1.5 * size:
                refine.append(k)
        if refine:
            w = w.copy()
            for k in refine:
                w[self.spieces[k][3]] = 0.0
        KW = (K(y, self.sx, self.mat) * w[:, None, None])
        nk = KW.shape[1]
        rows = KW.transpose(1, 0, 2).reshape(nk, -1) @ \
            self.sT.reshape(-1, self.n3)
        for k in refine:
            seg, a, b, _sl, _c, _s = self.spieces[k]
            u, wq = _piece_rule(inc, seg, a, b, y, hits.get(seg),
                               self.surface_order)
            if len(u) == 0:
                continue
            x, _, jac = inc.trace_at_param(seg, u)
            T = _t0_weight_matrix(self.grid, seg, u)
            KW = K(y, x, self.mat) * (wq * jac)[:, None, None]
            rows += KW.transpose(1, 0, 2).reshape(nk, -1) @ T.reshape(-1, self.n3)
        return rows

    def _volume_rows(self, kernel, y, y_st, bracket=False):
        """Rows of the volume term; with bracket=True the constant b0(y) is
        split off and replaced by the region-boundary identity."""
        inc = self.grid.inclusion
        K = _KERNELS[kernel]
        refine = []
        for k, (rect, sl, center, diam) in enumerate(self.vcells):
            contains = (y_st is not None
                        and rect[0] - 1e-12 <= y_st[0] <= rect[1] + 1e-12
                        and rect[2] - 1e-12 <= y_st[1] <= rect[3] + 1e-12)
            if contains or np.hypot(*(center - y)) < 1.5 * diam:
                refine.append(k)
        w = self.vw
        if refine:
            w = w.copy()
            for k in refine:
                w[self.vcells[k][1]] = 0.0
        Kfar = K(y, self.vx, self.mat)
        nk = Kfar.shape[1]
        KW = Kfar * w[:, None, None]
        rows = KW.transpose(1, 0, 2).reshape(nk, -1) @ self.vB.reshape(-1, self.n3)
        ksum = np.einsum("m,mij->ij", w, Kfar)
        for k in refine:
            rect, _sl, center, diam = self.vcells[k]
            n = int(np.clip(order_for(np.hypot(*(center - y)), diam),
                            self.volume_order, 16))
            s, t, wq = _cell_quadrature(inc, rect, y_st, n)
            x = inc.map_to_global(s, t)
            _, det = inc.jacobian(s, t)
            r2 = (x[:, 0] - y[0]) ** 2 + (x[:, 1] - y[1]) ** 2
            keep = r2 > (1e-13 * inc.diameter()) ** 2
            wd = (wq * det) * keep
            Kr = K(y, np.where(keep[:, None], x, x + inc.diameter()), self.mat)
            B = _b0_weight_matrix(self.grid, s, t)
            KW = Kr * wd[:, None, None]
            rows += KW.transpose(1, 0, 2).reshape(nk, -1) @ B.reshape(-1, self.n3)
            ksum += np.einsum("m,mij->ij", wd, Kr)
        if bracket:
            Dy = _b0_weight_matrix(self.grid, np.array([y_st[0]]),
                                   np.array([y_st[1]]))[0]
            rvec = self.rb_x - y[None, :]
            ndotr = np.einsum("mi,mi->m", self.rb_n, rvec)
            rb = np.einsum("m,mij->ij", self.rb_w * ndotr,
                           kernel_S(y, self.rb_x, self.mat))
            rows += (rb - ksum) @ Dy
        return rows

    def _locate(self, y, y_st):
        if y_st == "auto":
            return _locate_on_segment(self.grid.inclusion, y)
        if y_st is None:
            return {}, None
        s, t = y_st
        hits = {}
        tol = 1e-9
        if t <= tol:
            hits["curve_i"] = s
        if t >= 1.0 - tol:
            hits["curve_ii"] = s
        if s <= tol:
            hits["edge1"] = t
        if s >= 1.0 - tol:
            hits["edge2"] = t
        return hits, (s, t)

    def displacement_rows(self, y, y_st="auto"):
        """(2, ns*nt*3) map sigma0 -> u(y)."""
        y = np.asarray(y, dtype=float)
        hits, st = self._locate(y, y_st)
        return self._surface_rows("U", y, hits) + self._volume_rows("U", y, st)

    def strain_rows(self, y, y_st="auto"):
        """(3, ns*nt*3) map sigma0 -> Voigt strain at y.

        The S-kernel volume term is only weakly singular in 2D and the
        apex-triangle rule regularizes it exactly, so no splitting of the
        constant b0(y) is needed here.
        """
        y = np.asarray(y, dtype=float)
        hits, st = self._locate(y, y_st)
        return (self._surface_rows("S", y, hits)
                + self._volume_rows("S", y, st))

    # -- aggregated operators ------------------------------------------------

    def nodal_strain_operator(self, target: FieldGrid, inset: float = 0.25):
        """(n_nodes*3, n3) operator to every node of the target grid.

        Edge nodes are evaluated `inset` of a cell inside the grid: the
        strain there is the one-sided limit from within the inclusion, and
        stepping off the edge keeps every evaluation point strictly inside
        both the inclusion and the domain.
        """
        own = target is self.grid
        sc = np.clip(target.s, inset * target.ds, 1.0 - inset * target.ds)
        tc = np.clip(target.t, inset * target.dt, 1.0 - inset * target.dt)
        rows = []
        for i in range(target.ns):
            for j in range(target.nt):
                y = target.inclusion.map_to_global([sc[i]], [tc[j]])[0]
                hint = (sc[i], tc[j]) if own else "auto"
                rows.append(self.strain_rows(y, y_st=hint))
        return np.vstack(rows)

    def f0_operator(self, colloc_points):
        """(2*len(colloc), n3) operator to the boundary load vector."""
        return np.vstack([self.displacement_rows(cp.point)
                          for cp in colloc_points])
