"""Regular (s, t) stress grid inside an inclusion.

Holds accumulated and per-iteration initial-stress fields, computes
finite-difference derivatives (mask-aware at the elasto-plastic front),
converts initial stress to body forces and boundary tractions, and
interpolates everything to arbitrary quadrature points.

Array layout: value[i, j, c] with i the s-index, j the t-index and c the
Voigt component.
"""

from __future__ import annotations

import numpy as np

from .geometry import Inclusion


def _fd_1d(values, h, axis, mask=None):
    """First derivative along axis; central inside, one-sided at boundaries.

    With a mask, stencils never straddle an active/inactive interface:
    nodes whose neighbor across lies in the other region fall back to a
    one-sided difference on their own side.
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    if n < 2:
        raise ValueError("need at least two grid points for finite differences")
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    d[0] = (v[1] - v[0]) / h
    d[-1] = (v[-1] - v[-2]) / h
    if mask is not None:
        m = np.moveaxis(np.asarray(mask, dtype=bool), axis, 0)
        same_next = np.zeros(v.shape, dtype=bool)
        same_prev = np.zeros(v.shape, dtype=bool)
        same_next[:-1] = m[:-1] == m[1:]
        same_prev[1:] = m[1:] == m[:-1]
        fwd = np.zeros_like(d)
        bwd = np.zeros_like(d)
        fwd[:-1] = (v[1:] - v[:-1]) / h
        bwd[1:] = (v[1:] - v[:-1]) / h
        inner = np.zeros(v.shape, dtype=bool)
        inner[1:-1] = True
        use_fwd = inner & ~same_prev & same_next
        use_bwd = inner & ~same_next & same_prev
        d = np.where(use_fwd, fwd, d)
        d = np.where(use_bwd, bwd, d)
    return np.moveaxis(d, 0, axis)


class FieldGrid:
    """Stress samples on a regular grid over the inclusion's unit square."""

    def __init__(self, inclusion: Inclusion, dims=None):
        self.inclusion = inclusion
        ns, nt = dims if dims is not None else inclusion.grid_dims
        if ns < 2 or nt < 2:
            raise ValueError("grid dimensions must be at least 2x2")
        self.ns, self.nt = int(ns), int(nt)
        self.ds = 1.0 / (self.ns - 1)
        self.dt = 1.0 / (self.nt - 1)
        self.s = np.linspace(0.0, 1.0, self.ns)
        self.t = np.linspace(0.0, 1.0, self.nt)
        ss, tt = np.meshgrid(self.s, self.t, indexing="ij")
        self.points = inclusion.map_to_global(ss.ravel(), tt.ravel()).reshape(self.ns, self.nt, 2)
        J, det = inclusion.jacobian(ss.ravel(), tt.ravel())
        self.jacobians = J.reshape(self.ns, self.nt, 2, 2)
        self.jacobian_dets = det.reshape(self.ns, self.nt)
        shape = (self.ns, self.nt, 3)
        self.sigma_bem = np.zeros(shape)      # accumulated C * eps from the solver
        self.sigma0_total = np.zeros(shape)   # accumulated initial stress
        self.sigma0_inc = np.zeros(shape)     # latest initial-stress increment
        self.active = np.zeros((self.ns, self.nt), dtype=bool)

    # -- derivatives --------------------------------------------------------

    def fd_local_derivatives(self, values, mask=None):
        """(d/ds, d/dt) of nodal values, shapes equal to `values`."""
        return (_fd_1d(values, self.ds, 0, mask), _fd_1d(values, self.dt, 1, mask))

    def global_stress_derivatives(self, values, mask=None):
        """(d/dx, d/dy) from local derivatives via the inverse Jacobian."""
        dvds, dvdt = self.fd_local_derivatives(values, mask)
        det = self.jacobian_dets
        if np.any(det == 0.0):
            raise ValueError("singular mapping Jacobian on grid")
        J = self.jacobians
        # inverse of [[xs, ys], [xt, yt]] applied to [d/ds, d/dt]
        dvdx = (J[..., 1, 1] * dvds - J[..., 0, 1] * dvdt) / det
        dvdy = (-J[..., 1, 0] * dvds + J[..., 0, 0] * dvdt) / det
        return dvdx, dvdy

    def body_force_field(self, sigma0=None):
        """Callable b0(s, t) = -div(sigma0) of the bilinear interpolant.

        Differentiating the interpolant cell by cell keeps the body force
        exactly consistent with the surface tractions sigma0 . n, so the
        represented stress field is self-equilibrated up to quadrature.
        The result is piecewise continuous (jumps across cell lines).
        """
        s0 = (self.sigma0_inc if sigma0 is None
              else np.asarray(sigma0, dtype=float))

        def field(s, t):
            s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, 1.0)
            t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, 1.0)
            i = np.clip((s / self.ds).astype(int), 0, self.ns - 2)
            j = np.clip((t / self.dt).astype(int), 0, self.nt - 2)
            a = (s / self.ds - i)[:, None]
            b = (t / self.dt - j)[:, None]
            v00, v10 = s0[i, j], s0[i + 1, j]
            v01, v11 = s0[i, j + 1], s0[i + 1, j + 1]
            dvds = ((1 - b) * (v10 - v00) + b * (v11 - v01)) / self.ds
            dvdt = ((1 - a) * (v01 - v00) + a * (v11 - v10)) / self.dt
            J, det = self.inclusion.jacobian(s, t)
            dvdx = (J[:, 1, 1, None] * dvds - J[:, 0, 1, None] * dvdt) / det[:, None]
            dvdy = (-J[:, 1, 0, None] * dvds + J[:, 0, 0, None] * dvdt) / det[:, None]
            out = np.empty((len(s), 2))
            out[:, 0] = -(dvdx[:, 0] + dvdy[:, 2])
            out[:, 1] = -(dvdx[:, 2] + dvdy[:, 1])
            return out

        return field

    def body_force(self, sigma0=None, mask=None):
        """Nodal body force -div(sigma0), shape (ns, nt, 2)."""
        s0 = self.sigma0_inc if sigma0 is None else np.asarray(sigma0, dtype=float)
        dsx_dx, _ = self.global_stress_derivatives(s0[..., 0], mask)
        dsy_dx, dsy_dy = self.global_stress_derivatives(s0[..., 1], mask)
        dt_dx, dt_dy = self.global_stress_derivatives(s0[..., 2], mask)
        b = np.empty((self.ns, self.nt, 2))
        b[..., 0] = -(dsx_dx + dt_dy)
        b[..., 1] = -(dt_dx + dsy_dy)
        return b

    # -- interpolation ------------------------------------------------------

    def interpolate(self, s, t, values):
        """Bilinear interpolation of nodal values at (s, t) arrays."""
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, 1.0)
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, 1.0)
        v = np.asarray(values, dtype=float)
        i = np.clip((s / self.ds).astype(int), 0, self.ns - 2)
        j = np.clip((t / self.dt).astype(int), 0, self.nt - 2)
        a = s / self.ds - i
        b = t / self.dt - j
        while a.ndim < v.ndim - 1:
            a = a[..., None]
            b = b[..., None]
        return ((1 - a) * (1 - b) * v[i, j] + a * (1 - b) * v[i + 1, j]
                + (1 - a) * b * v[i, j + 1] + a * b * v[i + 1, j + 1])

    def boundary_sigma0(self, segment, u, sigma0=None):
        """Initial stress linearly interpolated along a boundary segment."""
        s0 = self.sigma0_inc if sigma0 is None else sigma0
        u = np.atleast_1d(np.asarray(u, dtype=float))
        zeros = np.zeros_like(u)
        if segment == "curve_i":
            return self.interpolate(u, zeros, s0)
        if segment == "curve_ii":
            return self.interpolate(u, zeros + 1.0, s0)
        if segment == "edge1":
            return self.interpolate(zeros, u, s0)
        return self.interpolate(zeros + 1.0, u, s0)

    def boundary_traction(self, segment, u, sigma0=None):
        """t0 = sigma0 . n along a boundary segment at parameters u."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        sig = self.boundary_sigma0(segment, u, sigma0)
        _, n, _ = self.inclusion.trace_at_param(segment, u)
        t = np.empty((len(u), 2))
        t[:, 0] = sig[:, 0] * n[:, 0] + sig[:, 2] * n[:, 1]
        t[:, 1] = sig[:, 2] * n[:, 0] + sig[:, 1] * n[:, 1]
        return t

    # -- bookkeeping --------------------------------------------------------

    def update_active(self, threshold: float = 0.0):
        mag = np.abs(self.sigma0_inc).max(axis=-1)
        ref = mag.max()
        self.active = mag > max(threshold, 1e-14 * max(ref, 1.0))
        return self.active

    def active_cells(self):
        """Boolean (ns-1, nt-1) mask of cells touching any active node."""
        a = self.active
        return a[:-1, :-1] | a[1:, :-1] | a[:-1, 1:] | a[1:, 1:]

    def true_stress(self, virgin=None):
        """Physical stress: virgin + accumulated C*eps - accumulated sigma0."""
        sig = self.sigma_bem - self.sigma0_total
        if virgin is not None:
            sig = sig + np.asarray(virgin, dtype=float)
        return sig

    def dump_csv(self, path, virgin=None):
        sig = self.true_stress(virgin)
        rows = []
        for i in range(self.ns):
            for j in range(self.nt):
                rows.append([self.s[i], self.t[j], *self.points[i, j],
                             *sig[i, j], *self.sigma0_total[i, j]])
        header = "s,t,x,y,sig_x,sig_y,tau_xy,sig0_x,sig0_y,tau0_xy"
        np.savetxt(path, np.array(rows), delimiter=",", header=header, comments="")
