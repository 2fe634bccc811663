"""Inclusion geometry: two-curve linear blend map, Jacobians, boundary trace.

The inclusion volume is the image of the unit square under
    x(s, t) = (1 - t) * bottom(s) + t * top(s)
and its boundary is the closed loop bottom curve, right edge, top curve,
left edge.  Outward normals are oriented by probing a nearby interior point,
which keeps curved and flipped inputs honest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import IsotropicMaterial
from .nurbs import NurbsCurve

SEGMENTS = ("curve_i", "edge2", "curve_ii", "edge1")


class DegenerateMapError(ValueError):
    """The two-curve blend map is not injective (det J <= 0 somewhere)."""


@dataclass
class Inclusion:
    curve_i: NurbsCurve        # bottom
    curve_ii: NurbsCurve       # top
    material: IsotropicMaterial
    yield_model: Optional[object] = None
    grid_dims: tuple[int, int] = (20, 5)
    _edges: dict = field(init=False, repr=False)

    def __post_init__(self):
        ns, nt = self.grid_dims
        if ns < 2 or nt < 2:
            raise ValueError("grid dimensions must be at least 2x2")
        e1 = (self.curve_i.evaluate(0.0), self.curve_ii.evaluate(0.0))
        e2 = (self.curve_i.evaluate(1.0), self.curve_ii.evaluate(1.0))
        self._edges = {"edge1": e1, "edge2": e2}
        ss, tt = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 5), indexing="ij")
        _, det = self.jacobian(ss.ravel(), tt.ravel())
        if np.any(det <= 0):
            raise DegenerateMapError("two-curve map has non-positive Jacobian on sample grid")

    # -- volume map ---------------------------------------------------------

    def map_to_global(self, s, t):
        """Blend point(s); scalars -> (2,), arrays -> (m, 2)."""
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any((s < -1e-12) | (s > 1 + 1e-12) | (t < -1e-12) | (t > 1 + 1e-12)):
            raise ValueError("(s, t) outside the unit square")
        s = np.clip(s, 0.0, 1.0)
        t = np.clip(t, 0.0, 1.0)
        lo = self.curve_i.evaluate(s)
        hi = self.curve_ii.evaluate(s)
        pts = (1.0 - t)[:, None] * lo + t[:, None] * hi
        return pts[0] if scalar else pts

    def jacobian(self, s, t):
        """Jacobian matrices (rows d/ds, d/dt) and determinants."""
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo = self.curve_i.evaluate(s)
        hi = self.curve_ii.evaluate(s)
        dlo = self.curve_i.evaluate_derivative(s)
        dhi = self.curve_ii.evaluate_derivative(s)
        J = np.empty((len(s), 2, 2))
        J[:, 0, :] = (1.0 - t)[:, None] * dlo + t[:, None] * dhi
        J[:, 1, :] = hi - lo
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        return (J[0], det[0]) if scalar else (J, det)

    def area(self, n: int = 24) -> float:
        from .quadrature import gauss_rule_2d
        XY, W = gauss_rule_2d(n)
        s = 0.5 * (XY[:, 0] + 1.0)
        t = 0.5 * (XY[:, 1] + 1.0)
        _, det = self.jacobian(s, t)
        return float(np.sum(W * det) / 4.0)

    # -- boundary -----------------------------------------------------------

    def segment_names(self):
        """Boundary segments forming S0, zero-length edges dropped."""
        names = ["curve_i", "edge2", "curve_ii", "edge1"]
        scale = self.diameter()
        for e in ("edge1", "edge2"):
            a, b = self._edges[e]
            if np.hypot(*(b - a)) < 1e-12 * scale:
                names.remove(e)
        return names

    def diameter(self) -> float:
        pts = np.vstack([self.curve_i.control_points, self.curve_ii.control_points])
        span = pts.max(axis=0) - pts.min(axis=0)
        return float(max(np.hypot(*span), 1e-30))

    def _segment_point_tangent(self, segment, u):
        """Point and d(point)/du for u in [0, 1] along a segment."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if segment == "curve_i":
            return self.curve_i.evaluate(u), self.curve_i.evaluate_derivative(u)
        if segment == "curve_ii":
            return self.curve_ii.evaluate(u), self.curve_ii.evaluate_derivative(u)
        a, b = self._edges[segment]
        pts = a + u[:, None] * (b - a)
        tang = np.broadcast_to(b - a, pts.shape)
        return pts, tang

    def _inward_probe(self, segment, u, eps=1e-5):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if segment == "curve_i":
            return self.map_to_global(u, np.full_like(u, eps))
        if segment == "curve_ii":
            return self.map_to_global(u, np.full_like(u, 1.0 - eps))
        s = eps if segment == "edge1" else 1.0 - eps
        return self.map_to_global(np.full_like(u, s), u)

    def boundary_trace(self, segment: str, xi):
        """Points, outward unit normals and arc Jacobians at xi in [-1, 1].

        The Jacobian is d(arc length)/d(xi), i.e. |tangent| / 2 for the
        full segment parameterization.
        """
        if segment not in SEGMENTS:
            raise ValueError(f"unknown segment {segment!r}")
        xi = np.asarray(xi, dtype=float)
        scalar = xi.ndim == 0
        xi = np.atleast_1d(xi)
        u = 0.5 * (xi + 1.0)
        pts, normals, jac = self.trace_at_param(segment, u)
        jac = jac * 0.5
        if scalar:
            return pts[0], normals[0], jac[0]
        return pts, normals, jac

    def trace_at_param(self, segment: str, u):
        """Like boundary_trace but in the native u in [0, 1] parameter."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        pts, tang = self._segment_point_tangent(segment, u)
        jac = np.hypot(tang[:, 0], tang[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            that = tang / np.where(jac == 0.0, 1.0, jac)[:, None]
        normals = np.c_[that[:, 1], -that[:, 0]]
        inner = self._inward_probe(segment, u)
        flip = np.einsum("mi,mi->m", normals, inner - pts) > 0
        normals[flip] *= -1.0
        return pts, normals, jac

    # -- point location -----------------------------------------------------

    def locate(self, x, tol: float = 1e-10, boundary_slack: float = 1e-9):
        """Inverse map x -> (s, t); None when x is outside the closed square."""
        x = np.asarray(x, dtype=float)
        # cheap reject: the blend stays inside the control-point bounding box
        pts = np.vstack([self.curve_i.control_points, self.curve_ii.control_points])
        margin = 1e-9 * self.diameter()
        if np.any(x < pts.min(axis=0) - margin) or np.any(x > pts.max(axis=0) + margin):
            return None
        ss, tt = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 5), indexing="ij")
        pts = self.map_to_global(ss.ravel(), tt.ravel())
        k = int(np.argmin(np.einsum("mi,mi->m", pts - x, pts - x)))
        s, t = float(ss.ravel()[k]), float(tt.ravel()[k])
        scale = self.diameter()
        for _ in range(60):
            p = self.map_to_global(np.clip(s, 0, 1), np.clip(t, 0, 1))
            J, det = self.jacobian(np.clip(s, 0, 1), np.clip(t, 0, 1))
            res = x - p
            if np.hypot(*res) < tol * scale:
                break
            # rows of J are d/ds, d/dt so solve J^T [ds, dt] = res
            try:
                step = np.linalg.solve(J.T, res)
            except np.linalg.LinAlgError:
                return None
            s += float(np.clip(step[0], -0.25, 0.25))
            t += float(np.clip(step[1], -0.25, 0.25))
            if not (-0.5 < s < 1.5 and -0.5 < t < 1.5):
                return None
        else:
            return None
        if -boundary_slack <= s <= 1 + boundary_slack and -boundary_slack <= t <= 1 + boundary_slack:
            return float(np.clip(s, 0.0, 1.0)), float(np.clip(t, 0.0, 1.0))
        return None

    def contains(self, x, slack: float = 1e-9) -> bool:
        return self.locate(x, boundary_slack=slack) is not None
