"""Gauss-Legendre rules, degenerate triangle maps and near-singular helpers."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

MAX_ORDER = 32


@lru_cache(maxsize=None)
def gauss_rule(n: int):
    """1D Gauss-Legendre points/weights on [-1, 1]; weights sum to 2."""
    x, w = leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def gauss_rule_2d(n: int):
    """Tensor rule on [-1, 1]^2; weights sum to 4."""
    x, w = gauss_rule(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return np.c_[X.ravel(), Y.ravel()], W.ravel()


def gauss_on_interval(a: float, b: float, n: int):
    """Points/weights integrating over [a, b]."""
    x, w = gauss_rule(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), w * half


def order_for(distance: float, size: float) -> int:
    """Gauss order heuristic from the element-size/distance ratio."""
    if distance <= 0:
        return MAX_ORDER
    return int(np.clip(4 + np.ceil(8.0 * size / distance), 4, MAX_ORDER))


def graded_interval(a: float, b: float, u0: float, n: int):
    """Quadrature on [a, b] with a Jacobian vanishing toward the endpoint u0.

    u0 must be a or b.  Uses the power transform u = u0 + (far - u0) * g^2,
    whose Jacobian 2 g |far - u0| tends to zero at the singular endpoint,
    cancelling logarithmic singularities.
    """
    far = b if u0 == a else a
    g, w = gauss_on_interval(0.0, 1.0, n)
    u = u0 + (far - u0) * g * g
    return u, w * 2.0 * g * abs(far - u0)


def split_interval_at(a: float, b: float, u0: float, n: int):
    """Quadrature on [a, b] singular at interior (or endpoint) u0."""
    us, ws = [], []
    if u0 - a > 1e-14 * max(1.0, abs(b - a)):
        u, w = graded_interval(a, u0, u0, n)
        us.append(u); ws.append(w)
    if b - u0 > 1e-14 * max(1.0, abs(b - a)):
        u, w = graded_interval(u0, b, u0, n)
        us.append(u); ws.append(w)
    return np.concatenate(us), np.concatenate(ws)


def adaptive_subintervals(a: float, b: float, closest: float, ratio: float = 0.5,
                         max_depth: int = 12):
    """Bisect [a, b] toward `closest` until children are 'far enough'.

    `closest` is the parameter of the nearest approach of the evaluation
    point; children whose distance-to-size ratio (measured in parameter
    space via the caller's metric) would still be poor are split further.
    Returns a list of (lo, hi) subintervals.  The caller applies its own
    distance test; this helper just produces the graded binary splitting.
    """
    out = []

    def rec(lo, hi, depth):
        if depth >= max_depth:
            out.append((lo, hi))
            return
        d = max(lo - closest, closest - hi, 0.0)
        if d >= ratio * (hi - lo):
            out.append((lo, hi))
            return
        mid = 0.5 * (lo + hi)
        rec(lo, mid, depth + 1)
        rec(mid, hi, depth + 1)

    rec(a, b, 0)
    return out


def triangles_covering(region, apex):
    """Fan of triangles covering an axis-aligned rectangle from an apex.

    region = (s0, s1, t0, t1); apex = (s*, t*) inside or on the rectangle.
    Degenerate triangles (apex on the corresponding edge) are dropped,
    giving the 2/3/4-triangle subdivisions for corner/edge/interior apexes.
    """
    s0, s1, t0, t1 = region
    corners = [(s0, t0), (s1, t0), (s1, t1), (s0, t1)]
    tris = []
    for k in range(4):
        b, c = corners[k], corners[(k + 1) % 4]
        area = 0.5 * abs((b[0] - apex[0]) * (c[1] - apex[1])
                         - (c[0] - apex[0]) * (b[1] - apex[1]))
        if area > 1e-14 * max(s1 - s0, t1 - t0) ** 2:
            tris.append((apex, b, c))
    return tris


def triangle_quadrature(tri, n: int):
    """Points and weights over a triangle via the degenerate square map.

    The square corners (-1,+-1) collapse onto the apex, so the map Jacobian
    is proportional to (1 + xi) and vanishes there, regularizing weak
    singularities located at the apex.
    """
    apex = np.asarray(tri[0], dtype=float)
    b = np.asarray(tri[1], dtype=float)
    c = np.asarray(tri[2], dtype=float)
    XY, W = gauss_rule_2d(n)
    lam = 0.5 * (1.0 + XY[:, 0])
    q = b + 0.5 * (1.0 + XY[:, 1])[:, None] * (c - b)
    pts = apex + lam[:, None] * (q - apex)
    cross = np.abs((q[:, 0] - apex[0]) * (c[1] - b[1]) - (q[:, 1] - apex[1]) * (c[0] - b[0]))
    jac = lam * cross / 4.0
    return pts, W * jac
