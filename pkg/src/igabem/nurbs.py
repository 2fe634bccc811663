"""NURBS curve evaluation (Cox-de Boor) for geometry and field approximation.

Curves are clamped and parameterized on the knot interval, normally [0, 1].
The same basis machinery serves geometry curves (with control points) and
field bases (knots + weights only, coefficients supplied elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Parameter outside the knot range."""


def _as_points(u):
    u = np.asarray(u, dtype=float)
    return u, u.ndim == 0


def find_span(knots: np.ndarray, degree: int, u: np.ndarray) -> np.ndarray:
    """Index i of the knot span [knots[i], knots[i+1]) containing each u."""
    n_basis = len(knots) - degree - 1
    span = np.searchsorted(knots, u, side="right") - 1
    return np.clip(span, degree, n_basis - 1)


def bspline_basis(knots, degree, u):
    """Nonzero B-spline basis values and first derivatives at each u.

    Returns (span, N, dN) with N, dN of shape (len(u), degree+1); the
    nonzero functions at u are indices span-degree .. span.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    m = len(u)
    span = find_span(knots, degree, u)
    ndu = np.ones((m, 1))
    prev = ndu
    left = np.empty((m, degree + 1))
    right = np.empty((m, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = u - knots[span + 1 - j]
        right[:, j] = knots[span + j] - u
        cur = np.empty((m, j + 1))
        saved = np.zeros(m)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.where(denom != 0.0, prev[:, r] / np.where(denom == 0.0, 1.0, denom), 0.0)
            cur[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        cur[:, j] = saved
        if j == degree:
            # derivative from the degree-1 row:  p * (N_{i,p-1}/d1 - N_{i+1,p-1}/d2)
            dN = np.zeros((m, degree + 1))
            for r in range(degree + 1):
                i = span - degree + r
                d1 = knots[i + degree] - knots[i]
                d2 = knots[i + degree + 1] - knots[i + 1]
                t1 = np.where(d1 > 0, (prev[:, r - 1] if r > 0 else 0.0) / np.where(d1 == 0, 1, d1), 0.0)
                t2 = np.where(d2 > 0, (prev[:, r] if r < degree else 0.0) / np.where(d2 == 0, 1, d2), 0.0)
                dN[:, r] = degree * (t1 - t2)
        prev = cur
    if degree == 0:
        dN = np.zeros((m, 1))
    return span, prev, dN


def _check_knots(knots, degree, n_ctrl):
    knots = np.asarray(knots, dtype=float)
    if len(knots) != n_ctrl + degree + 1:
        raise ValueError(
            f"knot count {len(knots)} != control point count {n_ctrl} + degree {degree} + 1"
        )
    if np.any(np.diff(knots) < 0):
        raise ValueError("knot vector must be non-decreasing")
    if not (np.allclose(knots[: degree + 1], knots[0]) and np.allclose(knots[-degree - 1:], knots[-1])):
        raise ValueError("knot vector must be clamped (first/last knot repeated degree+1 times)")
    return knots


@dataclass(frozen=True)
class SplineBasis:
    """A (rational) spline basis: knots, degree and weights, no geometry."""

    degree: int
    knots: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "knots", np.asarray(self.knots, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        _check_knots(self.knots, self.degree, len(self.weights))
        if np.any(self.weights <= 0):
            raise ValueError("all weights must be positive")

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def u_min(self) -> float:
        return float(self.knots[0])

    @property
    def u_max(self) -> float:
        return float(self.knots[-1])

    def _check_range(self, u):
        if np.any(u < self.u_min - 1e-12) or np.any(u > self.u_max + 1e-12):
            raise DomainError(f"parameter outside knot range [{self.u_min}, {self.u_max}]")

    def basis_matrix(self, u):
        """Dense (m, size) matrix of rational basis values."""
        R, _ = self.basis_and_derivative(u)
        return R

    def basis_and_derivative(self, u):
        """Dense rational basis values and parametric derivatives, (m, size) each."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        self._check_range(u)
        u = np.clip(u, self.u_min, self.u_max)
        span, N, dN = bspline_basis(self.knots, self.degree, u)
        m = len(u)
        K = self.size
        B = np.zeros((m, K))
        dB = np.zeros((m, K))
        cols = span[:, None] - self.degree + np.arange(self.degree + 1)[None, :]
        rows = np.repeat(np.arange(m), self.degree + 1)
        B[rows, cols.ravel()] = N.ravel()
        dB[rows, cols.ravel()] = dN.ravel()
        Bw = B * self.weights
        dBw = dB * self.weights
        W = Bw.sum(axis=1)
        dW = dBw.sum(axis=1)
        R = Bw / W[:, None]
        dR = (dBw - R * dW[:, None]) / W[:, None]
        return R, dR

    def greville(self) -> np.ndarray:
        """Greville abscissae (knot averages), the natural collocation params."""
        p = self.degree
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        return np.array([self.knots[k + 1: k + p + 1].mean() for k in range(self.size)])

    def breakpoints(self) -> np.ndarray:
        """Distinct knot values (span boundaries)."""
        return np.unique(self.knots)


@dataclass(frozen=True)
class NurbsCurve:
    """Weighted rational curve: knots, 2D control points, weights."""

    degree: int
    knots: np.ndarray
    control_points: np.ndarray
    weights: np.ndarray
    basis: SplineBasis = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.control_points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "control_points", pts)
        b = SplineBasis(self.degree, self.knots, self.weights)
        object.__setattr__(self, "knots", b.knots)
        object.__setattr__(self, "weights", b.weights)
        object.__setattr__(self, "basis", b)
        if len(pts) != b.size:
            raise ValueError("control point count does not match basis size")

    def evaluate(self, u):
        """Point(s) on the curve; scalar u -> (2,), array u -> (m, 2)."""
        u, scalar = _as_points(u)
        R = self.basis.basis_matrix(u)
        pts = R @ self.control_points
        return pts[0] if scalar else pts

    def evaluate_derivative(self, u):
        """Parametric tangent(s) dx/du."""
        u, scalar = _as_points(u)
        _, dR = self.basis.basis_and_derivative(u)
        tang = dR @ self.control_points
        return tang[0] if scalar else tang

    def greville(self) -> np.ndarray:
        return self.basis.greville()

    def breakpoints(self) -> np.ndarray:
        return self.basis.breakpoints()


def elevated_knot_vector(knots, degree, times: int) -> tuple[np.ndarray, int]:
    """Knot vector of the degree-elevated spline space.

    Degree elevation by `times` raises every distinct knot's multiplicity by
    `times`; the elevated space contains the original one.
    """
    if times < 0:
        raise ValueError("elevation count must be non-negative")
    if times == 0:
        return np.asarray(knots, dtype=float), degree
    vals, counts = np.unique(np.asarray(knots, dtype=float), return_counts=True)
    out = np.repeat(vals, counts + times)
    return out, degree + times


def uniform_basis(degree: int, n_spans: int, u0: float = 0.0, u1: float = 1.0) -> SplineBasis:
    """Clamped unit-weight basis with uniform interior knots."""
    interior = np.linspace(u0, u1, n_spans + 1)[1:-1]
    knots = np.concatenate([[u0] * (degree + 1), interior, [u1] * (degree + 1)])
    return SplineBasis(degree, knots, np.ones(len(knots) - degree - 1))
