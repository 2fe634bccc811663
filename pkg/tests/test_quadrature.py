"""Quadrature rule tests: exactness, interval helpers, triangle fans."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from igabem.quadrature import (adaptive_subintervals, gauss_on_interval,
                               gauss_rule_2d, graded_interval, split_interval_at,
                               triangle_quadrature, triangles_covering)


@given(n=st.integers(1, 12))
@settings(max_examples=12, deadline=None)
def test_gauss_exact_to_design_degree(n):
    a, b = -0.3, 1.7
    u, w = gauss_on_interval(a, b, n)
    for p in range(2 * n):
        exact = (b ** (p + 1) - a ** (p + 1)) / (p + 1)
        assert abs(w @ u ** p - exact) <= 1e-13 * max(1.0, abs(exact))


def test_gauss_2d_exact_on_monomials():
    XY, W = gauss_rule_2d(4)
    for p in range(6):
        for q in range(6):
            got = W @ (XY[:, 0] ** p * XY[:, 1] ** q)
            ex_p = 0.0 if p % 2 else 2.0 / (p + 1)
            ex_q = 0.0 if q % 2 else 2.0 / (q + 1)
            assert abs(got - ex_p * ex_q) < 1e-13


def test_triangle_quadrature_area_and_centroid():
    tri = (np.array([0.0, 0.0]), np.array([2.0, 0.0]), np.array([0.0, 1.0]))
    p, w = triangle_quadrature(tri, 6)
    assert abs(w.sum() - 1.0) < 1e-13            # area = 2*1/2
    assert abs(w @ p[:, 0] - 2.0 / 3.0) < 1e-13   # centroid * area
    assert abs(w @ p[:, 1] - 1.0 / 3.0) < 1e-13


def test_triangle_fan_covers_rectangle():
    region = (0.0, 1.0, 0.0, 0.5)
    apex = (0.3, 0.2)
    area = 0.0
    for tri in triangles_covering(region, apex):
        _, w = triangle_quadrature(tri, 4)
        area += w.sum()
    assert abs(area - 0.5) < 1e-12


def test_apex_triangle_regularizes_inverse_distance():
    # int over the triangle (apex, (1,0), (1,1)) of 1/r dA has the closed
    # form  int_0^{pi/4} sec(theta) dtheta = asinh(1)
    apex = np.array([0.0, 0.0])
    tri = (apex, np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    p, w = triangle_quadrature(tri, 24)
    got = w @ (1.0 / np.hypot(p[:, 0], p[:, 1]))
    assert abs(got - np.arcsinh(1.0)) < 1e-6


def test_interval_helpers_preserve_total_length():
    a, b = 0.2, 1.4
    for u0 in (0.2, 0.57, 1.4):
        u, w = split_interval_at(a, b, u0, 10)
        assert abs(w.sum() - (b - a)) < 1e-12
        assert np.all((u >= a) & (u <= b))
    pieces = adaptive_subintervals(a, b, 0.9)
    assert abs(sum(hi - lo for lo, hi in pieces) - (b - a)) < 1e-12


def test_graded_interval_clusters_near_singularity():
    u, w = graded_interval(0.0, 1.0, 0.0, 12)
    assert abs(w.sum() - 1.0) < 1e-12
    # more than half of the points land in the first third
    assert np.sum(u < 1.0 / 3.0) > len(u) / 2
