"""Initial-stress load integration tests."""

import numpy as np
import pytest

from igabem.field_grid import FieldGrid
from igabem.kernels import IsotropicMaterial, kernel_S
from igabem.quadrature import gauss_on_interval
from igabem.volume import (SourceOperator, SourceQuadrature, f0_surface,
                           f0_volume, region_boundary_matrix,
                           strongly_singular_S_volume,
                           subdivide_for_plastic_extent)
from tests.conftest import band_inclusion, curved_inclusion


def random_sigma0(grid, rng, scale=0.5):
    return scale * rng.normal(size=(grid.ns, grid.nt, 3))


def test_zero_sigma0_gives_zero_loads(mat):
    grid = FieldGrid(band_inclusion(mat, dims=(6, 4)))
    y = np.array([2.0, 2.0])
    assert np.abs(f0_surface(y, grid, mat)).max() == 0.0
    assert np.abs(f0_volume(y, grid, mat)).max() == 0.0
    src = SourceQuadrature(grid, mat)
    assert src.negligible


def pv_volume_of_S(y, inc, rect, mat, eps=1e-7, n_theta=4000, n_r=40):
    """Principal-value int over the mapped rect of S(y, x) dV by polar rays.

    Radial integration is log-graded from eps to the region boundary; the
    angular average of the 1/r^2 kernel vanishes, so the eps -> 0 limit
    exists and small eps suffices.
    """
    s0, s1, t0, t1 = rect
    # polygon of the mapped rectangle (affine enough per side for ray casting)
    corners = []
    n_side = 320
    for (sa, ta, sb, tb) in [(s0, t0, s1, t0), (s1, t0, s1, t1),
                             (s1, t1, s0, t1), (s0, t1, s0, t0)]:
        lam = np.linspace(0, 1, n_side, endpoint=False)
        ss = sa + lam * (sb - sa)
        tt = ta + lam * (tb - ta)
        corners.append(inc.map_to_global(ss, tt))
    poly = np.vstack(corners)
    thetas = (np.arange(n_theta) + 0.5) * 2 * np.pi / n_theta
    dtheta = 2 * np.pi / n_theta
    dirs = np.c_[np.cos(thetas), np.sin(thetas)]
    edges = np.roll(poly, -1, axis=0) - poly
    # distance to the polygon boundary along every ray (rays x edges)
    q = poly - y
    denom = dirs[:, 0:1] * (-edges[None, :, 1]) \
        - dirs[:, 1:2] * (-edges[None, :, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        rr = (q[:, 0] * (-edges[:, 1]) - q[:, 1] * (-edges[:, 0]))[None, :] / denom
        lam = (dirs[:, 0:1] * q[None, :, 1] - dirs[:, 1:2] * q[None, :, 0]) / denom
    hit = (np.abs(denom) > 1e-14) & (rr > 0) \
        & (lam >= -1e-12) & (lam <= 1 + 1e-12)
    rho = np.where(hit, rr, np.inf).min(axis=1)
    assert np.all(np.isfinite(rho)), "a ray missed the polygon boundary"
    # log-graded radial rule per ray: substitute r = exp(v)
    v, wv = gauss_on_interval(0.0, 1.0, n_r)
    lo = np.log(eps)
    vv = lo + v[None, :] * (np.log(rho)[:, None] - lo)
    ww = wv[None, :] * (np.log(rho)[:, None] - lo)
    r = np.exp(vv)
    x = (y[None, None, :] + r[..., None] * dirs[:, None, :]).reshape(-1, 2)
    S = kernel_S(y, x, mat)
    return dtheta * np.einsum("m,mij->ij", (ww * r * r).ravel(), S)


def test_volume_to_surface_identity_against_pv(mat):
    inc = curved_inclusion(mat)
    rect = (0.1, 0.9, 0.2, 0.8)
    y = inc.map_to_global(0.45, 0.55)
    surface_form = region_boundary_matrix(y, inc, rect, mat, order=12)
    pv = pv_volume_of_S(y, inc, rect, mat)
    scale = max(np.abs(surface_form).max(), 1e-30)
    assert np.abs(surface_form - pv).max() / scale < 1e-4


def test_strongly_singular_volume_matches_plain_weakly_singular(mat):
    """Both interior S-volume evaluations must agree: the
    divergence-plus-boundary (bracket) path and the plain apex-triangle
    integration used by the operator path.  The two schemes only share
    quadrature away from the field point, so the comparison uses a smooth
    source field and a discretization-level tolerance."""
    grid = FieldGrid(band_inclusion(mat, dims=(8, 5)))
    x, yc = grid.points[..., 0], grid.points[..., 1]
    grid.sigma0_inc = np.stack(
        [np.sin(2 * x) * yc, np.cos(yc) + 0.3 * x, 0.2 * x * yc], axis=-1)
    quad = SourceQuadrature(grid, mat)
    op = SourceOperator(grid, mat)
    for st in [(0.42, 0.47), (0.66, 0.21)]:
        y = grid.inclusion.map_to_global(*st)
        bracket = quad.strain_at(y, y_st=st)
        plain = op.strain_rows(y, y_st=st) @ grid.sigma0_inc.ravel()
        assert np.abs(bracket - plain).max() < 1e-2 * np.abs(bracket).max()


def test_source_operator_matches_quadrature_outside(mat, rng):
    grid = FieldGrid(band_inclusion(mat, dims=(8, 5)))
    grid.sigma0_inc = random_sigma0(grid, rng)
    quad = SourceQuadrature(grid, mat)
    op = SourceOperator(grid, mat)
    flat = grid.sigma0_inc.ravel()
    for y in [(2.0, 1.5), (-0.4, 0.5), (0.5, 0.95)]:
        y = np.asarray(y)
        assert np.abs(op.displacement_rows(y) @ flat
                      - quad.displacement_at(y)).max() < 1e-9
        assert np.abs(op.strain_rows(y) @ flat
                      - quad.strain_at(y)).max() < 1e-9


def test_f0_operator_matches_f0_vector(mat, rng):
    from igabem.assembly import BoundaryCondition, assemble
    from tests.conftest import square_model
    model = square_model(mat, BoundaryCondition("traction",
                                                [[0.0, 1.0], [0.0, 1.0]]))
    grid = FieldGrid(band_inclusion(mat, dims=(6, 4)))
    grid.sigma0_inc = random_sigma0(grid, rng)
    quad = SourceQuadrature(grid, mat)
    op = SourceOperator(grid, mat)
    direct = quad.f0_vector(model.colloc)
    via_op = op.f0_operator(model.colloc) @ grid.sigma0_inc.ravel()
    assert np.abs(direct - via_op).max() < 1e-9 * max(np.abs(direct).max(), 1.0)


def test_strongly_singular_path_requires_inside_point(mat):
    grid = FieldGrid(band_inclusion(mat, dims=(5, 3)))
    b0 = grid.body_force_field(np.ones((5, 3, 3)))
    with pytest.raises(ValueError):
        strongly_singular_S_volume(np.array([5.0, 5.0]), grid, b0, mat)


def test_subdivide_for_plastic_extent_covers_active_cells(mat):
    grid = FieldGrid(band_inclusion(mat, dims=(7, 4)))
    mask = np.zeros((6, 3), dtype=bool)
    mask[1:3, 0:2] = True
    mask[4, 2] = True
    regions = subdivide_for_plastic_extent(grid, mask)
    # every active cell center must lie inside some region
    for i in range(6):
        for j in range(3):
            if not mask[i, j]:
                continue
            sc = 0.5 * (grid.s[i] + grid.s[i + 1])
            tc = 0.5 * (grid.t[j] + grid.t[j + 1])
            assert any(r[0] <= sc <= r[1] and r[2] <= tc <= r[3]
                       for r in regions)
