"""Boundary system tests: row sums, patch test, field evaluation."""

import numpy as np
import pytest

from igabem.assembly import (BoundaryCondition, BoundaryModel,
                             BoundarySolutionField, ModelError, assemble,
                             corrector_strain_rows)
from igabem.kernels import IsotropicMaterial
from igabem.materials import constitutive
from tests.conftest import linear_patch, square_model


def uniform_tension_model(sigma=2.0):
    """Unit square, nu = 0: uniform sigma_y with a clamped bottom is exact."""
    mat = IsotropicMaterial(100.0, 0.0, mode="plane_stress")
    top = BoundaryCondition("traction", [[0.0, sigma], [0.0, sigma]])
    return square_model(mat, top), mat, sigma


def test_rigid_body_row_sums_interior():
    model, _mat, _s = uniform_tension_model()
    system = assemble(model)
    N = model.n_nodes
    for n in range(N):
        rows = system.Tmat_full[2 * n: 2 * n + 2]
        rs = rows.reshape(2, N, 2).sum(axis=1)
        assert np.abs(rs).max() < 1e-8


def test_rigid_body_row_sums_exterior():
    from igabem.fixtures import load_fixture
    model, _ = load_fixture("hole_tension_cap")
    system = assemble(model.boundary)
    N = model.boundary.n_nodes
    for n in range(N):
        rows = system.Tmat_full[2 * n: 2 * n + 2]
        rs = rows.reshape(2, N, 2).sum(axis=1)
        assert np.abs(rs - np.eye(2)).max() < 1e-8


def test_patch_test_uniform_tension():
    model, mat, sigma = uniform_tension_model()
    system = assemble(model)
    sol = system.solve()
    eps_exact = sigma / mat.youngs_modulus
    for cp in model.colloc:
        u = sol.u_nodes[cp.index]
        assert abs(u[0]) < 1e-6
        assert abs(u[1] - eps_exact * cp.point[1]) < 1e-6
    # solved bottom reaction tractions equal -sigma * e_y
    bottom = sol.traction_coefs[2]
    assert np.abs(bottom[:, 0]).max() < 1e-5
    assert np.abs(bottom[:, 1] + sigma).max() < 1e-5


def test_interior_field_matches_uniform_state():
    model, mat, sigma = uniform_tension_model()
    system = assemble(model)
    sol = system.solve()
    bf = BoundarySolutionField(model, sol)
    C = constitutive(mat)
    eps_exact = np.linalg.solve(C, [0.0, sigma, 0.0])
    for y in [(0.5, 0.5), (0.2, 0.8), (0.85, 0.15)]:
        u = bf.displacement_at(np.asarray(y))
        assert abs(u[0]) < 1e-6
        assert abs(u[1] - y[1] * sigma / mat.youngs_modulus) < 1e-6
        eps = bf.strain_at(np.asarray(y))
        assert np.abs(eps - eps_exact).max() < 1e-6


def test_corrector_strain_rows_match_field(rng):
    model, _mat, _s = uniform_tension_model()
    system = assemble(model)
    F0 = rng.normal(size=2 * model.n_nodes) * 0.01
    sol = system.solve(F0, incremental=True)
    bf = BoundarySolutionField(model, sol)
    for y in [(0.4, 0.6), (0.9, 0.1)]:
        direct = bf.strain_at(np.asarray(y))
        via_rows = corrector_strain_rows(system, y) @ sol.z
        assert np.abs(direct - via_rows).max() < 1e-10


def test_incremental_solve_drops_loads():
    model, _mat, _s = uniform_tension_model()
    system = assemble(model)
    sol = system.solve(np.zeros(2 * model.n_nodes), incremental=True)
    assert not sol.includes_loads
    assert np.abs(sol.u_nodes).max() < 1e-12


def test_open_boundary_raises():
    mat = IsotropicMaterial(100.0, 0.0)
    patches = [
        linear_patch((0.0, 0.0), (1.0, 0.0), BoundaryCondition("fixed")),
        linear_patch((1.0, 0.5), (0.0, 0.5), BoundaryCondition("free")),
    ]
    with pytest.raises(ModelError):
        BoundaryModel(patches, mat)
