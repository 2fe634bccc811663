"""End-to-end acceptance checks for the bundled example problems.

Each test prints one PASS/FAIL line (bypassing pytest's capture) so the
outcome of every criterion is visible in the run log.
"""

import sys

import numpy as np
import pytest

from igabem.assembly import BoundaryCondition, assemble
from igabem.driver import IterationConfig, run_iteration, yield_residual
from igabem.fixtures import load_fixture
from igabem.kernels import (IsotropicMaterial, kernel_R, kernel_S, kernel_T,
                            kernel_U)
from igabem.quadrature import gauss_on_interval, gauss_rule
from igabem.volume import SourceOperator, region_boundary_matrix
from tests.conftest import band_inclusion, curved_inclusion, square_model
from tests.test_field_grid import total_load_residual
from tests.test_kernels import fd_strain_of
from tests.test_volume import pv_volume_of_S


@pytest.fixture
def report(request):
    """Emit one visible PASS/FAIL line per criterion, despite capture."""
    terminal = request.config.pluginmanager.getplugin("terminalreporter")

    def _report(num, label, ok, detail):
        mark = "PASS" if ok else "FAIL"
        line = f"ACCEPTANCE {num} [{label}]: {mark} ({detail})"
        if terminal is not None:
            terminal.write_line("\n" + line)
        else:
            print(line, file=sys.__stdout__, flush=True)

    return _report


def first_within(history, band):
    """First iteration whose metric lies within 1 +/- band (or None)."""
    for rec in history:
        if abs(rec.metric - 1.0) <= band:
            return rec.iteration
    return None


def test_criterion_1_soft_band_displacement_ratio(report):
    model, config = load_fixture("band")
    state, history, converged = run_iteration(model, config)
    hit = first_within(history, 0.005)
    elapsed = history[-1].elapsed
    ok = converged and hit is not None and hit <= 10 and elapsed < 10.0
    report(1, "soft band, displacement ratio", ok,
           f"metric {history[-1].metric:.6f}, within 0.005 at iteration {hit}, "
           f"{elapsed:.1f} s")
    assert converged
    assert hit is not None and hit <= 10
    assert elapsed < 10.0


def test_criterion_2_capped_band_moment_ratio(report):
    model, config = load_fixture("bend_capped_band")
    state, history, converged = run_iteration(model, config)
    hit = first_within(history, 0.01)
    limit = model.inclusions[0].yield_model.limit
    residual = yield_residual(state)
    elapsed = history[-1].elapsed
    ok = (converged and hit is not None and hit <= 12
          and residual <= 1e-3 * limit and elapsed < 30.0)
    report(2, "stress-capped band, moment ratio", ok,
           f"metric {history[-1].metric:.6f}, within 0.01 at iteration {hit}, "
           f"yield residual {residual:.3g} vs cap {limit:.4f}, {elapsed:.1f} s")
    assert converged
    assert hit is not None and hit <= 12
    assert residual <= 1e-3 * limit
    assert elapsed < 30.0


def test_criterion_3_hole_grid_independence_and_cap(report):
    results = {}
    elapsed = 0.0
    for npts in (30, 40):
        model, config = load_fixture("hole_tension_cap",
                                     grid_override=(npts, 5))
        state, history, converged = run_iteration(model, config)
        assert converged, f"{npts}-point grid did not converge"
        results[npts] = (state, history[-1].metric)
        elapsed += history[-1].elapsed
    diff = abs(results[40][1] - results[30][1]) / results[40][1]

    state = results[40][0]
    grid = state.grids[0]
    plastic = np.any(grid.sigma0_total != 0.0, axis=-1)
    sig_y = grid.true_stress(state.model.virgin_stress)[..., 1]
    worst = float(sig_y[plastic].max())
    ok = diff < 0.005 and worst <= 0.5 * (1 + 1e-2) and elapsed < 60.0
    report(3, "hole with tensile cap, grid independence", ok,
           f"top displacement differs {100 * diff:.2f}% between grids, "
           f"peak capped sigma_y {worst:.4f} over {int(plastic.sum())} "
           f"plastic nodes, {elapsed:.1f} s")
    assert diff < 0.005
    assert plastic.any()
    assert worst <= 0.5 * (1 + 1e-2)
    assert elapsed < 60.0


# Converged boundary displacements of the cavern example, captured from the
# first verified run (24 collocation nodes, x and y components).
CAVERN_U = np.array([
    [0.00471443909547815, -0.01264099119219678],
    [0.00206358485682081, -0.01524753295369772],
    [0.00145811602462323, -0.01944176774600959],
    [0.00012891609480621, -0.02925988674331068],
    [-0.00057093070384103, -0.02394812515392922],
    [-0.00659809672032771, -0.02988768934005965],
    [-0.00310935756171239, -0.02173481352249461],
    [-0.00133167148997138, -0.01222436763354421],
    [-0.00577737976342248, -0.00888269162843335],
    [-0.00560603927841953, -0.00502379027444393],
    [-0.02037351705358171, -0.00388650444139894],
    [-0.04297681121389424, -0.00205348669331301],
    [-0.01050174191314581, 0.00347331894175361],
    [-0.01111662040353482, 0.0023478527355924],
    [-0.00235925778844751, 0.01187568100465308],
    [0.00018383576033099, 0.03889217280288668],
    [0.0022941302472923, 0.01294268793979421],
    [0.00412001182825208, 0.00514933093846296],
    [0.02062872774189028, 0.00405320627308608],
    [0.03786756326938201, 0.00368773797338747],
    [0.01374560518496744, -0.00241131054773337],
    [0.01265568929964135, -0.00570138129538596],
    [0.02841740076461371, -0.00638704901781289],
    [0.04201237511272778, -0.00547244317689991],
])


def test_criterion_4_cavern_practical_example(report):
    model, config = load_fixture("cavern")
    state, history, converged = run_iteration(model, config)
    elapsed = history[-1].elapsed

    active = [bool(np.any(g.sigma0_total)) for g in state.grids]
    u = state.solution.u_nodes
    finite = bool(np.all(np.isfinite(u)))
    pts = np.array([cp.point for cp in model.boundary.colloc])
    centroid = pts.mean(axis=0)
    inward = bool(np.all(np.einsum("ij,ij->i", u, centroid - pts) > 0.0))

    cohesion, phi = 0.73, np.radians(30.0)
    threshold = 1e-3 * 2 * cohesion * np.cos(phi)
    residual = yield_residual(state)
    pinned = bool(np.allclose(u, CAVERN_U, rtol=0.0, atol=1e-7))

    ok = (converged and all(active) and finite and inward
          and residual <= threshold and pinned and elapsed < 300.0)
    report(4, "cavern with four weakness zones", ok,
           f"{history[-1].iteration} iterations, yield residual "
           f"{residual:.3g} vs {threshold:.3g}, max |u| {np.abs(u).max():.5f}, "
           f"{'pinned' if pinned else 'PIN DRIFT'}, {elapsed:.0f} s")
    assert converged
    assert all(active), "every weakness zone must develop initial stress"
    assert finite and inward
    assert residual <= threshold
    assert pinned, "displacement field drifted from the pinned reference"
    assert elapsed < 300.0


def test_criterion_5_property_suite(report):
    mat = IsotropicMaterial(100.0, 0.3, mode="plane_stress")
    results = []

    # rigid-body row sums of the interior double-layer matrix
    model = square_model(mat, BoundaryCondition(
        "traction", [[0.0, 2.0], [0.0, 2.0]]))
    system = assemble(model)
    N = model.n_nodes
    rs = max(np.abs(system.Tmat_full[2 * n: 2 * n + 2]
                    .reshape(2, N, 2).sum(axis=1)).max() for n in range(N))
    results.append(("row sums", rs, 1e-8))

    # equal-material inclusion: one iteration, vanishing corrector load
    from igabem.driver import ProblemModel
    problem = ProblemModel(model, [band_inclusion(mat, dims=(7, 3))])
    state, history, converged = run_iteration(problem, IterationConfig())
    assert converged and len(history) == 1
    grid = state.grids[0]
    op = SourceOperator(grid, mat)
    F0 = op.f0_operator(model.colloc) @ grid.sigma0_total.ravel()
    results.append(("patch-test load norm", float(np.linalg.norm(F0)), 1e-12))

    # volume-to-surface identity for the strain kernel over a curved region
    inc = curved_inclusion(mat)
    rect = (0.1, 0.9, 0.2, 0.8)
    yv = inc.map_to_global(0.45, 0.55)
    sf = region_boundary_matrix(yv, inc, rect, mat, order=12)
    pv = pv_volume_of_S(yv, inc, rect, mat)
    results.append(("volume identity",
                    float(np.abs(sf - pv).max() / np.abs(sf).max()), 1e-4))

    # strain kernels against finite differences of U and T
    x = np.array([[1.3, 0.4]])
    n = np.array([[0.6, 0.8]])
    yk = np.array([0.2, -0.1])
    S = kernel_S(yk, x, mat)[0]
    R = kernel_R(yk, x, n, mat)[0]
    s_err = r_err = 0.0
    for j in range(2):
        e = np.eye(2)[j]
        fd = fd_strain_of(lambda p: kernel_U(p, x, mat)[0] @ e, yk)
        s_err = max(s_err, float(np.abs(S[:, j] - fd).max() / np.abs(fd).max()))
        fd = fd_strain_of(lambda p: kernel_T(p, x, n, mat)[0] @ e, yk)
        r_err = max(r_err, float(np.abs(R[:, j] - fd).max() / np.abs(fd).max()))
    results.append(("S vs FD(U)", s_err, 1e-5))
    results.append(("R vs FD(T)", r_err, 1e-4))

    # closed boundaries: oint n dS = 0
    inc = curved_inclusion(mat)
    u, w = gauss_on_interval(0.0, 1.0, 24)
    total = np.zeros(2)
    for seg in inc.segment_names():
        _, nn, jac = inc.trace_at_param(seg, u)
        total += (w * jac) @ nn
    results.append(("closed normals", float(np.abs(total).max()), 1e-10))

    # Gauss rules integrate up to their design degree
    q_err = 0.0
    for npts in (2, 4, 8, 16):
        xg, wg = gauss_rule(npts)
        for k in range(2 * npts):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            q_err = max(q_err, abs(float(wg @ xg**k) - exact))
    results.append(("quadrature exactness", q_err, 1e-13))

    # global equilibrium of the (t0, b0) conversion, decreasing with the grid
    def fn(xx, yy):
        return (np.sin(3 * xx) * yy, np.cos(2 * yy) + xx * xx, xx * yy)

    coarse = total_load_residual(curved_inclusion(mat), (40, 10), fn)
    fine = total_load_residual(curved_inclusion(mat), (80, 20), fn)
    results.append(("load equilibrium 40x10", coarse, 0.02))
    assert fine < coarse

    ok = all(val <= tol for _name, val, tol in results)
    detail = ", ".join(f"{name} {val:.2g}<={tol:g}"
                       for name, val, tol in results)
    report(5, "property suite", ok, detail)
    for name, val, tol in results:
        assert val <= tol, name
