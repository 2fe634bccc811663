"""Result export helpers: CSV tables and a deformed-boundary SVG sketch."""

from __future__ import annotations

import numpy as np

from .assembly import _traction_values
from .driver import SolverState, stress_at

__all__ = [
    "write_history_csv",
    "write_boundary_csv",
    "write_line_csv",
    "write_deformed_svg",
]


def write_history_csv(path, history):
    """Iteration history: iteration, sigma0_norm, metric, elapsed seconds."""
    rows = [[h.iteration, h.sigma0_norm, h.metric, h.elapsed] for h in history]
    np.savetxt(path, np.array(rows, dtype=float), delimiter=",",
               header="iteration,sigma0_norm,metric,elapsed", comments="")


def _boundary_samples(state: SolverState, per_element: int = 8):
    """(patch, u, x, u_disp, traction) rows along every boundary patch."""
    model = state.model.boundary
    sol = state.solution
    out = []
    for e, p in enumerate(model.patches):
        us = []
        for a, b in p.elements():
            us.append(np.linspace(a, b, per_element, endpoint=False))
        u = np.append(np.concatenate(us), p.elements()[-1][1])
        x = p.geometry.evaluate(u)
        disp = p.disp_basis.basis_matrix(u) @ sol.displacement_coefs(model, e)
        trac = _traction_values(model, e, u, sol)
        out.append((e, u, x, disp, trac))
    return out


def write_boundary_csv(path, state: SolverState, per_element: int = 8):
    """Boundary solution: patch, u, x, y, ux, uy, tx, ty."""
    rows = []
    for e, u, x, disp, trac in _boundary_samples(state, per_element):
        for k in range(len(u)):
            rows.append([e, u[k], *x[k], *disp[k], *trac[k]])
    np.savetxt(path, np.array(rows), delimiter=",",
               header="patch,u,x,y,ux,uy,tx,ty", comments="")


def write_line_csv(path, state: SolverState, p0, p1, n: int = 50):
    """True stress sampled along the segment p0 -> p1 (n interior points)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    rows = []
    for lam in np.linspace(0.0, 1.0, n):
        y = (1.0 - lam) * p0 + lam * p1
        sig = stress_at(state, y)
        rows.append([*y, *sig])
    np.savetxt(path, np.array(rows), delimiter=",",
               header="x,y,sig_x,sig_y,tau_xy", comments="")


def write_deformed_svg(path, state: SolverState, magnification: float = 1.0,
                       size: int = 640, per_element: int = 12):
    """Original (grey) and magnified deformed (red) boundary outlines."""
    samples = _boundary_samples(state, per_element)
    orig = [x for _e, _u, x, _d, _t in samples]
    defo = [x + magnification * d for _e, _u, x, d, _t in samples]
    allp = np.vstack(orig + defo)
    lo = allp.min(axis=0)
    hi = allp.max(axis=0)
    span = max(float((hi - lo).max()), 1e-12)
    pad = 0.05 * span

    def to_px(pts):
        q = (pts - lo + pad) / (span + 2 * pad) * size
        q[:, 1] = size - q[:, 1]
        return q

    def polyline(pts, color, width):
        coords = " ".join(f"{p[0]:.2f},{p[1]:.2f}" for p in to_px(pts))
        return (f'<polyline points="{coords}" fill="none" '
                f'stroke="{color}" stroke-width="{width}"/>')

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'width="{size}" height="{size}">']
    lines += [polyline(x, "#999999", 1.0) for x in orig]
    lines += [polyline(x, "#cc2222", 1.5) for x in defo]
    lines.append(f'<text x="8" y="{size - 8}" font-size="12" fill="#333333">'
                 f'deformation x {magnification:g}</text>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
