"""Command-line interface: solve model files and run the bundled examples."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import exports
from .driver import run_iteration, yield_residual
from .fixtures import fixture_description, fixture_names, load_fixture
from .modelio import ParseError, build_problem, parse_model

log = logging.getLogger("igabem")

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def _parse_grid(text):
    try:
        ns, nt = text.lower().split("x")
        return int(ns), int(nt)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("grid must look like 30x5") from exc


def _parse_line(text):
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError("line must look like x0,y0,x1,y1,N")
    try:
        x0, y0, x1, y1 = map(float, parts[:4])
        n = int(parts[4])
    except ValueError as exc:
        raise argparse.ArgumentTypeError("line must look like x0,y0,x1,y1,N") from exc
    return (x0, y0), (x1, y1), n


def _add_solve_options(sub):
    sub.add_argument("--out", type=Path, default=None,
                     help="directory for CSV/SVG results (created if missing)")
    sub.add_argument("--tol", type=float, default=None,
                     help="override the convergence tolerance")
    sub.add_argument("--max-iter", type=int, default=None,
                     help="override the iteration limit")
    sub.add_argument("--grid", type=_parse_grid, default=None, metavar="NSxNT",
                     help="override every inclusion grid, e.g. 30x5")
    sub.add_argument("--line", type=_parse_line, default=None,
                     metavar="x0,y0,x1,y1,N",
                     help="also export stress along this segment")
    sub.add_argument("--magnify", type=float, default=None,
                     help="deformation magnification for the SVG sketch")
    sub.add_argument("-v", "--verbose", action="store_true",
                     help="log per-iteration progress")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="igabem",
        description="2D boundary-element solver for elastic bodies with "
                    "NURBS-bounded inclusions and visco-plastic zones")
    subs = parser.add_subparsers(dest="command", required=True)

    solve = subs.add_parser("solve", help="solve a model file")
    solve.add_argument("model", type=Path, help="model file to solve")
    _add_solve_options(solve)

    fixtures = subs.add_parser("fixtures", help="list or run bundled examples")
    fsubs = fixtures.add_subparsers(dest="fixtures_command", required=True)
    fsubs.add_parser("list", help="list bundled example models")
    frun = fsubs.add_parser("run", help="run one bundled example")
    frun.add_argument("name", choices=fixture_names())
    _add_solve_options(frun)
    return parser


def _apply_overrides(config, args):
    import dataclasses
    if args.tol is not None:
        config = dataclasses.replace(config, tolerance=args.tol)
    if args.max_iter is not None:
        config = dataclasses.replace(config, max_iterations=args.max_iter)
    return config


def _auto_magnification(state):
    import numpy as np
    peak = float(np.abs(state.solution.u_nodes).max())
    scale = state.model.boundary.scale
    return 0.1 * scale / peak if peak > 0 else 1.0


def _export(state, history, args):
    outdir = args.out
    if outdir is None:
        return
    outdir.mkdir(parents=True, exist_ok=True)
    exports.write_history_csv(outdir / "history.csv", history)
    exports.write_boundary_csv(outdir / "boundary.csv", state)
    mag = args.magnify if args.magnify is not None else _auto_magnification(state)
    exports.write_deformed_svg(outdir / "deformed.svg", state, mag)
    for k, grid in enumerate(state.grids):
        grid.dump_csv(outdir / f"inclusion_{k}.csv", state.model.virgin_stress)
    if args.line is not None:
        p0, p1, n = args.line
        exports.write_line_csv(outdir / "line_stress.csv", state, p0, p1, n)
    log.info("results written to %s", outdir)


def _solve(model, config, args):
    config = _apply_overrides(config, args)
    state, history, converged = run_iteration(model, config)
    last = history[-1]
    print(f"{model.name}: {'converged' if converged else 'NOT converged'} "
          f"after {last.iteration} iterations "
          f"(metric {last.metric:.6g}, sigma0 norm {last.sigma0_norm:.3g}, "
          f"{last.elapsed:.1f} s)")
    if any(inc.yield_model is not None for inc in model.inclusions):
        print(f"worst yield-function value: {yield_residual(state):.3g}")
    _export(state, history, args)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "fixtures" and args.fixtures_command == "list":
        for name in fixture_names():
            print(f"{name}: {fixture_description(name)}")
        return EXIT_OK

    try:
        if args.command == "solve":
            text = args.model.read_text()
            model, config = build_problem(parse_model(text),
                                          grid_override=args.grid)
        else:
            model, config = load_fixture(args.name, grid_override=args.grid)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    return _solve(model, config, args)


if __name__ == "__main__":
    sys.exit(main())
