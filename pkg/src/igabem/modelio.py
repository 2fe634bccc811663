"""Text model format: parsing, validation, serialization, model building.

The format is line oriented and mirrors how NURBS data is usually listed
(knot vectors and x y z w coefficient rows, z ignored).  Blocks look like

    analysis {
      mode plane_strain
      domain infinite
      youngs_modulus 10000
      ...
    }
    patch {
      knots 0 0 0 1 1 1
      coefs -15 30 0 1; -15 33.12 0 0.848; -12.19 34.49 0 1
      bc field_traction 4 8 0
      elevate 1
    }
    inclusion { ... }
    iteration { ... }

Rows inside a value are separated by ';'.  Unknown keys, count mismatches
and malformed numbers raise ParseError with the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import BoundaryCondition, BoundaryModel, Patch
from .driver import IterationConfig, MetricSpec, ProblemModel
from .geometry import DegenerateMapError, Inclusion
from .kernels import IsotropicMaterial
from .materials import YieldModel
from .nurbs import SplineBasis, NurbsCurve, elevated_knot_vector


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# raw structure


@dataclass
class Block:
    name: str
    line: int
    entries: list  # (line, key, text)

    def get(self, key, default=None):
        for _ln, k, text in self.entries:
            if k == key:
                return text
        return default

    def line_of(self, key):
        for ln, k, _text in self.entries:
            if k == key:
                return ln
        return self.line


@dataclass
class ModelFile:
    analysis: dict
    patches: list
    inclusions: list
    iteration: dict
    name: str = "model"


def _tokenize_blocks(text: str):
    blocks = []
    current = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.endswith("{"):
            if current is not None:
                raise ParseError(ln, "nested blocks are not allowed")
            name = line[:-1].strip()
            if not name:
                raise ParseError(ln, "block needs a name before '{'")
            current = Block(name, ln, [])
            continue
        if line == "}":
            if current is None:
                raise ParseError(ln, "'}' without an open block")
            blocks.append(current)
            current = None
            continue
        if current is None:
            raise ParseError(ln, f"content outside of any block: {line!r}")
        parts = line.split(None, 1)
        current.entries.append((ln, parts[0], parts[1] if len(parts) > 1 else ""))
    if current is not None:
        raise ParseError(current.line, f"block {current.name!r} is never closed")
    return blocks


def _floats(text: str, line: int):
    out = []
    for tok in text.replace(",", " ").split():
        try:
            out.append(float(tok))
        except ValueError:
            raise ParseError(line, f"not a number: {tok!r}") from None
    return out


def _rows(text: str, line: int):
    return [_floats(part, line) for part in text.split(";") if part.strip()]


def _knots(block: Block, key: str, required=True):
    text = block.get(key)
    if text is None:
        if required:
            raise ParseError(block.line, f"missing {key!r} in {block.name} block")
        return None
    ln = block.line_of(key)
    kn = np.array(_floats(text, ln))
    if len(kn) < 4:
        raise ParseError(ln, "knot vector needs at least 4 entries")
    if np.any(np.diff(kn) < 0):
        raise ParseError(ln, "knot vector must be non-decreasing")
    span = kn[-1] - kn[0]
    if span <= 0:
        raise ParseError(ln, "knot vector has zero span")
    return (kn - kn[0]) / span


def _coef_rows(block: Block, key: str):
    text = block.get(key)
    if text is None:
        raise ParseError(block.line, f"missing {key!r} in {block.name} block")
    ln = block.line_of(key)
    rows = _rows(text, ln)
    pts, wts = [], []
    for r in rows:
        if len(r) == 4:
            pts.append(r[:2])      # z dropped
            wts.append(r[3])
        elif len(r) == 3:
            pts.append(r[:2])
            wts.append(r[2])
        elif len(r) == 2:
            pts.append(r)
            wts.append(1.0)
        else:
            raise ParseError(ln, f"coefficient row needs 2-4 numbers, got {len(r)}")
    return np.array(pts), np.array(wts)


def _curve(block: Block, knots_key: str, coefs_key: str) -> NurbsCurve:
    kn = _knots(block, knots_key)
    pts, wts = _coef_rows(block, coefs_key)
    degree = len(kn) - len(pts) - 1
    if degree < 1:
        raise ParseError(block.line_of(coefs_key),
                         f"{len(pts)} control points do not fit knot vector of "
                         f"length {len(kn)}")
    return NurbsCurve(degree, kn, pts, wts)


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def parse_model(text: str, name: str = "model") -> ModelFile:
    """Parse model text into a validated ModelFile structure."""
    blocks = _tokenize_blocks(text)
    analysis = None
    iteration = {}
    patches = []
    inclusions = []
    for b in blocks:
        if b.name == "analysis":
            analysis = _parse_analysis(b)
        elif b.name == "patch":
            patches.append(_parse_patch(b))
        elif b.name == "inclusion":
            inclusions.append(_parse_inclusion(b))
        elif b.name == "iteration":
            iteration = _parse_iteration(b)
        else:
            raise ParseError(b.line, f"unknown block {b.name!r}")
    if analysis is None:
        raise ParseError(1, "missing analysis block")
    if not patches:
        raise ParseError(1, "model has no patch blocks")
    return ModelFile(analysis, patches, inclusions, iteration, name)


_ANALYSIS_KEYS = {"mode", "domain", "youngs_modulus", "poissons_ratio",
                  "virgin_stress"}


def _parse_analysis(b: Block):
    out = {"mode": "plane_stress", "domain": "finite", "virgin_stress": None}
    for ln, key, text in b.entries:
        if key not in _ANALYSIS_KEYS:
            raise ParseError(ln, f"unknown analysis key {key!r}")
        if key in ("mode", "domain"):
            out[key] = text.strip()
        elif key == "virgin_stress":
            vals = _floats(text, ln)
            if len(vals) != 3:
                raise ParseError(ln, "virgin_stress needs 3 components")
            out[key] = vals
        else:
            out[key] = _floats(text, ln)[0]
    if out["mode"] not in ("plane_stress", "plane_strain"):
        raise ParseError(b.line, f"unknown mode {out['mode']!r}")
    if out["domain"] not in ("finite", "infinite"):
        raise ParseError(b.line, f"unknown domain {out['domain']!r}")
    for key in ("youngs_modulus", "poissons_ratio"):
        if key not in out:
            raise ParseError(b.line, f"analysis block misses {key!r}")
    return out


_PATCH_KEYS = {"knots", "coefs", "bc", "disp_knots", "elevate"}


def _parse_patch(b: Block):
    for ln, key, _ in b.entries:
        if key not in _PATCH_KEYS:
            raise ParseError(ln, f"unknown patch key {key!r}")
    out = {"geometry": _curve(b, "knots", "coefs"),
           "disp_knots": _knots(b, "disp_knots", required=False),
           "elevate": 0, "bc": ("free", None), "line": b.line}
    if b.get("elevate") is not None:
        out["elevate"] = int(_floats(b.get("elevate"), b.line_of("elevate"))[0])
    bc_text = b.get("bc")
    if bc_text is not None:
        ln = b.line_of("bc")
        parts = bc_text.split(None, 1)
        kind = parts[0]
        rest = parts[1] if len(parts) > 1 else ""
        if kind == "free":
            out["bc"] = ("free", None)
        elif kind == "fixed":
            vals = _floats(rest, ln)
            if vals and len(vals) != 2:
                raise ParseError(ln, "fixed takes no values or 'ux uy'")
            out["bc"] = ("fixed", np.array(vals) if vals else None)
        elif kind == "traction":
            rows = _rows(rest, ln)
            if not all(len(r) == 2 for r in rows):
                raise ParseError(ln, "traction rows are 'tx ty' pairs")
            out["bc"] = ("traction", np.array(rows))
        elif kind == "field_traction":
            vals = _floats(rest, ln)
            if len(vals) != 3:
                raise ParseError(ln, "field_traction needs 'sx sy sxy'")
            out["bc"] = ("field_traction", np.array(vals))
        else:
            raise ParseError(ln, f"unknown boundary condition {kind!r}")
    return out


_INCLUSION_KEYS = {"knots_i", "coefs_i", "knots_ii", "coefs_ii",
                   "youngs_modulus", "poissons_ratio", "grid", "yield",
                   "limit", "limit_fraction", "component", "tension_only",
                   "friction_angle", "cohesion", "dilation_angle",
                   "viscosity", "time_step"}


def _parse_inclusion(b: Block):
    for ln, key, _ in b.entries:
        if key not in _INCLUSION_KEYS:
            raise ParseError(ln, f"unknown inclusion key {key!r}")
    out = {
        "curve_i": _curve(b, "knots_i", "coefs_i"),
        "curve_ii": _curve(b, "knots_ii", "coefs_ii"),
        "youngs_modulus": None, "poissons_ratio": None,
        "grid": (20, 5), "yield": None, "line": b.line,
    }
    for key in ("youngs_modulus", "poissons_ratio"):
        if b.get(key) is not None:
            out[key] = _floats(b.get(key), b.line_of(key))[0]
    if b.get("grid") is not None:
        dims = _floats(b.get("grid"), b.line_of("grid"))
        if len(dims) != 2:
            raise ParseError(b.line_of("grid"), "grid needs 'ns nt'")
        out["grid"] = (int(dims[0]), int(dims[1]))
    kind = b.get("yield")
    if kind is not None:
        kind = kind.strip()
        kw = {"kind": kind}
        scalar = {"limit": "limit", "limit_fraction": "limit_fraction",
                  "friction_angle": "friction_angle_deg", "cohesion": "cohesion",
                  "dilation_angle": "dilation_angle_deg",
                  "viscosity": "viscosity", "time_step": "time_step"}
        for key, attr in scalar.items():
            if b.get(key) is not None:
                kw[attr] = _floats(b.get(key), b.line_of(key))[0]
        if b.get("component") is not None:
            kw["component"] = b.get("component").strip()
        if b.get("tension_only") is not None:
            tok = b.get("tension_only").strip().lower()
            if tok not in _BOOL:
                raise ParseError(b.line_of("tension_only"),
                                 f"not a boolean: {tok!r}")
            kw["tension_only"] = _BOOL[tok]
        try:
            out["yield"] = YieldModel(**kw)
        except (TypeError, ValueError) as exc:
            raise ParseError(b.line_of("yield"), str(exc)) from None
    return out


_ITERATION_KEYS = {"max_iterations", "tolerance", "metric", "metric_reference",
                   "metric_point", "section_t", "section_component",
                   "section_center"}


def _parse_iteration(b: Block):
    out = {}
    for ln, key, text in b.entries:
        if key not in _ITERATION_KEYS:
            raise ParseError(ln, f"unknown iteration key {key!r}")
        if key in ("metric", "section_component"):
            out[key] = text.strip()
        elif key == "metric_point":
            vals = _floats(text, ln)
            if len(vals) != 2:
                raise ParseError(ln, "metric_point needs 'x y'")
            out[key] = np.array(vals)
        elif key == "max_iterations":
            out[key] = int(_floats(text, ln)[0])
        else:
            out[key] = _floats(text, ln)[0]
    return out


# ---------------------------------------------------------------------------
# building solver objects


def build_problem(mf: ModelFile, grid_override=None):
    """Turn a parsed ModelFile into (ProblemModel, IterationConfig)."""
    a = mf.analysis
    mat = IsotropicMaterial(a["youngs_modulus"], a["poissons_ratio"], a["mode"])
    patches = []
    for p in mf.patches:
        geom = p["geometry"]
        if p["disp_knots"] is not None:
            kn = p["disp_knots"]
            degree = None
            # degree follows from clamping multiplicity of the first knot
            degree = int(np.sum(kn == kn[0])) - 1
            basis = SplineBasis(degree, kn, np.ones(len(kn) - degree - 1))
        else:
            basis = SplineBasis(geom.degree, geom.knots, geom.weights)
        if p["elevate"]:
            kn, degree = elevated_knot_vector(basis.knots, basis.degree,
                                              p["elevate"])
            basis = SplineBasis(degree, kn, np.ones(len(kn) - degree - 1))
        kind, values = p["bc"]
        patches.append(Patch(geom, basis, basis, BoundaryCondition(kind, values)))
    boundary = BoundaryModel(patches, mat, finite=(a["domain"] == "finite"))

    inclusions = []
    for inc in mf.inclusions:
        E = inc["youngs_modulus"] if inc["youngs_modulus"] is not None \
            else a["youngs_modulus"]
        nu = inc["poissons_ratio"] if inc["poissons_ratio"] is not None \
            else a["poissons_ratio"]
        imat = IsotropicMaterial(E, nu, a["mode"])
        dims = grid_override or inc["grid"]
        try:
            obj = Inclusion(inc["curve_i"], inc["curve_ii"], imat,
                            yield_model=inc["yield"], grid_dims=dims)
        except DegenerateMapError:
            obj = Inclusion(inc["curve_ii"], inc["curve_i"], imat,
                            yield_model=inc["yield"], grid_dims=dims)
        inclusions.append(obj)

    model = ProblemModel(boundary, inclusions, a["virgin_stress"], name=mf.name)

    it = mf.iteration
    metric = MetricSpec(
        kind=it.get("metric", "initial_stress_norm"),
        reference=it.get("metric_reference"),
        point=it.get("metric_point"),
        section_t=it.get("section_t", 0.5),
        section_component=it.get("section_component", "y"),
        section_center=it.get("section_center", 0.5),
    )
    config = IterationConfig(
        max_iterations=int(it.get("max_iterations", 50)),
        tolerance=it.get("tolerance", 1e-3),
        metric=metric,
    )
    return model, config


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_seq(vals) -> str:
    return " ".join(_fmt(v) for v in np.asarray(vals).ravel())


def _curve_lines(prefix: str, curve: NurbsCurve):
    rows = "; ".join(
        f"{_fmt(p[0])} {_fmt(p[1])} 0 {_fmt(w)}"
        for p, w in zip(curve.control_points, curve.weights))
    return [f"  knots{prefix} {_fmt_seq(curve.knots)}",
            f"  coefs{prefix} {rows}"]


def serialize_model(mf: ModelFile) -> str:
    out = ["analysis {"]
    a = mf.analysis
    out.append(f"  mode {a['mode']}")
    out.append(f"  domain {a['domain']}")
    out.append(f"  youngs_modulus {_fmt(a['youngs_modulus'])}")
    out.append(f"  poissons_ratio {_fmt(a['poissons_ratio'])}")
    if a["virgin_stress"] is not None:
        out.append(f"  virgin_stress {_fmt_seq(a['virgin_stress'])}")
    out.append("}")
    for p in mf.patches:
        out.append("patch {")
        out.extend(_curve_lines("", p["geometry"]))
        kind, values = p["bc"]
        if kind == "free":
            out.append("  bc free")
        elif kind == "fixed":
            out.append("  bc fixed" + ("" if values is None
                                       else f" {_fmt_seq(values)}"))
        elif kind == "traction":
            rows = "; ".join(_fmt_seq(r) for r in values)
            out.append(f"  bc traction {rows}")
        else:
            out.append(f"  bc field_traction {_fmt_seq(values)}")
        if p["disp_knots"] is not None:
            out.append(f"  disp_knots {_fmt_seq(p['disp_knots'])}")
        if p["elevate"]:
            out.append(f"  elevate {p['elevate']}")
        out.append("}")
    for inc in mf.inclusions:
        out.append("inclusion {")
        out.extend(_curve_lines("_i", inc["curve_i"]))
        out.extend(_curve_lines("_ii", inc["curve_ii"]))
        if inc["youngs_modulus"] is not None:
            out.append(f"  youngs_modulus {_fmt(inc['youngs_modulus'])}")
        if inc["poissons_ratio"] is not None:
            out.append(f"  poissons_ratio {_fmt(inc['poissons_ratio'])}")
        out.append(f"  grid {inc['grid'][0]} {inc['grid'][1]}")
        ym = inc["yield"]
        if ym is not None:
            out.append(f"  yield {ym.kind}")
            if ym.limit is not None:
                out.append(f"  limit {_fmt(ym.limit)}")
            if ym.limit_fraction is not None:
                out.append(f"  limit_fraction {_fmt(ym.limit_fraction)}")
            if ym.kind == "normal_cap":
                out.append(f"  component {ym.component}")
                out.append(f"  tension_only {'true' if ym.tension_only else 'false'}")
            else:
                out.append(f"  friction_angle {_fmt(ym.friction_angle_deg)}")
                out.append(f"  cohesion {_fmt(ym.cohesion)}")
                if ym.dilation_angle_deg is not None:
                    out.append(f"  dilation_angle {_fmt(ym.dilation_angle_deg)}")
            out.append(f"  viscosity {_fmt(ym.viscosity)}")
            if ym.time_step is not None:
                out.append(f"  time_step {_fmt(ym.time_step)}")
        out.append("}")
    if mf.iteration:
        out.append("iteration {")
        it = mf.iteration
        for key in ("max_iterations", "tolerance", "metric", "metric_reference",
                    "section_t", "section_component", "section_center"):
            if key in it:
                val = it[key]
                out.append(f"  {key} {val if isinstance(val, (str, int)) else _fmt(val)}")
        if "metric_point" in it:
            out.append(f"  metric_point {_fmt_seq(it['metric_point'])}")
        out.append("}")
    return "\n".join(out) + "\n"
