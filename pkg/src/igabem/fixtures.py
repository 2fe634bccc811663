"""Bundled example models, loadable by name from the package data."""

from __future__ import annotations

from importlib import resources

from .modelio import build_problem, parse_model

_DESCRIPTIONS = {
    "band": "square with a soft horizontal band under uniform tension",
    "bend_soft_band": "bent square with a half-stiffness band (exact reference)",
    "bend_capped_band": "bent square with a stress-capped band (moment balance)",
    "hole_tension_cap": "pressurised hole in an infinite plane with a capped band",
    "cavern": "excavated cavern with four Mohr-Coulomb weakness zones",
}


def fixture_names() -> list[str]:
    return list(_DESCRIPTIONS)


def fixture_description(name: str) -> str:
    return _DESCRIPTIONS[name]


def fixture_text(name: str) -> str:
    if name not in _DESCRIPTIONS:
        raise KeyError(f"unknown fixture {name!r}; know {sorted(_DESCRIPTIONS)}")
    ref = resources.files(__package__) / "models" / f"{name}.model"
    return ref.read_text()


def load_fixture(name: str, grid_override=None):
    """Parsed-and-built (ProblemModel, IterationConfig) for a bundled model."""
    mf = parse_model(fixture_text(name), name=name)
    return build_problem(mf, grid_override=grid_override)
