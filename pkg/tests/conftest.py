"""Shared builders for the test suite."""

import numpy as np
import pytest

from igabem.assembly import BoundaryCondition, BoundaryModel, Patch
from igabem.geometry import Inclusion
from igabem.kernels import IsotropicMaterial
from igabem.nurbs import NurbsCurve, uniform_basis


def line(p0, p1):
    """Straight linear NURBS segment from p0 to p1."""
    return NurbsCurve(1, [0.0, 0.0, 1.0, 1.0], [p0, p1], [1.0, 1.0])


def linear_patch(p0, p1, bc, spans=1):
    """Straight patch with matching linear displacement/traction bases."""
    basis = uniform_basis(1, spans)
    return Patch(line(p0, p1), basis, basis, bc)


def square_model(mat, top_bc, spans=1):
    """Unit square with a loaded top, free sides and a clamped bottom.

    Patch order runs counter-clockwise starting at the top edge, matching
    the bundled example models.
    """
    patches = [
        linear_patch((1.0, 1.0), (0.0, 1.0), top_bc, spans),
        linear_patch((0.0, 1.0), (0.0, 0.0), BoundaryCondition("free"), spans),
        linear_patch((0.0, 0.0), (1.0, 0.0), BoundaryCondition("fixed"), spans),
        linear_patch((1.0, 0.0), (1.0, 1.0), BoundaryCondition("free"), spans),
    ]
    return BoundaryModel(patches, mat)


def band_inclusion(mat, y0=0.33, y1=0.66, dims=(11, 4), yield_model=None):
    """Horizontal band through the unit square."""
    return Inclusion(line((0.0, y0), (1.0, y0)), line((0.0, y1), (1.0, y1)),
                     mat, yield_model=yield_model, grid_dims=dims)


def curved_inclusion(mat, dims=(9, 5)):
    """Region between a parabolic arc and a straight chord (curved map)."""
    lower = NurbsCurve(2, [0, 0, 0, 1, 1, 1],
                       [(0.1, 0.2), (0.5, 0.45), (0.9, 0.2)], [1, 1, 1])
    upper = line((0.1, 0.7), (0.9, 0.7))
    return Inclusion(lower, upper, mat, grid_dims=dims)


@pytest.fixture
def mat():
    return IsotropicMaterial(100.0, 0.3)


@pytest.fixture
def mat_ps():
    return IsotropicMaterial(100.0, 0.3, mode="plane_stress")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
