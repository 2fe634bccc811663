"""2D elastostatic fundamental solutions (Kelvin) and derived strain kernels.

Conventions:
  * plane strain formulas; plane stress uses the effective ratio nu/(1+nu)
  * Voigt order (x, y, xy) with engineering shear
  * r_i = (x_i - y_i)/r, derivatives of the distance taken at the field
    point x; source (collocation) point is y
  * the log kernel is written with ln(1/r); the additive constant is
    irrelevant for the Neumann-type systems solved here

All kernels are vectorized over the field point: x of shape (m, 2) returns
(m, 2, 2) or (m, 3, 2) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

VOIGT = ("x", "y", "xy")


class SingularityError(ValueError):
    """Field point coincides with the source point."""


@dataclass(frozen=True)
class IsotropicMaterial:
    youngs_modulus: float
    poisson_ratio: float
    mode: str = "plane_strain"

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError("Poisson's ratio must lie in (-1, 0.5)")
        if self.mode not in ("plane_strain", "plane_stress"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @cached_property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @cached_property
    def nu_eff(self) -> float:
        """Poisson ratio used inside the kernels (plane-strain convention)."""
        nu = self.poisson_ratio
        return nu if self.mode == "plane_strain" else nu / (1.0 + nu)


def _r_terms(y, x):
    y = np.asarray(y, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x - y
    r = np.hypot(d[:, 0], d[:, 1])
    if np.any(r == 0.0):
        raise SingularityError("field point coincides with source point")
    return d / r[:, None], r


def kernel_U(y, x, mat: IsotropicMaterial):
    """Displacement kernel, O(ln r).  Returns (m, 2, 2); (2, 2) for single x."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    dr, r = _r_terms(y, x)
    G, nu = mat.shear_modulus, mat.nu_eff
    A = 1.0 / (8.0 * np.pi * G * (1.0 - nu))
    B = 3.0 - 4.0 * nu
    U = A * (B * np.log(1.0 / r)[:, None, None] * np.eye(2)
             + dr[:, :, None] * dr[:, None, :])
    return U[0] if single else U


def kernel_T(y, x, n, mat: IsotropicMaterial):
    """Traction kernel, O(1/r); n is the unit outward normal at x."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    dr, r = _r_terms(y, x)
    n = np.broadcast_to(np.asarray(n, dtype=float), dr.shape)
    nu = mat.nu_eff
    D = 1.0 - 2.0 * nu
    drdn = np.einsum("mi,mi->m", dr, n)
    eye = np.eye(2)
    term = (drdn[:, None, None] * (D * eye + 2.0 * dr[:, :, None] * dr[:, None, :])
            - D * (dr[:, :, None] * n[:, None, :] - n[:, :, None] * dr[:, None, :]))
    T = -term / (4.0 * np.pi * (1.0 - nu) * r)[:, None, None]
    return T[0] if single else T


def _dU_dy(y, x, mat):
    """d U_ij / d y_k, shape (m, 2, 2, 2)."""
    dr, r = _r_terms(y, x)
    G, nu = mat.shear_modulus, mat.nu_eff
    A = 1.0 / (8.0 * np.pi * G * (1.0 - nu))
    B = 3.0 - 4.0 * nu
    eye = np.eye(2)
    out = (B * dr[:, None, None, :] * eye[None, :, :, None]
           - eye[None, :, None, :] * dr[:, None, :, None]
           - eye[None, None, :, :] * dr[:, :, None, None]
           + 2.0 * dr[:, :, None, None] * dr[:, None, :, None] * dr[:, None, None, :])
    return A * out / r[:, None, None, None]


def _dT_dy(y, x, n, mat):
    """d T_ij / d y_k, shape (m, 2, 2, 2)."""
    dr, r = _r_terms(y, x)
    n = np.broadcast_to(np.asarray(n, dtype=float), dr.shape)
    nu = mat.nu_eff
    D = 1.0 - 2.0 * nu
    C0 = -1.0 / (4.0 * np.pi * (1.0 - nu))
    eye = np.eye(2)
    phi = np.einsum("mi,mi->m", dr, n)

    base = (phi[:, None, None] * (D * eye + 2.0 * dr[:, :, None] * dr[:, None, :])
            - D * (dr[:, :, None] * n[:, None, :] - n[:, :, None] * dr[:, None, :]))
    t1 = dr[:, None, None, :] * base[:, :, :, None]
    dphi = -n + phi[:, None] * dr
    t2 = dphi[:, None, None, :] * (D * eye + 2.0 * dr[:, :, None] * dr[:, None, :])[:, :, :, None]
    drirj_dk = (-eye[None, :, None, :] * dr[:, None, :, None]
                - eye[None, None, :, :] * dr[:, :, None, None]
                + 2.0 * dr[:, :, None, None] * dr[:, None, :, None] * dr[:, None, None, :])
    t3 = 2.0 * phi[:, None, None, None] * drirj_dk
    rirk = dr[:, :, None, None] * dr[:, None, None, :] - eye[None, :, None, :]
    rjrk = dr[:, None, :, None] * dr[:, None, None, :] - eye[None, None, :, :]
    t4 = -D * (n[:, None, :, None] * rirk - n[:, :, None, None] * rjrk)
    return C0 * (t1 + t2 + t3 + t4) / (r ** 2)[:, None, None, None]


def _strain_rows(dK):
    """Collapse a (m,2,2,2) y-gradient into Voigt strain rows (m,3,2)."""
    m = dK.shape[0]
    S = np.empty((m, 3, 2))
    S[:, 0, :] = dK[:, 0, :, 0]
    S[:, 1, :] = dK[:, 1, :, 1]
    S[:, 2, :] = dK[:, 0, :, 1] + dK[:, 1, :, 0]
    return S


def kernel_S(y, x, mat: IsotropicMaterial):
    """Strain at y per unit point force at x, O(1/r).  Shape (m, 3, 2)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    S = _strain_rows(_dU_dy(y, np.atleast_2d(x), mat))
    return S[0] if single else S


def kernel_R(y, x, n, mat: IsotropicMaterial):
    """Strain counterpart of the traction kernel, O(1/r^2).  Shape (m, 3, 2)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    R = _strain_rows(_dT_dy(y, np.atleast_2d(x), n, mat))
    return R[0] if single else R
