"""Constitutive matrices, elastic-mismatch initial stress, visco-plastic relaxation.

Stress/strain live in Voigt order (x, y, xy) with engineering shear.
Tension is positive.  Yield models:

  * normal_cap   -- caps one normal stress component at a limit, either
                    symmetrically (|sigma| <= limit) or in tension only.
                    The limit may be given as a fraction of the peak elastic
                    stress, resolved after the first (elastic) iteration.
  * mohr_coulomb -- principal-stress form including the out-of-plane stress
                    under plane strain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .kernels import IsotropicMaterial

_COMP = {"x": 0, "y": 1}


def constitutive(mat: IsotropicMaterial) -> np.ndarray:
    """3x3 Voigt constitutive matrix for plane stress or plane strain."""
    E, nu = mat.youngs_modulus, mat.poisson_ratio
    if mat.mode == "plane_stress":
        f = E / (1.0 - nu * nu)
        return f * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]])
    if nu >= 0.5 - 1e-12:
        raise ValueError("plane strain constitutive matrix singular at nu = 0.5")
    f = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return f * np.array([[1.0 - nu, nu, 0.0], [nu, 1.0 - nu, 0.0],
                         [0.0, 0.0, (1.0 - 2.0 * nu) / 2.0]])


def elastic_mismatch_initial_stress(C_i: np.ndarray, C: np.ndarray, strain_rate) -> np.ndarray:
    """Stress difference (C_i - C) @ strain_rate between inclusion and domain."""
    return np.einsum("ij,...j->...i", np.asarray(C_i) - np.asarray(C), np.asarray(strain_rate))


@dataclass(frozen=True)
class YieldModel:
    kind: str                                 # "normal_cap" | "mohr_coulomb"
    limit: Optional[float] = None             # cap stress
    component: str = "y"                      # capped component
    tension_only: bool = False
    limit_fraction: Optional[float] = None    # cap as fraction of peak elastic stress
    friction_angle_deg: float = 30.0
    cohesion: float = 0.0
    dilation_angle_deg: Optional[float] = None  # None -> associated flow
    viscosity: float = 1.0
    time_step: Optional[float] = None         # None -> Cormeau-style default

    def __post_init__(self):
        if self.kind not in ("normal_cap", "mohr_coulomb"):
            raise ValueError(f"unknown yield kind {self.kind!r}")
        if self.kind == "normal_cap":
            if self.limit is None and self.limit_fraction is None:
                raise ValueError("normal_cap needs a limit or a limit_fraction")
            if self.limit is not None and self.limit <= 0:
                raise ValueError("cap limit must be positive")
            if self.component not in _COMP:
                raise ValueError("cap component must be 'x' or 'y'")
        else:
            if not 0.0 <= self.friction_angle_deg < 90.0:
                raise ValueError("friction angle must lie in [0, 90) degrees")
            if self.cohesion < 0:
                raise ValueError("cohesion must be non-negative")
        if self.viscosity <= 0:
            raise ValueError("viscosity must be positive")
        if self.time_step is not None and self.time_step <= 0:
            raise ValueError("time step must be positive")

    def resolved(self, limit: float) -> "YieldModel":
        return replace(self, limit=limit, limit_fraction=None)

    def reference_stress(self) -> float:
        """Stress scale of the yield surface (for convergence checks)."""
        if self.kind == "normal_cap":
            return float(self.limit)
        phi = math.radians(self.friction_angle_deg)
        return 2.0 * self.cohesion * math.cos(phi)

    def effective_time_step(self, mat: IsotropicMaterial) -> float:
        if self.time_step is not None:
            return self.time_step
        return cormeau_time_step(mat, self.viscosity)


def cormeau_time_step(mat: IsotropicMaterial, viscosity: float) -> float:
    """Conservative stable step for explicit visco-plastic relaxation."""
    return 4.0 * (1.0 + mat.poisson_ratio) / (3.0 * mat.youngs_modulus) * viscosity


def _principal(sigma):
    sx, sy, txy = sigma[..., 0], sigma[..., 1], sigma[..., 2]
    c = 0.5 * (sx + sy)
    rad = np.sqrt((0.5 * (sx - sy)) ** 2 + txy ** 2)
    return c + rad, c - rad, rad


def yield_value(sigma, model: YieldModel, mat: Optional[IsotropicMaterial] = None):
    """Yield function F (stress units); F > 0 means the state is inadmissible."""
    sigma = np.asarray(sigma, dtype=float)
    if model.kind == "normal_cap":
        if model.limit is None:
            raise ValueError("cap limit not resolved yet")
        s = sigma[..., _COMP[model.component]]
        val = s if model.tension_only else np.abs(s)
        return val - model.limit
    phi = math.radians(model.friction_angle_deg)
    p1, p2, _ = _principal(sigma)
    if mat is not None and mat.mode == "plane_strain":
        sz = mat.poisson_ratio * (sigma[..., 0] + sigma[..., 1])
    else:
        sz = np.zeros_like(p1)
    s1 = np.maximum(np.maximum(p1, p2), sz)
    s3 = np.minimum(np.minimum(p1, p2), sz)
    return (s1 * (1.0 + math.sin(phi)) - s3 * (1.0 - math.sin(phi))
            - 2.0 * model.cohesion * math.cos(phi))


def flow_direction(sigma, model: YieldModel, mat: Optional[IsotropicMaterial] = None):
    """In-plane Voigt gradient dQ/dsigma of the plastic potential."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    out = np.zeros_like(sigma)
    if model.kind == "normal_cap":
        c = _COMP[model.component]
        s = sigma[:, c]
        out[:, c] = 1.0 if model.tension_only else np.sign(np.where(s == 0.0, 1.0, s))
    else:
        psi = math.radians(model.dilation_angle_deg
                           if model.dilation_angle_deg is not None
                           else model.friction_angle_deg)
        p1, p2, rad = _principal(sigma)
        sx, sy, txy = sigma[:, 0], sigma[:, 1], sigma[:, 2]
        safe = np.where(rad < 1e-12, 1.0, rad)
        d1 = np.c_[0.5 + 0.25 * (sx - sy) / safe,
                   0.5 - 0.25 * (sx - sy) / safe,
                   txy / safe]
        d2 = np.c_[0.5 - 0.25 * (sx - sy) / safe,
                   0.5 + 0.25 * (sx - sy) / safe,
                   -txy / safe]
        if mat is not None and mat.mode == "plane_strain":
            sz = mat.poisson_ratio * (sx + sy)
        else:
            sz = np.zeros_like(p1)
        s_all = np.stack([p1, p2, sz], axis=-1)
        hi = np.argmax(s_all, axis=-1)
        lo = np.argmin(s_all, axis=-1)
        dirs = np.stack([d1, d2, np.zeros_like(d1)], axis=1)  # sz gradient out of plane
        idx = np.arange(len(sigma))
        out = (1.0 + math.sin(psi)) * dirs[idx, hi] - (1.0 - math.sin(psi)) * dirs[idx, lo]
    return out


def viscoplastic_step(sigma, model: YieldModel, C: np.ndarray,
                      mat: Optional[IsotropicMaterial] = None,
                      time_step: Optional[float] = None):
    """Initial-stress increment C @ (dt/eta * F * dQ/dsigma); zero where F <= 0."""
    sigma = np.asarray(sigma, dtype=float)
    single = sigma.ndim == 1
    sigma = np.atleast_2d(sigma)
    F = np.atleast_1d(yield_value(sigma, model, mat))
    dt = time_step if time_step is not None else model.time_step
    if dt is None:
        if mat is None:
            raise ValueError("need a material (or explicit time_step) for the default step")
        dt = model.effective_time_step(mat)
    rate = np.where(F > 0.0, F, 0.0) * (dt / model.viscosity)
    eps_vp = rate[:, None] * flow_direction(sigma, model, mat)
    s0 = np.einsum("ij,mj->mi", np.asarray(C), eps_vp)
    return s0[0] if single else s0
