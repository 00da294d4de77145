"""Dynamical backaction: optical spring, optical damping, and the
regression analysis of spring/damping versus optical power.

Both effects follow the standard detuned-drive expressions

    d_omega = g^2 [ (D-W)/((k/2)^2+(D-W)^2) + (D+W)/((k/2)^2+(D+W)^2) ]
    g_opt   = g^2 k [ 1/((k/2)^2+(D+W)^2) - 1/((k/2)^2+(D-W)^2) ]

with D the detuning, W the mechanical frequency and k the cavity
linewidth (all angular).  Red detuning (D < 0) gives positive damping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RankDeficiencyError, StabilityError
from .params import MechanicalMode, OpticalCavity, OpticalBeam, intracavity_photons


@dataclass(frozen=True)
class BackactionResult:
    """Spring shift and damping contributed by one or more beams (rad/s)."""

    delta_omega: float
    gamma_opt: float
    gamma_total: float

    @property
    def stable(self) -> bool:
        return self.gamma_total > 0


def optical_spring(g, delta, kappa, omega_m):
    """Mechanical frequency shift from the optical spring effect (rad/s)."""
    if kappa <= 0:
        raise ParameterError("kappa must be > 0")
    half_k_sq = (kappa / 2.0) ** 2
    return g**2 * ((delta - omega_m) / (half_k_sq + (delta - omega_m) ** 2)
                   + (delta + omega_m) / (half_k_sq + (delta + omega_m) ** 2))


def optical_damping(g, delta, kappa, omega_m):
    """Extra mechanical damping from dynamical backaction (rad/s).

    Positive for red detuning (delta < 0), negative (anti-damping) for blue.
    """
    if kappa <= 0:
        raise ParameterError("kappa must be > 0")
    half_k_sq = (kappa / 2.0) ** 2
    return g**2 * kappa * (1.0 / (half_k_sq + (delta + omega_m) ** 2)
                           - 1.0 / (half_k_sq + (delta - omega_m) ** 2))


def backaction_summary(mode: MechanicalMode, beams, cavity: OpticalCavity) -> BackactionResult:
    """Total spring and damping for a list of beams, with a stability guard.

    Raises StabilityError when the summed anti-damping exceeds the
    intrinsic damping (gamma_total <= 0) instead of silently returning an
    unstable configuration.
    """
    d_omega = 0.0
    g_opt = 0.0
    for beam in beams:
        d_omega += optical_spring(beam.g, beam.detuning, cavity.kappa, mode.omega_m)
        g_opt += optical_damping(beam.g, beam.detuning, cavity.kappa, mode.omega_m)
    gamma_total = mode.gamma_m + g_opt
    if gamma_total <= 0:
        raise StabilityError(
            f"anti-damping exceeds intrinsic damping: gamma_total={gamma_total:.3e} rad/s")
    return BackactionResult(d_omega, g_opt, gamma_total)


def _weights(n, errors):
    if errors is None:
        return np.ones(n)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise ParameterError("standard errors must be > 0")
    return 1.0 / errors**2


def fit_spring_vs_power(points, cavity: OpticalCavity, detuning, omega_m,
                        errors=None):
    """Fit measured spring shifts versus input power; recover g0.

    ``points`` is a sequence of (power_W, delta_omega_rad_s).  The model is
    linear through the origin, delta_omega = slope * P, with the slope tied
    to g^2 = g0^2 * n_cav(P) through the intracavity photon number at the
    given detuning.  Returns a dict with the slope (rad/s per W), its
    standard error, and the implied g0.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ParameterError("need at least two (power, shift) points")
    power, shift = pts[:, 0], pts[:, 1]
    if np.ptp(power) == 0:
        raise RankDeficiencyError("all powers identical: slope is undetermined")
    w = _weights(len(power), errors)

    sxx = np.sum(w * power**2)
    slope = np.sum(w * power * shift) / sxx

    # photons per watt at this detuning, then the Eq.-shaped bracket
    n_per_watt = intracavity_photons(
        cavity, OpticalBeam(power_in=1.0, detuning=detuning, label="fit"))
    bracket = optical_spring(1.0, detuning, cavity.kappa, omega_m)
    g0_sq = slope / (n_per_watt * bracket)
    if g0_sq < 0:
        raise ParameterError(
            "slope sign inconsistent with the detuning (spring model mismatch)")

    residuals = shift - slope * power
    dof = max(len(power) - 1, 1)
    slope_var = np.sum(w * residuals**2) / dof / sxx
    return {
        "slope": slope,
        "slope_stderr": math.sqrt(slope_var),
        "g0_estimate": math.sqrt(g0_sq),
    }


def fit_damping_offset(points, kappa, detuning, omega_m, gamma_m, errors=None):
    """Fit total linewidth versus coupling with a single vertical offset.

    ``points`` is a sequence of (g_rad_s, gamma_tot_rad_s).  The backaction
    curve gamma_m + gamma_opt(g) is fully constrained; the only free
    parameter is a constant offset (e.g. residual cooling by the probe).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ParameterError("need at least two (g, gamma_tot) points")
    g, gamma_tot = pts[:, 0], pts[:, 1]
    w = _weights(len(g), errors)

    model_fixed = gamma_m + optical_damping(g, detuning, kappa, omega_m)
    resid = gamma_tot - model_fixed
    offset = np.sum(w * resid) / np.sum(w)
    dof = max(len(g) - 1, 1)
    offset_var = np.sum(w * (resid - offset) ** 2) / dof / np.sum(w)
    return {
        "gamma_probe_offset": offset,
        "offset_stderr": math.sqrt(offset_var),
    }
