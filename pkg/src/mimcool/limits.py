"""Closed-form occupancy limits for sideband and feedback cooling, the
displacement-imprecision noise budget, and conversions between spectral
densities and phonon-quanta units.

Occupancy formulas are returned raw (they can drop below zero outside
their validity region); clamping happens only in the reporting layer so
tests can always see the bare formula value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .constants import HBAR
from .errors import ParameterError, StabilityError
from .params import MechanicalMode


# ---------------------------------------------------------------------------
# sideband cooling

def sideband_occupancy(n_th, gamma_m, c_q_probe, n_min_c, gamma_c, gamma_tot):
    """Final occupancy under sideband cooling.

    n = (n_th gamma_m (1 + C_q) + n_min_c gamma_c) / gamma_tot
    """
    if gamma_tot <= 0:
        raise StabilityError(f"gamma_tot must be > 0, got {gamma_tot!r}")
    return (n_th * gamma_m * (1.0 + c_q_probe) + n_min_c * gamma_c) / gamma_tot


def min_sideband_occupancy(delta, kappa, omega_m):
    """Quantum-backaction limit of sideband cooling at detuning delta < 0.

    n_min = ((omega_m + delta)^2 + (kappa/2)^2) / (-4 delta omega_m)
    """
    if delta >= 0:
        raise ParameterError(
            f"sideband-cooling limit requires red detuning (delta < 0), got {delta!r}")
    return ((omega_m + delta) ** 2 + (kappa / 2.0) ** 2) / (-4.0 * delta * omega_m)


def optimal_detuning(kappa, omega_m):
    """Detuning minimizing the sideband-cooling limit (closed form).

    delta* = -sqrt(omega_m^2 + kappa^2/4)
    """
    if kappa <= 0 or omega_m <= 0:
        raise ParameterError("kappa and omega_m must be > 0")
    return -math.sqrt(omega_m**2 + kappa**2 / 4.0)


def optimal_detuning_numeric(kappa, omega_m):
    """Numeric cross-check of `optimal_detuning`.

    Golden-section search brackets the minimum of the occupancy limit,
    then a root find on its first derivative polishes the result to
    machine precision.  Kept independent of the closed form on purpose.
    """
    if kappa <= 0 or omega_m <= 0:
        raise ParameterError("kappa and omega_m must be > 0")

    def f(delta):
        return min_sideband_occupancy(delta, kappa, omega_m)

    def df(delta):
        # d/d(delta) of the occupancy limit, derived from the ratio rule
        return (omega_m**2 + (kappa / 2.0) ** 2 - delta**2) / (4.0 * omega_m * delta**2)

    scale = math.hypot(omega_m, kappa)
    lo, hi = -4.0 * scale, -1e-3 * scale
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    for _ in range(120):
        if f(c) < f(d):
            b, d = d, c
            c = b - invphi * (b - a)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
    # derivative changes sign across the golden-section bracket
    pad = max(1e-6 * scale, (b - a))
    return brentq(df, a - pad, b + pad, xtol=1e-300, rtol=1e-15, maxiter=200)


# ---------------------------------------------------------------------------
# feedback cooling

def feedback_min_occupancy_basic(s_ff_tot, s_xx_imp):
    """Optimal-gain feedback cooling limit from flat noise budgets.

    n_min = sqrt(S_FF_tot S_xx_imp / 4 hbar^2) - 1/2
    """
    if s_ff_tot < 0 or s_xx_imp < 0:
        raise ParameterError("spectral densities must be >= 0")
    return math.sqrt(s_ff_tot * s_xx_imp / (4.0 * HBAR**2)) - 0.5


def feedback_min_occupancy_full(c_q, eta_det, s_xx_imp_cl, n_th, gamma_m, x_zpf):
    """Feedback cooling limit in terms of cooperativity and efficiency.

    n_min = sqrt((1+C_q) (1/(4 eta C_q) + S_cl n_th gamma_m / 2 x_zpf^2)) - 1/2
    """
    if not (0.0 < eta_det <= 1.0):
        raise ParameterError(f"eta_det must lie in (0, 1], got {eta_det!r}")
    if c_q <= 0:
        raise ParameterError(f"c_q must be > 0, got {c_q!r}")
    classical_term = s_xx_imp_cl * n_th * gamma_m / (2.0 * x_zpf**2)
    return math.sqrt((1.0 + c_q) * (1.0 / (4.0 * eta_det * c_q) + classical_term)) - 0.5


# ---------------------------------------------------------------------------
# noise budgets

@dataclass(frozen=True)
class ForceNoise:
    """Single-sided force noise PSDs driving the mechanics (N^2/Hz)."""

    s_ff_thermal: float
    s_ff_radiation: float

    @property
    def total(self) -> float:
        return self.s_ff_thermal + self.s_ff_radiation


def force_noise(mode: MechanicalMode, c_q: float) -> ForceNoise:
    """Thermal Langevin force noise plus quantum-limited radiation pressure."""
    s_th = mode.s_ff_thermal
    return ForceNoise(s_ff_thermal=s_th, s_ff_radiation=c_q * s_th)


@dataclass(frozen=True)
class ImprecisionBudget:
    """Displacement-equivalent imprecision contributions (m^2/Hz).

    ``laser_figure`` and ``mirror_figure`` are the dimensionless products
    S n_th gamma_m / (2 g0^2) and S_cl n_th gamma_m / (2 x_zpf^2) that
    enter the feedback-cooling limit.
    """

    s_xx_quantum: float
    s_xx_laser_freq: float
    s_xx_mirror: float
    s_omega_omega: float
    freq_pull: float
    laser_figure: float
    mirror_figure: float

    @property
    def total(self) -> float:
        return self.s_xx_quantum + self.s_xx_laser_freq + self.s_xx_mirror


def imprecision_budget(mode: MechanicalMode, c_q, eta_det, g0,
                       s_omega_omega=0.0, s_xx_mirror=0.0) -> ImprecisionBudget:
    """Fill the three-way imprecision budget for a probe measurement.

    Quantum imprecision: S_q = x_zpf^2 / (2 eta_det C_q gamma), with gamma
    the thermal decoherence rate.  Laser frequency noise S_ww maps to
    displacement through the frequency pull d(omega_c)/dx = g0 / x_zpf.
    """
    if c_q <= 0 or eta_det <= 0:
        raise ParameterError("c_q and eta_det must be > 0")
    gamma = mode.gamma_decoherence
    x_zpf = mode.x_zpf
    s_q = x_zpf**2 / (2.0 * eta_det * c_q * gamma)
    if g0 > 0:
        freq_pull = g0 / x_zpf
        s_laser = s_omega_omega / freq_pull**2
        laser_figure = s_omega_omega * gamma / (2.0 * g0**2)
    else:
        freq_pull = 0.0
        s_laser = 0.0
        laser_figure = 0.0
    mirror_figure = s_xx_mirror * gamma / (2.0 * x_zpf**2)
    return ImprecisionBudget(
        s_xx_quantum=s_q,
        s_xx_laser_freq=s_laser,
        s_xx_mirror=s_xx_mirror,
        s_omega_omega=s_omega_omega,
        freq_pull=freq_pull,
        laser_figure=laser_figure,
        mirror_figure=mirror_figure,
    )


# ---------------------------------------------------------------------------
# quanta conversions
#
# Reference scale: peak displacement PSD of the ground state,
# S_xzp = 4 x_zpf^2 / gamma_m.  Imprecision in quanta n_imp = S_imp/(2 S_xzp);
# force noise in quanta n_tot = S_FF S_xzp / (8 hbar^2).

def n_imp_from_sxx(s_xx_imp, mode: MechanicalMode):
    return s_xx_imp / (2.0 * mode.s_xzp)


def sxx_from_n_imp(n_imp, mode: MechanicalMode):
    return 2.0 * n_imp * mode.s_xzp


def n_tot_from_sff(s_ff, mode: MechanicalMode):
    return s_ff * mode.s_xzp / (8.0 * HBAR**2)


def sff_from_n_tot(n_tot, mode: MechanicalMode):
    return 8.0 * HBAR**2 * n_tot / mode.s_xzp


def quanta_conversions(mode: MechanicalMode, s_xx_imp=None, s_ff=None,
                       n_imp=None, n_tot=None) -> dict:
    """Convert between spectral densities and quanta, whichever way is needed.

    Provide any subset of the four quantities; the missing counterparts are
    filled in.  Round trips are exact by construction.
    """
    out = {}
    if s_xx_imp is not None:
        out["s_xx_imp"] = s_xx_imp
        out["n_imp"] = n_imp_from_sxx(s_xx_imp, mode)
    if n_imp is not None:
        out["n_imp"] = n_imp
        out["s_xx_imp"] = sxx_from_n_imp(n_imp, mode)
    if s_ff is not None:
        out["s_ff"] = s_ff
        out["n_tot"] = n_tot_from_sff(s_ff, mode)
    if n_tot is not None:
        out["n_tot"] = n_tot
        out["s_ff"] = sff_from_n_tot(n_tot, mode)
    if not out:
        raise ParameterError("nothing to convert: pass at least one quantity")
    return out
