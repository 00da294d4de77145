"""Regression and calibration procedures: Lorentzian line fits, anchor
calibration of voltage spectra, closed-loop spectrum fits, the classical
heating test, gas damping versus pressure, the fiber-cavity reflection
lineshape, and the cavity frequency-noise calibration.

Spectrum fits use relative residuals (data - model)/data, appropriate for
the multiplicative noise of averaged periodograms; point fits (areas,
quality factors) use absolute residuals with optional 1/sigma^2 weights.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .constants import R_GAS, TWO_PI
from .errors import (CalibrationError, ParameterError, RankDeficiencyError,
                     ResolutionWarning, UnitsError)
from .feedback import LoopModel, inloop_psd
from .lsq import FitResult, damped_least_squares, linear_through_origin
from .params import MechanicalMode
from .spectrum import (Spectrum, UNITS_DISP, UNITS_FREQ, UNITS_PHASE,
                       UNITS_VOLT)

__all__ = [
    "fit_lorentzian", "CalibrationConstant", "calibrate_anchor",
    "calibrated_displacement", "fit_closed_loop", "fit_inverse_area",
    "GasMaterial", "GasDampingModel", "gas_damping_quality",
    "fit_q_vs_pressure", "ReflectionModel", "reflection_dip",
    "fit_reflection_dip", "FrequencyNoiseCal", "frequency_noise_calibration",
    "voltage_to_noise_spectra", "linear_through_origin",
]


# ---------------------------------------------------------------------------
# Lorentzian line fit

def _lorentzian(freqs, center, fwhm, area, floor):
    denom = (freqs - center) ** 2 + (fwhm / 2.0) ** 2
    return floor + (area * fwhm / TWO_PI) / denom


def fit_lorentzian(spectrum: Spectrum) -> FitResult:
    """Fit floor + Lorentzian to a PSD; returns center, fwhm, area, floor.

    ``area`` is the full-line integral of the Lorentzian part in
    (spectrum units) * Hz; the peak height above floor is 2 area/(pi fwhm).
    """
    freqs, values = spectrum.freqs, spectrum.values
    if np.ptp(values) == 0:
        raise RankDeficiencyError("flat spectrum: no line to fit")

    floor0 = float(np.median(np.sort(values)[: max(values.size // 4, 2)]))
    peak_idx = int(np.argmax(values))
    f0 = float(freqs[peak_idx])
    height = float(values[peak_idx] - floor0)
    if height <= 0:
        raise RankDeficiencyError("no peak above the background floor")

    above = values - floor0 > height / 2.0
    fwhm0 = max(float(np.count_nonzero(above)) * spectrum.df, spectrum.df)
    area0 = height * math.pi * fwhm0 / 2.0
    weights = np.maximum(values, 1e-9 * values[peak_idx])

    def residual(p):
        return (values - _lorentzian(freqs, *p)) / weights

    def jacobian(p):
        center, fwhm, area, _ = p
        denom = (freqs - center) ** 2 + (fwhm / 2.0) ** 2
        jac = np.empty((freqs.size, 4))
        jac[:, 0] = (area * fwhm / TWO_PI) * 2.0 * (freqs - center) / denom**2
        jac[:, 1] = (area / TWO_PI) * (1.0 / denom - fwhm**2 / (2.0 * denom**2))
        jac[:, 2] = (fwhm / TWO_PI) / denom
        jac[:, 3] = 1.0
        return -jac / weights[:, None]

    result = damped_least_squares(
        residual, [f0, fwhm0, area0, floor0],
        names=("center", "fwhm", "area", "floor"),
        jacobian=jacobian, raise_on_failure=True)
    result.params["fwhm"] = abs(result.params["fwhm"])

    span = freqs[-1] - freqs[0]
    if result.params["fwhm"] > 0 and span / result.params["fwhm"] < 5:
        warnings.warn("spectrum spans fewer than 5 linewidths; the fit and "
                      "any tail correction are unreliable", ResolutionWarning,
                      stacklevel=2)
    if result.stderr is not None:
        if result.params["area"] <= 2.0 * result.stderr.get("area", 0.0):
            result.flags["zero_area"] = True
    return result


# ---------------------------------------------------------------------------
# anchor calibration (voltage -> displacement)

@dataclass(frozen=True)
class CalibrationConstant:
    """Conversion factor K with K * S_VV = S_yy (m^2/Hz per V^2/Hz)."""

    k: float
    anchor_occupancy: float
    floor_vv: float = 0.0

    def __post_init__(self):
        if self.k <= 0:
            raise CalibrationError(f"calibration constant must be > 0, got {self.k!r}")


def calibrate_anchor(spectrum_vv: Spectrum, estimated_occupancy,
                     mode: MechanicalMode) -> CalibrationConstant:
    """Find K so the background-subtracted anchor spectrum integrates to
    (n + 1/2) 2 x_zpf^2, i.e. the known sideband-cooled occupancy.
    """
    spectrum_vv.require_units(UNITS_VOLT, "calibrate_anchor")
    try:
        fit = fit_lorentzian(spectrum_vv)
    except RankDeficiencyError as exc:
        raise CalibrationError(f"anchor spectrum has no usable line: {exc}") from exc
    area_vv = fit["area"]
    if area_vv <= 0 or fit.flags.get("zero_area"):
        raise CalibrationError(
            f"background-subtracted anchor area is not positive ({area_vv:.3e})")
    k = (estimated_occupancy + 0.5) * 2.0 * mode.x_zpf**2 / area_vv
    return CalibrationConstant(k=k, anchor_occupancy=float(estimated_occupancy),
                               floor_vv=fit["floor"])


def calibrated_displacement(spectrum_vv: Spectrum, cal: CalibrationConstant,
                            subtract_floor=True) -> Spectrum:
    """Apply a calibration constant; optionally remove the imprecision floor.

    Floor-subtracted noise samples are clipped at zero (spectra are
    non-negative by contract).
    """
    spectrum_vv.require_units(UNITS_VOLT, "calibrated_displacement")
    values = spectrum_vv.values - (cal.floor_vv if subtract_floor else 0.0)
    return Spectrum(spectrum_vv.freqs.copy(), cal.k * np.maximum(values, 0.0),
                    UNITS_DISP, dict(spectrum_vv.metadata, calibrated="anchor"))


# ---------------------------------------------------------------------------
# closed-loop spectrum fit

def fit_closed_loop(spectrum: Spectrum, model: LoopModel, p0=None) -> FitResult:
    """Fit the in-loop spectrum model for (gain, phase, s_xx_imp).

    The spectrum must be calibrated to m^2/Hz (fit a raw V^2/Hz trace
    only after `calibrate_anchor`).  Everything else in ``model`` (the
    effective mode, force noise, filter shape) is held fixed.  Initial
    values default to the model's own gain/phase and a floor estimate.
    """
    spectrum.require_units(UNITS_DISP, "fit_closed_loop")
    freqs, values = spectrum.freqs, spectrum.values
    if p0 is None:
        p0 = {}
    gain0 = p0.get("gain", model.filt.gain if model.filt.gain > 0 else 1.0)
    phase0 = p0.get("phase", model.filt.phase_offset)
    s_imp0 = p0.get("s_xx_imp", max(float(np.min(values)), 1e-300))
    weights = np.maximum(values, 1e-9 * float(np.max(values)))

    def model_values(p):
        gain, phase, s_imp = p
        trial = replace(model, filt=replace(model.filt, gain=abs(gain),
                                            phase_offset=phase),
                        s_xx_imp=abs(s_imp))
        return inloop_psd(trial, freqs).values

    def residual(p):
        return (values - model_values(p)) / weights

    result = damped_least_squares(
        residual, [gain0, phase0, s_imp0],
        names=("gain", "phase", "s_xx_imp"), raise_on_failure=True)
    result.params["gain"] = abs(result.params["gain"])
    result.params["s_xx_imp"] = abs(result.params["s_xx_imp"])
    if result.params["gain"] < 1e-12:
        result.flags["gain_at_bound"] = True
    return result


# ---------------------------------------------------------------------------
# mechanical area vs power (classical heating test)

def fit_inverse_area(points, gamma0, model="dba", area0=None) -> FitResult:
    """Fit the inverse normalized mechanical area versus input power.

    Pure dynamical backaction: (A/A0)^-1 = a_dba P / Gamma0 + 1.
    With classical heating:    (A/A0)^-1 = (a_dba P + Gamma0)/((1 + a_eh P) Gamma0).

    ``points`` is a sequence of (power, area); ``area0`` defaults to the
    area at the lowest power.  ``gamma0`` is the zero-power linewidth in
    the same angular units that make a_dba * P a rate.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ParameterError("need at least three (power, area) points")
    if model not in ("dba", "dba+heating"):
        raise ParameterError(f"unknown model {model!r}")
    power, area = pts[:, 0], pts[:, 1]
    if np.ptp(power) == 0:
        raise RankDeficiencyError("all powers identical")
    if area0 is None:
        area0 = area[np.argmin(power)]
    y = area0 / area

    slope0 = (y[-1] - y[0]) / (power[-1] - power[0] + 1e-300) * gamma0

    if model == "dba":
        def model_fn(p):
            return p[0] * power / gamma0 + 1.0
        names = ("a_dba",)
        start = [slope0]
    else:
        def model_fn(p):
            return (p[0] * power + gamma0) / ((1.0 + p[1] * power) * gamma0)
        names = ("a_dba", "a_eh")
        start = [slope0, 0.0]

    result = damped_least_squares(lambda p: y - model_fn(p), start, names=names,
                                  raise_on_failure=True)
    return result


# ---------------------------------------------------------------------------
# gas damping vs pressure

@dataclass(frozen=True)
class GasMaterial:
    """Membrane material/environment data for the kinetic gas-damping model."""

    density: float      # kg/m^3
    thickness: float    # m
    molar_mass: float   # kg/mol
    temperature: float  # K


@dataclass(frozen=True)
class GasDampingModel:
    """Fitted Q^-1(p) = Q0^-1 + a_q Q_D^-1(p) decomposition."""

    q0: float
    a_q: float
    material: GasMaterial
    omega_m: float

    def __post_init__(self):
        if self.q0 <= 0 or self.a_q <= 0:
            raise ParameterError("q0 and a_q must be > 0")

    def q_at_pressure(self, pressure_pa) -> float:
        q_d = gas_damping_quality(pressure_pa, self.material, self.omega_m)
        return 1.0 / (1.0 / self.q0 + self.a_q / q_d)


def gas_damping_quality(pressure_pa, material: GasMaterial, omega_m):
    """Kinetic-theory gas-damping quality factor Q_D(p).

    Q_D = (rho h Omega / 4) sqrt(pi/2) sqrt(R T / M) / p
    """
    pressure_pa = np.asarray(pressure_pa, dtype=float)
    if np.any(pressure_pa <= 0):
        raise ParameterError("pressure must be > 0")
    thermal = math.sqrt(R_GAS * material.temperature / material.molar_mass)
    return (material.density * material.thickness * omega_m / 4.0
            * math.sqrt(math.pi / 2.0) * thermal / pressure_pa)


def fit_q_vs_pressure(points, material: GasMaterial, omega_m) -> GasDampingModel:
    """Linear fit of 1/Q versus 1/Q_D(p); returns the fitted model.

    ``points`` is a sequence of (pressure_Pa, Q).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ParameterError("need at least two (pressure, Q) points")
    pressure, q = pts[:, 0], pts[:, 1]
    if np.ptp(pressure) == 0:
        raise RankDeficiencyError("all pressures identical")
    x = 1.0 / gas_damping_quality(pressure, material, omega_m)
    y = 1.0 / q
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    intercept, slope = coef
    if intercept <= 0 or slope <= 0:
        raise ParameterError(
            f"unphysical fit (1/Q0={intercept:.3e}, a_q={slope:.3e}); "
            "check the pressure span")
    return GasDampingModel(q0=1.0 / intercept, a_q=slope, material=material,
                           omega_m=omega_m)


# ---------------------------------------------------------------------------
# fiber-cavity reflection lineshape

@dataclass(frozen=True)
class ReflectionModel:
    """Asymmetric reflection dip of a fiber-coupled cavity.

    P_out/P_in(u) = eta_r - eta_l (1/(1+u^2) - asym * u/(1+u^2)), u = 2 Delta/kappa.
    """

    eta_r: float
    eta_l: float
    asym: float
    kappa: float

    def __post_init__(self):
        if not (0.0 <= self.eta_r <= 1.0):
            raise ParameterError("eta_r must lie in [0, 1]")
        if self.eta_r - self.eta_l < -1e-12:
            raise ParameterError("on-resonance level eta_r - eta_l must be >= 0")
        if self.kappa <= 0:
            raise ParameterError("kappa must be > 0")


def reflection_dip(model: ReflectionModel, detunings):
    """Reflection curve and its Lorentzian/dispersive decomposition.

    Returns a dict with keys 'total', 'lorentzian', 'dispersive' evaluated
    on the detuning grid (rad/s).
    """
    u = 2.0 * np.asarray(detunings, dtype=float) / model.kappa
    lor = model.eta_l / (1.0 + u**2)
    disp = -model.eta_l * model.asym * u / (1.0 + u**2)
    return {
        "total": model.eta_r - (lor + disp),
        "lorentzian": lor,
        "dispersive": disp,
    }


def fit_reflection_dip(detunings, reflection, eta_r_fixed, p0=None) -> FitResult:
    """Fit kappa, eta_l and the dispersive fraction with eta_r held fixed.

    ``detunings`` in rad/s, ``reflection`` the normalized reflected power.
    """
    detunings = np.asarray(detunings, dtype=float)
    reflection = np.asarray(reflection, dtype=float)
    if detunings.size != reflection.size or detunings.size < 8:
        raise ParameterError("need matching detuning/reflection arrays (>= 8 points)")

    depth0 = float(eta_r_fixed - np.min(reflection))
    if depth0 <= 0:
        raise RankDeficiencyError("no dip below the off-resonance level")
    below = reflection < eta_r_fixed - depth0 / 2.0
    kappa0 = max(float(np.count_nonzero(below)) *
                 float(np.mean(np.diff(detunings))), float(np.ptp(detunings)) / 100.0)
    if p0 is None:
        p0 = [kappa0, depth0, 0.0]

    def residual(p):
        kappa, eta_l, asym = p
        model = ReflectionModel(eta_r=eta_r_fixed, eta_l=min(abs(eta_l), eta_r_fixed),
                                asym=asym, kappa=abs(kappa) + 1e-300)
        return reflection - reflection_dip(model, detunings)["total"]

    result = damped_least_squares(residual, p0, names=("kappa", "eta_l", "asym"),
                                  raise_on_failure=True)
    result.params["kappa"] = abs(result.params["kappa"])
    result.params["eta_l"] = min(abs(result.params["eta_l"]), eta_r_fixed)
    span = float(np.ptp(detunings))
    if span / result.params["kappa"] < 5:
        warnings.warn("scan spans fewer than 5 linewidths", ResolutionWarning,
                      stacklevel=2)
    return result


# ---------------------------------------------------------------------------
# cavity frequency-noise calibration

@dataclass(frozen=True)
class FrequencyNoiseCal:
    """Calibration of a locked homodyne spectrum against a phase tone.

    The locked/unlocked ratio of the calibration-tone power fixes
    (1 - 2 Lambda)^2, leaving two roots for Lambda; both are recorded and
    ``lambda_param`` defaults to the less favourable (smaller) root, which
    implies the larger inferred cavity noise.
    """

    lambda_roots: tuple
    lambda_param: float
    ratio: float
    phi_mod: float
    omega_mod: float
    kappa: float


def frequency_noise_calibration(s_lock_over_s_unlock, phi_mod, omega_mod,
                                kappa, choose="less_favourable") -> FrequencyNoiseCal:
    """Solve (1 - 2 Lambda)^2 = ratio for the transduction parameter."""
    ratio = float(s_lock_over_s_unlock)
    if not (0.0 <= ratio <= 1.0):
        raise ParameterError(f"spectral ratio must lie in [0, 1], got {ratio!r}")
    root = math.sqrt(ratio)
    lambdas = ((1.0 - root) / 2.0, (1.0 + root) / 2.0)
    if choose == "less_favourable":
        lam = min(lambdas)
    elif choose == "larger":
        lam = max(lambdas)
    else:
        raise ParameterError(f"unknown root choice {choose!r}")
    return FrequencyNoiseCal(lambda_roots=lambdas, lambda_param=lam,
                             ratio=ratio, phi_mod=float(phi_mod),
                             omega_mod=float(omega_mod), kappa=float(kappa))


def voltage_to_noise_spectra(spectrum_vv: Spectrum, cal: FrequencyNoiseCal,
                             freq_pull, tone_halfwidth_hz, lam=None) -> dict:
    """Convert a locked voltage spectrum to phase/frequency/displacement noise.

    The calibration tone at omega_mod (known modulation depth phi_mod) sets
    the volts-to-phase gain; the detected-phase spectrum is then mapped to
    cavity frequency noise through S_ww = S_phph kappa^2/(16 Lambda^2) and
    to displacement via the frequency pull d(omega_c)/dx.

    Returns a dict of Spectrum objects keyed 'phase', 'frequency',
    'displacement' (tone band excised by linear interpolation).
    """
    spectrum_vv.require_units(UNITS_VOLT, "voltage_to_noise_spectra")
    if lam is None:
        lam = cal.lambda_param
    if lam <= 0:
        raise CalibrationError("Lambda root must be > 0 to invert the transduction")

    freqs = spectrum_vv.freqs
    values = spectrum_vv.values.copy()
    f_mod = cal.omega_mod / TWO_PI
    in_tone = np.abs(freqs - f_mod) <= tone_halfwidth_hz
    if not np.any(in_tone):
        raise CalibrationError("calibration tone not inside the spectrum grid")

    # local background under the tone, then the tone's integrated power
    edge = np.abs(freqs - f_mod) <= 3.0 * tone_halfwidth_hz
    background = float(np.median(values[edge & ~in_tone])) if np.any(edge & ~in_tone) else 0.0
    tone_power = float(np.trapezoid(values[in_tone] - background, freqs[in_tone]))
    if tone_power <= 0:
        raise CalibrationError("no measurable tone power above background")

    locked_gain = (1.0 - 2.0 * lam) ** 2
    if locked_gain <= 0:
        raise CalibrationError("(1-2 Lambda)^2 vanishes: tone is fully suppressed")
    volts_per_phase = tone_power / (cal.phi_mod**2 / 2.0 * locked_gain)

    cleaned = values.copy()
    cleaned[in_tone] = np.interp(freqs[in_tone], freqs[~in_tone], values[~in_tone])

    s_phase = cleaned / volts_per_phase
    s_freq = s_phase * cal.kappa**2 / (16.0 * lam**2)
    s_disp = s_freq / freq_pull**2
    meta = dict(spectrum_vv.metadata, lambda_used=f"{lam:.6g}")
    return {
        "phase": Spectrum(freqs.copy(), s_phase, UNITS_PHASE, dict(meta)),
        "frequency": Spectrum(freqs.copy(), s_freq, UNITS_FREQ, dict(meta)),
        "displacement": Spectrum(freqs.copy(), s_disp, UNITS_DISP, dict(meta)),
    }
