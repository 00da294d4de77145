"""Feedback (cold damping) loop model: controller transfer function,
closed-loop susceptibility and spectra, occupancy integration, and the
analytic cold-damping results.

Conventions
-----------
Signals are decomposed as x(t) = int x(Omega) e^{-i Omega t} dOmega/2pi, so
a pure delay tau multiplies the transfer function by e^{+i Omega tau} and
the mechanical susceptibility is chi(Omega) = 1/(m (W0^2 - W^2 - i G W)).

The controller itself is dimensionless; inside a `LoopModel` it is scaled
by a single loop-calibration factor (N of force per m of displacement,
default m_eff * gamma * omega of the effective mode) so that the loop
equations stay dimensionally explicit and a controller gain of G acts
like a cold-damping gain g_fb ~ G at resonance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .constants import HBAR, TWO_PI
from .errors import ParameterError, ResolutionWarning
from .params import MechanicalMode
from .spectrum import Spectrum, UNITS_DISP


# ---------------------------------------------------------------------------
# controller

@dataclass(frozen=True)
class AuxFilterStage:
    """One narrow auxiliary bandpass used to tame a spurious mode.

    ``gain`` is relative to the overall loop gain; ``order`` is the power
    of the bandpass bracket (the main filter uses 2).
    """

    center: float       # rad/s
    bandwidth: float    # rad/s
    gain: float
    phase: float = 0.0  # rad
    order: int = 1

    def __post_init__(self):
        if self.bandwidth <= 0 or self.center <= 0:
            raise ParameterError("aux stage center and bandwidth must be > 0")


@dataclass(frozen=True)
class FeedbackFilter:
    """Feedback controller: delayed, phase-offset bandpass-squared filter."""

    gain: float                 # overall dimensionless gain G_fb
    phase_offset: float         # phi_fb (rad)
    delay: float                # tau_fb (s)
    main_center: float          # Omega_fb (rad/s)
    main_bandwidth: float       # Gamma_fb (rad/s)
    aux_stages: tuple = ()

    def __post_init__(self):
        if self.main_bandwidth <= 0 or self.main_center <= 0:
            raise ParameterError("filter center and bandwidth must be > 0")
        if self.delay < 0:
            raise ParameterError("delay must be >= 0")
        object.__setattr__(self, "aux_stages", tuple(self.aux_stages))

    def with_gain(self, gain) -> "FeedbackFilter":
        return replace(self, gain=gain)

    def with_phase(self, phase) -> "FeedbackFilter":
        return replace(self, phase_offset=phase)


def bandpass_bracket(omega, center, bandwidth):
    """The resonant bracket  Gamma W / (W0^2 - W^2 - i Gamma W)."""
    omega = np.asarray(omega, dtype=float)
    return bandwidth * omega / (center**2 - omega**2 - 1j * bandwidth * omega)


def filter_response(filt: FeedbackFilter, omega):
    """Complex controller response h_fb(omega) (dimensionless).

    Main filter: G e^{i(W tau - phi)} [bracket]^2; each aux stage adds
    G g_aux e^{i(W tau - phase_aux)} [bracket_aux]^order.  At the main
    center |h_main| = G (the bracket is exactly i there).
    """
    omega = np.asarray(omega, dtype=float)
    delay_phase = omega * filt.delay
    h = (filt.gain * np.exp(1j * (delay_phase - filt.phase_offset))
         * bandpass_bracket(omega, filt.main_center, filt.main_bandwidth) ** 2)
    for st in filt.aux_stages:
        h = h + (filt.gain * st.gain * np.exp(1j * (delay_phase - st.phase))
                 * bandpass_bracket(omega, st.center, st.bandwidth) ** st.order)
    return h


def _wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def tune_phase(filt: FeedbackFilter, omega_target) -> float:
    """Phase offset phi_fb giving arg(h_fb(omega_target)) = pi/2.

    Solved in closed form from the main filter's phase decomposition;
    when aux stages are present the offset is refined by fixed-point
    iteration until the defining property holds to ~1e-13 rad.
    """
    bracket_sq = complex(
        bandpass_bracket(omega_target, filt.main_center, filt.main_bandwidth) ** 2)
    phi = omega_target * filt.delay + np.angle(bracket_sq) - math.pi / 2.0
    phi = _wrap_angle(phi)
    if filt.aux_stages:
        for _ in range(100):
            h = complex(filter_response(filt.with_phase(phi), np.array([omega_target]))[0])
            err = _wrap_angle(np.angle(h) - math.pi / 2.0)
            if abs(err) < 1e-14:
                break
            phi = _wrap_angle(phi + err)
    return float(phi)


# ---------------------------------------------------------------------------
# closed loop

def mechanical_susceptibility(omega, omega_0, gamma, m_eff):
    """chi(omega) = 1 / (m (W0^2 - W^2 - i Gamma W))   (m/N)."""
    omega = np.asarray(omega, dtype=float)
    return 1.0 / (m_eff * (omega_0**2 - omega**2 - 1j * gamma * omega))


def feedback_susceptibility(chi, h):
    """Closed-loop susceptibility chi / (1 - chi h)."""
    return chi / (1.0 - chi * h)


@dataclass(frozen=True)
class LoopModel:
    """Effective mechanical mode + controller + flat noise budgets.

    ``mode`` is the backaction-shifted mode (omega_m = Omega_tot,
    gamma_m = Gamma_tot).  ``s_ff_tot`` and ``s_xx_imp`` are the
    single-sided force (N^2/Hz) and displacement-imprecision (m^2/Hz)
    PSDs, assumed flat across the resonance.
    """

    mode: MechanicalMode
    filt: FeedbackFilter
    s_ff_tot: float
    s_xx_imp: float
    force_per_displacement: float | None = None

    def __post_init__(self):
        if self.s_ff_tot < 0 or self.s_xx_imp < 0:
            raise ParameterError("noise PSDs must be >= 0")

    @property
    def h_scale(self) -> float:
        """Loop calibration: displacement (m) to force (N) at unit |h|."""
        if self.force_per_displacement is not None:
            return self.force_per_displacement
        m = self.mode
        return m.m_eff * m.gamma_m * m.omega_m

    @classmethod
    def from_open_loop_occupancy(cls, mode: MechanicalMode, filt: FeedbackFilter,
                                 n_open: float, s_xx_imp: float) -> "LoopModel":
        """Build a model whose open-loop spectrum integrates to n_open."""
        m = mode
        s_ff = 4.0 * HBAR * m.m_eff * m.omega_m * m.gamma_m * (n_open + 0.5)
        return cls(mode=m, filt=filt, s_ff_tot=s_ff, s_xx_imp=s_xx_imp)

    def h_fb(self, omega):
        """Loop transfer function in physical units (N/m)."""
        return self.h_scale * filter_response(self.filt, omega)

    def chi_tot(self, omega):
        m = self.mode
        return mechanical_susceptibility(omega, m.omega_m, m.gamma_m, m.m_eff)

    def chi_fb(self, omega):
        return feedback_susceptibility(self.chi_tot(omega), self.h_fb(omega))

    def effective_gain(self) -> float:
        """Cold-damping-equivalent gain |h(Omega_tot)| / (m Gamma Omega)."""
        m = self.mode
        h0 = abs(complex(self.h_fb(np.array([m.omega_m]))[0]))
        return h0 / (m.m_eff * m.gamma_m * m.omega_m)

    def with_gain(self, gain) -> "LoopModel":
        return replace(self, filt=self.filt.with_gain(gain))

    def tuned(self) -> "LoopModel":
        """Copy with the phase offset tuned to pi/2 at the mode frequency."""
        phi = tune_phase(self.filt, self.mode.omega_m)
        return replace(self, filt=self.filt.with_phase(phi))


def closed_loop_susceptibility(model: LoopModel, omega):
    """chi_fb(omega) = chi_tot / (1 - chi_tot h_fb)   (m/N)."""
    return model.chi_fb(omega)


def _check_resolution(model: LoopModel, freqs_hz):
    df = freqs_hz[1] - freqs_hz[0]
    gamma_eff_hz = (model.mode.gamma_m / TWO_PI) * (1.0 + max(model.effective_gain(), 0.0))
    points_per_linewidth = gamma_eff_hz / df
    # degenerate guard (e.g. gamma_tot -> 0): the line is not even resolved
    if points_per_linewidth < 3:
        raise ParameterError(
            f"grid cannot resolve the closed-loop linewidth "
            f"({points_per_linewidth:.2f} points across {gamma_eff_hz:.3g} Hz)")
    if points_per_linewidth < 20:
        warnings.warn(
            f"only {points_per_linewidth:.0f} grid points per closed-loop "
            f"linewidth; integrals over this grid will be biased",
            ResolutionWarning, stacklevel=3)


def closed_loop_displacement_psd(model: LoopModel, freqs_hz) -> Spectrum:
    """True displacement PSD with the loop closed (m^2/Hz, single sided).

    S_xx = |chi_fb|^2 (S_FF_tot + |h_fb|^2 S_xx_imp)
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    _check_resolution(model, freqs_hz)
    omega = TWO_PI * freqs_hz
    chi_fb = model.chi_fb(omega)
    h = model.h_fb(omega)
    values = np.abs(chi_fb) ** 2 * (model.s_ff_tot + np.abs(h) ** 2 * model.s_xx_imp)
    return Spectrum(freqs_hz, values, UNITS_DISP,
                    {"kind": "closed_loop_displacement"})


def inloop_psd(model: LoopModel, freqs_hz) -> Spectrum:
    """Measured (in-loop) homodyne spectrum (m^2/Hz, single sided).

    S_yy = |chi_fb|^2 (S_FF_tot + |chi_tot|^{-2} S_xx_imp)
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    _check_resolution(model, freqs_hz)
    omega = TWO_PI * freqs_hz
    chi_fb = model.chi_fb(omega)
    chi = model.chi_tot(omega)
    values = np.abs(chi_fb) ** 2 * (
        model.s_ff_tot + model.s_xx_imp / np.abs(chi) ** 2)
    return Spectrum(freqs_hz, values, UNITS_DISP, {"kind": "inloop"})


# ---------------------------------------------------------------------------
# occupancy integration

def _wing_tails(freqs, values, f_peak):
    """Crude 1/(f-f0)^2 wing extrapolation from the grid-edge samples."""
    tails = 0.0
    if f_peak > freqs[0]:
        tails += values[0] * (f_peak - freqs[0])
    if f_peak < freqs[-1]:
        tails += values[-1] * (freqs[-1] - f_peak)
    return tails


def occupancy_from_psd(spectrum: Spectrum, x_zpf, tail_correction=True) -> float:
    """Phonon occupancy from a calibrated displacement spectrum.

    n = int S_xx df / (2 x_zpf^2) - 1/2, composite trapezoid over the
    grid plus an analytic Lorentzian tail correction for the power beyond
    the grid edges (wings fitted to the spectrum; falls back to a plain
    1/f^2 wing estimate if the Lorentzian fit degenerates or implies
    tails that the grid data cannot support).
    """
    spectrum.require_units(UNITS_DISP, "occupancy_from_psd")
    freqs, values = spectrum.freqs, spectrum.values
    area = float(np.trapezoid(values, freqs))
    tails = 0.0
    if tail_correction:
        f_peak = float(freqs[np.argmax(values)])
        span = float(freqs[-1] - freqs[0])
        tails = None
        try:
            from .specfit import fit_lorentzian
            fit = fit_lorentzian(spectrum)
            f0, fwhm, l_area = fit["center"], fit["fwhm"], fit["area"]
            if (fit.converged and 0 < fwhm < 2.0 * span and l_area > 0
                    and freqs[0] < f0 < freqs[-1]):
                left = l_area / 2.0 + (l_area / math.pi) * math.atan(
                    2.0 * (freqs[0] - f0) / fwhm)
                right = l_area / 2.0 - (l_area / math.pi) * math.atan(
                    2.0 * (freqs[-1] - f0) / fwhm)
                if 0 <= left + right <= 0.5 * max(area, 0.0):
                    tails = left + right
        except Exception:
            tails = None
        if tails is None:
            tails = _wing_tails(freqs, values, f_peak)
    return (area + tails) / (2.0 * x_zpf**2) - 0.5


# ---------------------------------------------------------------------------
# analytic cold damping (ideal differentiator feedback)

def damped_susceptibility_integral(mode: MechanicalMode, g_fb) -> float:
    """int_0^inf |chi_fb|^2 dW = pi / (2 m^2 W0^2 Gamma (1+g))."""
    m = mode
    return math.pi / (2.0 * m.m_eff**2 * m.omega_m**2 * m.gamma_m * (1.0 + g_fb))


def damped_susceptibility_omega2_integral(mode: MechanicalMode, g_fb) -> float:
    """int_0^inf |chi_fb|^2 W^2 dW = pi / (2 m^2 Gamma (1+g))."""
    m = mode
    return math.pi / (2.0 * m.m_eff**2 * m.gamma_m * (1.0 + g_fb))


def cold_damping_occupancy_psd(s_ff_tot, s_xx_imp, mode: MechanicalMode, g_fb) -> float:
    """Occupancy of the ideal-differentiator cold-damped oscillator.

    n = (1/8 x_zpf^2) [ S_FF/(m^2 W^2 Gamma (1+g)) + Gamma g^2 S_imp/(1+g) ] - 1/2
    """
    if g_fb < 0:
        raise ParameterError("g_fb must be >= 0")
    m = mode
    force_term = s_ff_tot / (m.m_eff**2 * m.omega_m**2 * m.gamma_m * (1.0 + g_fb))
    imp_term = m.gamma_m * g_fb**2 * s_xx_imp / (1.0 + g_fb)
    return (force_term + imp_term) / (8.0 * m.x_zpf**2) - 0.5


def cold_damping_occupancy(n_force_quanta, g_fb, mode: MechanicalMode,
                           s_xx_imp) -> float:
    """Same as `cold_damping_occupancy_psd` with the force noise given in
    quanta referenced to this mode: S_FF = 4 hbar m W Gamma n_force_quanta,
    so that n(g=0, S_imp-free) = n_force_quanta - 1/2.
    """
    m = mode
    s_ff = 4.0 * HBAR * m.m_eff * m.omega_m * m.gamma_m * n_force_quanta
    return cold_damping_occupancy_psd(s_ff, s_xx_imp, mode, g_fb)


def optimal_gain(mode: MechanicalMode, s_ff_tot, s_xx_imp) -> float:
    """Gain minimizing the cold-damping occupancy (large-gain limit).

    g* = sqrt(S_FF_tot / S_xx_imp) / (m W Gamma)
    """
    if s_ff_tot <= 0 or s_xx_imp <= 0:
        raise ParameterError("noise PSDs must be > 0 for an optimal gain")
    m = mode
    return math.sqrt(s_ff_tot / s_xx_imp) / (m.m_eff * m.omega_m * m.gamma_m)


# ---------------------------------------------------------------------------
# gain sweeps and stability

def model_gain_grid(model: LoopModel, gain, span_linewidths=80.0, points=8001):
    """Frequency grid (Hz) adapted to the closed-loop linewidth at `gain`."""
    scaled = model.with_gain(gain)
    f0 = model.mode.omega_m / TWO_PI
    gamma_hz = model.mode.gamma_m / TWO_PI
    gamma_eff_hz = gamma_hz * (1.0 + max(scaled.effective_gain(), 0.0))
    span = span_linewidths * gamma_eff_hz
    span = min(span, 1.6 * f0)  # keep the grid at positive frequencies
    return np.linspace(f0 - span / 2.0, f0 + span / 2.0, points), scaled


def occupancy_vs_gain_model(model: LoopModel, gains, span_linewidths=80.0,
                            points=8001):
    """Integrate the closed-loop displacement PSD for each gain.

    Returns an array of occupancies, one per gain.
    """
    x_zpf = model.mode.x_zpf
    out = []
    for gain in gains:
        freqs, scaled = model_gain_grid(model, gain, span_linewidths, points)
        spec = closed_loop_displacement_psd(scaled, freqs)
        out.append(occupancy_from_psd(spec, x_zpf))
    return np.asarray(out)


def loop_stability_scan(model: LoopModel, gains, extra_modes=()):
    """Flag which gains keep every modeled mode positively damped.

    Each mode contributes an effective damping
    Gamma_k + sign_k Im h(W_k) / (m_k W_k); a sign change marks the
    instability onset.  ``extra_modes`` entries are
    (omega, gamma, m_eff[, coupling_sign]) tuples; coupling_sign = -1
    models a mode whose transduction/actuation overlap is pi out of phase
    with the main mode (the situation an auxiliary filter stage is meant
    to rescue).
    """
    modes = [(model.mode.omega_m, model.mode.gamma_m, model.mode.m_eff, 1.0)]
    for entry in extra_modes:
        entry = tuple(entry)
        modes.append(entry if len(entry) == 4 else entry + (1.0,))
    flags = []
    for gain in gains:
        scaled = model.with_gain(gain)
        stable = True
        for omega_k, gamma_k, m_k, sign_k in modes:
            h_k = complex(scaled.h_fb(np.array([omega_k]))[0])
            gamma_eff = gamma_k + sign_k * h_k.imag / (m_k * omega_k)
            if gamma_eff <= 0:
                stable = False
                break
        flags.append(stable)
    return flags
