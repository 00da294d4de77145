"""Stochastic time-domain simulation of the feedback-cooled oscillator.

This is the independent oracle for the frequency-domain loop model: a
Langevin integration of

    m x'' + m Gamma x' + m W0^2 x = F_th(t) + F_fb(t),
    y(t) = x(t) + x_imp(t),      F_fb = (filter cascade)(y)

with white thermal force noise of single-sided PSD s_ff_tot and white
imprecision of PSD s_xx_imp.

Numerics
--------
* The oscillator propagates with the exact exponential map of the damped
  harmonic system per step, plus Gaussian increments of the exact
  transition covariance (the open-loop process is exactly stationary at
  any step size); the feedback force is held constant across each step.
* The controller is realized as bilinear-transformed bandpass biquads, a
  quadrature (phase-rotation) stage, and an integer-sample delay line.
  Each branch is calibrated so the realized discrete loop gain equals the
  analytic h_fb at the mechanical frequency exactly (amplitude and
  phase), which folds the fractional-sample delay and the zero-order-hold
  lag into the rotation stage.
* Identical configs (including the seed) produce bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.signal import welch as _scipy_welch

from .constants import TWO_PI
from .errors import ParameterError, StabilityError
from .feedback import (FeedbackFilter, LoopModel, bandpass_bracket,
                       mechanical_susceptibility, model_gain_grid,
                       occupancy_from_psd, closed_loop_displacement_psd)
from .params import MechanicalMode
from .spectrum import Spectrum, UNITS_DISP


# ---------------------------------------------------------------------------
# configuration and results

@dataclass(frozen=True)
class SimConfig:
    """Inputs of one simulation run (effective mode + loop + noise floors)."""

    dt: float
    duration: float
    seed: int
    mode: MechanicalMode          # backaction-shifted effective mode
    filt: FeedbackFilter
    s_ff_tot: float               # N^2/Hz, single sided
    s_xx_imp: float               # m^2/Hz, single sided
    force_per_displacement: float | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= 0:
            raise ParameterError("dt and duration must be > 0")
        if self.dt >= TWO_PI / (20.0 * self.mode.omega_m):
            raise ParameterError(
                "dt too coarse: need at least 20 samples per mechanical period")
        if self.duration * self.mode.gamma_m < 5.0:
            raise ParameterError(
                "duration too short for stationarity (need >> 1/Gamma)")
        if self.s_ff_tot < 0 or self.s_xx_imp < 0:
            raise ParameterError("noise PSDs must be >= 0")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def h_scale(self) -> float:
        if self.force_per_displacement is not None:
            return self.force_per_displacement
        m = self.mode
        return m.m_eff * m.gamma_m * m.omega_m

    def loop_model(self) -> LoopModel:
        return LoopModel(mode=self.mode, filt=self.filt,
                         s_ff_tot=self.s_ff_tot, s_xx_imp=self.s_xx_imp,
                         force_per_displacement=self.force_per_displacement)

    @classmethod
    def from_loop_model(cls, model: LoopModel, duration, seed,
                        samples_per_period=24) -> "SimConfig":
        dt = TWO_PI / (samples_per_period * model.mode.omega_m)
        return cls(dt=dt, duration=duration, seed=seed, mode=model.mode,
                   filt=model.filt, s_ff_tot=model.s_ff_tot,
                   s_xx_imp=model.s_xx_imp,
                   force_per_displacement=model.force_per_displacement)

    def with_gain(self, gain) -> "SimConfig":
        return replace(self, filt=self.filt.with_gain(gain))


@dataclass
class TimeSeries:
    """Simulated displacement x and in-loop signal y at fixed step dt."""

    x: np.ndarray
    y: np.ndarray
    dt: float

    def __post_init__(self):
        if self.x.shape != self.y.shape:
            raise ParameterError("x and y must have equal lengths")


# ---------------------------------------------------------------------------
# exact discretization of the damped oscillator

def _oscillator_discretization(mode: MechanicalMode, s_ff_tot, dt):
    """Exponential map M, ZOH force vector G, and noise Cholesky factor."""
    w0, gamma, m_eff = mode.omega_m, mode.gamma_m, mode.m_eff
    lam = gamma / 2.0
    if lam >= w0:
        raise ParameterError("overdamped mode not supported (gamma >= 2 omega)")
    wd = math.sqrt(w0**2 - lam**2)
    e = math.exp(-lam * dt)
    c, s = math.cos(wd * dt), math.sin(wd * dt)
    m00 = e * (c + lam / wd * s)
    m01 = e * s / wd
    m10 = -e * w0**2 / wd * s
    m11 = e * (c - lam / wd * s)

    # ZOH force coupling G = A^-1 (M - I) B, B = (0, 1/m)
    gx = -(gamma * m01 + m11 - 1.0) / (m_eff * w0**2)
    gv = m01 / m_eff

    # exact transition covariance from the stationary solution:
    # Qd = Ps - M Ps M^T with Ps = diag(q/(2 gamma w0^2), q/(2 gamma))
    q = s_ff_tot / (2.0 * m_eff**2)
    ps_x = q / (2.0 * gamma * w0**2)
    ps_v = q / (2.0 * gamma)
    q00 = ps_x - (m00**2 * ps_x + m01**2 * ps_v)
    q01 = -(m00 * m10 * ps_x + m01 * m11 * ps_v)
    q11 = ps_v - (m10**2 * ps_x + m11**2 * ps_v)
    q00 = max(q00, 0.0)
    l11 = math.sqrt(q00)
    l21 = q01 / l11 if l11 > 0 else 0.0
    l22 = math.sqrt(max(q11 - l21**2, 0.0))

    matrices = (m00, m01, m10, m11, gx, gv, l11, l21, l22)
    return matrices, (math.sqrt(ps_x), math.sqrt(ps_v))


def discrete_plant_response(mode: MechanicalMode, s_ff_tot, dt, omega):
    """Sampled transfer x/F of the ZOH-driven exact discretization (m/N)."""
    (m00, m01, m10, m11, gx, gv, *_), _ = _oscillator_discretization(
        mode, max(s_ff_tot, 1.0), dt)
    z = np.exp(-1j * np.asarray(omega, dtype=float) * dt)
    det = (z - m00) * (z - m11) - m01 * m10
    return ((z - m11) * gx + m01 * gv) / det


# ---------------------------------------------------------------------------
# controller discretization

def _bandpass_biquad(center, bandwidth, dt):
    """Bilinear-transform BP biquad, prewarped at the section center."""
    c = center / math.tan(center * dt / 2.0)
    a0 = c**2 + bandwidth * c + center**2
    b = np.array([bandwidth * c, 0.0, -bandwidth * c]) / a0
    a = np.array([2.0 * (center**2 - c**2), c**2 - bandwidth * c + center**2]) / a0
    return b, a


def _biquad_chain_response(b_list, a_list, omega, dt):
    z_inv = np.exp(1j * np.asarray(omega, dtype=float) * dt)  # z^-1 at physics +omega
    resp = np.ones_like(z_inv, dtype=complex)
    for b, a in zip(b_list, a_list):
        resp = resp * ((b[0] + b[1] * z_inv + b[2] * z_inv**2)
                       / (1.0 + a[0] * z_inv + a[1] * z_inv**2))
    return resp


@dataclass
class DiscreteLoop:
    """Packed discrete controller (biquads + rotation + delay + scales)."""

    bq_b: np.ndarray          # (n_biquads, 3)
    bq_a: np.ndarray          # (n_biquads, 2)
    offsets: np.ndarray       # (n_branches + 1,), int64
    rot_cos: np.ndarray       # (n_branches,)
    rot_rc: np.ndarray        # (n_branches,)
    scales: np.ndarray        # (n_branches,)
    n_delay: int
    dt: float
    omega_rot: float

    def response(self, omega):
        """Realized physics-convention response of the full chain (N/m)."""
        omega = np.asarray(omega, dtype=float)
        z_inv = np.exp(1j * omega * self.dt)
        out = np.zeros_like(omega, dtype=complex)
        for br in range(self.scales.size):
            lo, hi = self.offsets[br], self.offsets[br + 1]
            resp = _biquad_chain_response(
                [self.bq_b[i] for i in range(lo, hi)],
                [self.bq_a[i] for i in range(lo, hi)], omega, self.dt)
            rot = self.rot_cos[br] + self.rot_rc[br] * (1.0 - z_inv)
            out = out + self.scales[br] * resp * rot
        delay = np.exp(1j * omega * self.n_delay * self.dt)
        return out * delay


def _solve_rotation(target, fixed, rho):
    """Find (theta, scale > 0) with scale * fixed * (cos + rho sin) = target."""
    w = target / fixed
    if abs(rho.imag) < 1e-12:
        raise ParameterError("rotation stage degenerate (rho is real)")
    s_over_k = w.imag / rho.imag
    c_over_k = w.real - rho.real * s_over_k
    k = 1.0 / math.hypot(c_over_k, s_over_k)
    sin_t, cos_t = k * s_over_k, k * c_over_k
    theta = math.atan2(sin_t, cos_t)
    return theta, 1.0 / k


def discretize_loop(filt: FeedbackFilter, mode: MechanicalMode, h_scale,
                    s_ff_tot, dt, omega_ref=None) -> DiscreteLoop:
    """Build the discrete controller, calibrated at omega_ref.

    Calibration makes the realized open-loop transfer (controller times
    sampled plant) equal h_fb(w) chi(w) at omega_ref exactly; fractional
    delay and hold lag land in the per-branch rotation stage.
    """
    if omega_ref is None:
        omega_ref = mode.omega_m
    w_ref = float(omega_ref)

    # plant mismatch: continuous chi vs sampled ZOH-driven chi
    chi_c = complex(mechanical_susceptibility(
        np.array([w_ref]), mode.omega_m, mode.gamma_m, mode.m_eff)[0])
    chi_d = complex(discrete_plant_response(mode, s_ff_tot, dt, np.array([w_ref]))[0])
    plant_fix = chi_c / chi_d

    n_delay = int(round(filt.delay / dt))
    delay_phase = np.exp(1j * w_ref * n_delay * dt)
    z_inv_ref = np.exp(1j * w_ref * dt)
    rho = (1.0 - z_inv_ref) / (w_ref * dt)

    branches = [(filt.main_center, filt.main_bandwidth, 2,
                 filt.gain, filt.phase_offset)]
    for st in filt.aux_stages:
        branches.append((st.center, st.bandwidth, st.order,
                         filt.gain * st.gain, st.phase))

    bq_b, bq_a, offsets = [], [], [0]
    rot_cos, rot_rc, scales = [], [], []
    for center, bandwidth, order, gain, phase in branches:
        b, a = _bandpass_biquad(center, bandwidth, dt)
        for _ in range(order):
            bq_b.append(b)
            bq_a.append(a)
        offsets.append(len(bq_b))

        # analytic per-branch target at the reference frequency
        h_branch = (gain * np.exp(1j * (w_ref * filt.delay - phase))
                    * complex(bandpass_bracket(w_ref, center, bandwidth)) ** order)
        target = h_scale * h_branch * plant_fix

        if gain == 0.0 or target == 0:
            rot_cos.append(1.0)
            rot_rc.append(0.0)
            scales.append(0.0)
            continue
        chain_ref = complex(_biquad_chain_response(
            bq_b[offsets[-2]:offsets[-1]], bq_a[offsets[-2]:offsets[-1]],
            np.array([w_ref]), dt)[0])
        fixed = chain_ref * delay_phase
        theta, scale = _solve_rotation(target, fixed, rho)
        rot_cos.append(math.cos(theta))
        rot_rc.append(math.sin(theta) / (w_ref * dt))
        scales.append(scale)

    return DiscreteLoop(
        bq_b=np.array(bq_b, dtype=float).reshape(-1, 3),
        bq_a=np.array(bq_a, dtype=float).reshape(-1, 2),
        offsets=np.array(offsets, dtype=np.int64),
        rot_cos=np.array(rot_cos, dtype=float),
        rot_rc=np.array(rot_rc, dtype=float),
        scales=np.array(scales, dtype=float),
        n_delay=n_delay, dt=dt, omega_rot=w_ref)


# ---------------------------------------------------------------------------
# the integration kernel

@njit(cache=True)
def _run_kernel(n_steps, m00, m01, m10, m11, gx, gv, l11, l21, l22,
                sigma_imp, bq_b, bq_a, offsets, rot_cos, rot_rc, scales,
                n_delay, seed, std_x, std_v, limit, x_out, y_out):
    np.random.seed(seed)
    x = std_x * np.random.normal(0.0, 1.0)
    v = std_v * np.random.normal(0.0, 1.0)

    n_bq = bq_b.shape[0]
    s1 = np.zeros(n_bq)
    s2 = np.zeros(n_bq)
    n_br = scales.shape[0]
    u_prev = np.zeros(n_br)
    nbuf = n_delay if n_delay > 0 else 1
    buf = np.zeros(nbuf)
    ptr = 0

    for k in range(n_steps):
        imp = sigma_imp * np.random.normal(0.0, 1.0)
        yk = x + imp
        x_out[k] = x
        y_out[k] = yk

        if n_delay > 0:
            u_in = buf[ptr]
            buf[ptr] = yk
            ptr += 1
            if ptr == nbuf:
                ptr = 0
        else:
            u_in = yk

        force = 0.0
        for br in range(n_br):
            u = u_in
            for q in range(offsets[br], offsets[br + 1]):
                out = bq_b[q, 0] * u + s1[q]
                s1[q] = bq_b[q, 1] * u - bq_a[q, 0] * out + s2[q]
                s2[q] = bq_b[q, 2] * u - bq_a[q, 1] * out
                u = out
            force += scales[br] * (rot_cos[br] * u + rot_rc[br] * (u - u_prev[br]))
            u_prev[br] = u

        n1 = np.random.normal(0.0, 1.0)
        n2 = np.random.normal(0.0, 1.0)
        x_new = m00 * x + m01 * v + gx * force + l11 * n1
        v_new = m10 * x + m11 * v + gv * force + l21 * n1 + l22 * n2
        x = x_new
        v = v_new
        if abs(x) > limit:
            return k
    return -1


def simulate(config: SimConfig) -> TimeSeries:
    """Run the Langevin integration; deterministic for a given seed.

    Raises StabilityError naming the first divergent sample when |x|
    exceeds 1e6 times the open-loop thermal RMS.
    """
    matrices, (std_x, std_v) = _oscillator_discretization(
        config.mode, config.s_ff_tot, config.dt)
    loop = discretize_loop(config.filt, config.mode, config.h_scale,
                           config.s_ff_tot, config.dt)
    sigma_imp = math.sqrt(config.s_xx_imp / (2.0 * config.dt))
    n = config.n_samples
    x_out = np.empty(n)
    y_out = np.empty(n)
    limit = 1e6 * max(std_x, 1e-300)

    diverged = _run_kernel(
        n, *matrices, sigma_imp, loop.bq_b, loop.bq_a, loop.offsets,
        loop.rot_cos, loop.rot_rc, loop.scales, loop.n_delay,
        config.seed, std_x, std_v, limit, x_out, y_out)
    if diverged >= 0:
        raise StabilityError(
            f"simulation diverged at sample {diverged} "
            f"(t = {diverged * config.dt:.4g} s); the loop gain is unstable")
    return TimeSeries(x=x_out, y=y_out, dt=config.dt)


# ---------------------------------------------------------------------------
# spectral estimation

def welch_psd(series, dt, segment_length, overlap=0.5,
              units=UNITS_DISP) -> Spectrum:
    """Single-sided Welch PSD (Hann window, density normalization).

    Normalized so a sinusoid of amplitude A integrates to A^2/2 and white
    noise of variance sigma^2 at rate 1/dt gives a flat level 2 sigma^2 dt.
    """
    series = np.asarray(series, dtype=float)
    segment_length = int(segment_length)
    if segment_length > series.size:
        raise ParameterError("segment_length exceeds the series length")
    freqs, psd = _scipy_welch(
        series, fs=1.0 / dt, window="hann", nperseg=segment_length,
        noverlap=int(overlap * segment_length), detrend=False,
        scaling="density", return_onesided=True)
    return Spectrum(freqs, psd, units, {"estimator": "welch",
                                        "segments": f"{segment_length}"})


def welch_psd_series(ts: TimeSeries, segment_length, overlap=0.5,
                     which="x") -> Spectrum:
    data = ts.x if which == "x" else ts.y
    return welch_psd(data, ts.dt, segment_length, overlap)


# ---------------------------------------------------------------------------
# gain sweep against the frequency-domain model

def _burn_in_samples(model: LoopModel, dt) -> int:
    gamma_closed = model.mode.gamma_m * (1.0 + max(model.effective_gain(), 0.0))
    return int(min(10.0 / (gamma_closed * dt), 0.2 / dt))


def occupancy_vs_gain_sweep(config: SimConfig, gains, span_linewidths=60.0,
                            seeds=None):
    """Simulate each gain and pair the estimated occupancy with the model.

    Returns a list of (gain, n_sim, n_model) tuples.  ``seeds`` optionally
    overrides the per-gain seed (defaults to config.seed + index).
    """
    results = []
    base_model = config.loop_model()
    for i, gain in enumerate(gains):
        seed = config.seed + i if seeds is None else seeds[i]
        cfg = replace(config.with_gain(gain), seed=seed)
        model = cfg.loop_model()
        ts = simulate(cfg)

        skip = _burn_in_samples(model, cfg.dt)
        x = ts.x[skip:]
        gamma_closed_hz = (model.mode.gamma_m / TWO_PI
                           * (1.0 + max(model.effective_gain(), 0.0)))
        nperseg = int(min(2 ** math.ceil(math.log2(
            40.0 / (gamma_closed_hz * cfg.dt))), x.size // 4))
        psd = welch_psd(x, cfg.dt, nperseg)

        f0 = model.mode.omega_m / TWO_PI
        half_span = span_linewidths * gamma_closed_hz / 2.0
        half_span = min(half_span, 0.8 * f0)
        windowed = psd.crop(f0 - half_span, f0 + half_span)
        n_sim = occupancy_from_psd(windowed, model.mode.x_zpf)

        freqs, scaled = model_gain_grid(base_model, gain)
        n_model = occupancy_from_psd(
            closed_loop_displacement_psd(scaled, freqs), model.mode.x_zpf)
        results.append((float(gain), float(n_sim), float(n_model)))
    return results
