"""Thermal intermodulation noise: the nonlinear transduction expansion of
the detected phase quadrature and the Wick-theorem spectral terms.

The detected phase quadrature of a resonant homodyne readout is
y(u) = -2u/(1+u^2) with u = 2 Delta/kappa the normalized detuning; the
module expands it in small fluctuations du around a mean u0 and provides
the spectra of the leading nonlinear correlators for stationary Gaussian
detuning noise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import AccuracyWarning, ParameterError
from .spectrum import Spectrum


def phase_quadrature(upsilon):
    """Exact detected phase quadrature -2u/(1+u^2) (arbitrary overall scale)."""
    upsilon = np.asarray(upsilon, dtype=float)
    return -2.0 * upsilon / (1.0 + upsilon**2)


@dataclass(frozen=True)
class TransductionExpansion:
    """Cubic expansion of the phase quadrature around a mean detuning.

    y(u0 + du) = -(2/(1+u0^2)) (c0 + c1 du + c2 du^2 + c3 du^3) + O(du^4)
    """

    upsilon0: float
    coeffs: tuple  # (c0, c1, c2, c3)

    @property
    def prefactor(self) -> float:
        return -2.0 / (1.0 + self.upsilon0**2)

    def evaluate(self, delta_upsilon):
        du = np.asarray(delta_upsilon, dtype=float)
        c0, c1, c2, c3 = self.coeffs
        return self.prefactor * (c0 + c1 * du + c2 * du**2 + c3 * du**3)


def phase_expansion(upsilon0) -> TransductionExpansion:
    """Closed-form cubic expansion coefficients at mean detuning u0.

    c0 = u0
    c1 = (1 - u0^2)/(1 + u0^2)
    c2 = u0 (u0^2 - 3)/(1 + u0^2)^2
    c3 = (u0^4 - 6 u0^2 + 1)/(1 + u0^2)^3

    On resonance (u0 = 0) the even terms vanish: coefficients (0, 1, 0, 1).
    """
    u0 = float(upsilon0)
    denom = 1.0 + u0**2
    return TransductionExpansion(
        upsilon0=u0,
        coeffs=(u0,
                (1.0 - u0**2) / denom,
                u0 * (u0**2 - 3.0) / denom**2,
                (u0**4 - 6.0 * u0**2 + 1.0) / denom**3))


# ---------------------------------------------------------------------------
# Wick-theorem spectral contributions

def cubic_correlation_spectrum(s_upsilon: Spectrum, variance=None) -> Spectrum:
    """Spectrum of the <du(t) du(t+tau)^3> correlator for Gaussian noise.

    Wick's theorem factorizes it as 3 <du^2> <du(t) du(t+tau)>, so the
    spectral contribution is 3 * variance * S on the same grid (no mode
    mixing).  ``variance`` defaults to the band power of the input.
    """
    if variance is None:
        variance = s_upsilon.band_power()
    if variance < 0:
        raise ParameterError("variance must be >= 0")
    out = s_upsilon.scaled(3.0 * variance)
    out.metadata["kind"] = "cubic_correlation"
    return out


def _two_sided(spectrum: Spectrum):
    """Embed a single-sided PSD into a symmetric two-sided array.

    Returns (values_two_sided, df, n_half) where the array covers
    [-n_half df, +n_half df] and carries half the single-sided density.
    """
    df = spectrum.df
    bins = np.rint(spectrum.freqs / df).astype(int)
    if np.any(bins < 0):
        raise ParameterError("single-sided spectrum must live at f >= 0")
    n_half = int(bins[-1])
    two = np.zeros(2 * n_half + 1)
    center = n_half
    for b, v in zip(bins, spectrum.values):
        half = 0.5 * v if b != 0 else v
        two[center + b] += half
        if b != 0:
            two[center - b] += half
    return two, df, n_half


def triple_convolution_spectrum(s_upsilon: Spectrum) -> Spectrum:
    """Triple self-convolution (S x S x S) of a single-sided PSD.

    This is the spectral weight of the <du du>^3 Wick contraction, which
    mixes lines at all sum/difference combinations.  The convolution is
    linear (implicitly zero padded), with a df factor per convolution so
    band powers multiply: integral(out) = integral(in)^3.  The output grid
    extends to three times the input maximum frequency.
    """
    values = s_upsilon.values
    total = float(np.sum(values))
    if total > 0:
        n_edge = max(values.size // 20, 1)
        edge_power = float(np.sum(values[-n_edge:]))
        if edge_power > 0.01 * total:
            warnings.warn(
                "more than 1% of input power sits in the top 5% of the grid; "
                "the convolution result may be truncated", AccuracyWarning,
                stacklevel=2)

    two, df, n_half = _two_sided(s_upsilon)
    conv2 = fftconvolve(two, two) * df          # covers +-2 n_half df
    conv3 = fftconvolve(conv2, two) * df        # covers +-3 n_half df
    center = 3 * n_half
    positive = conv3[center:].copy()
    single = 2.0 * positive
    single[0] = positive[0]
    freqs = np.arange(single.size) * df
    # the constructor requires >= 2 samples; guaranteed by Spectrum input
    return Spectrum(freqs, np.maximum(single, 0.0), s_upsilon.units,
                    dict(s_upsilon.metadata, kind="triple_convolution"))


@dataclass(frozen=True)
class TinBudget:
    """Order-of-magnitude scalings of the intermodulation contributions."""

    first_order_scaling: float    # (g0/kappa)^2 n_th
    second_order_scaling: float   # (g0/kappa)^4 n_th^2
    rms_detuning: float           # 2 (g0/kappa) sqrt(n_th)


def tin_budget(g0, kappa, n_th) -> TinBudget:
    """Fill the intermodulation scaling budget for a thermal membrane."""
    if g0 < 0 or kappa <= 0 or n_th < 0:
        raise ParameterError("need g0 >= 0, kappa > 0, n_th >= 0")
    ratio = g0 / kappa
    first = ratio**2 * n_th
    return TinBudget(
        first_order_scaling=first,
        second_order_scaling=first**2,
        rms_detuning=2.0 * ratio * math.sqrt(n_th))
