"""Uniform-grid, single-sided power spectral densities with a units tag.

The frequency axis is ordinary frequency in Hz (user-facing convention);
PSD values are per Hz, single sided, so that the band power is
integral(S df).  CSV layout: '#'-prefixed comment headers including
'units=<tag>', then two comma-separated columns (frequency_Hz, psd).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, UnitsError

UNITS_VOLT = "V^2/Hz"
UNITS_DISP = "m^2/Hz"
UNITS_FREQ = "(rad/s)^2/Hz"
UNITS_PHASE = "rad^2/Hz"
UNITS_QUANTA = "quanta"
UNITS_DIMLESS = "1/Hz"

KNOWN_UNITS = (UNITS_VOLT, UNITS_DISP, UNITS_FREQ, UNITS_PHASE,
               UNITS_QUANTA, UNITS_DIMLESS)


@dataclass
class Spectrum:
    """Single-sided PSD samples on a strictly increasing uniform grid."""

    freqs: np.ndarray          # Hz
    values: np.ndarray         # PSD in `units`
    units: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.freqs.ndim != 1 or self.freqs.size < 2:
            raise ParameterError("frequency grid needs at least two samples")
        if self.freqs.shape != self.values.shape:
            raise ParameterError("freqs and values must have matching shapes")
        df = np.diff(self.freqs)
        if np.any(df <= 0):
            raise ParameterError("frequency grid must be strictly increasing")
        if not np.allclose(df, df[0], rtol=1e-6, atol=0.0):
            raise ParameterError("frequency grid must be uniform")
        if np.any(~np.isfinite(self.values)):
            raise ParameterError("PSD values must be finite")
        if np.any(self.values < 0):
            raise ParameterError("PSD values must be non-negative")
        if self.units not in KNOWN_UNITS:
            raise UnitsError(
                f"unknown units tag {self.units!r}; expected one of {KNOWN_UNITS}")

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def band_power(self) -> float:
        """Trapezoid integral of the PSD over the grid (units * Hz)."""
        return float(np.trapezoid(self.values, self.freqs))

    def require_units(self, units: str, context: str = ""):
        if self.units != units:
            raise UnitsError(
                f"{context or 'operation'} requires a {units} spectrum, "
                f"got {self.units}")

    def scaled(self, factor: float, units: str | None = None) -> "Spectrum":
        return Spectrum(self.freqs.copy(), self.values * factor,
                        units or self.units, dict(self.metadata))

    def crop(self, f_lo: float, f_hi: float) -> "Spectrum":
        sel = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        if np.count_nonzero(sel) < 2:
            raise ParameterError("crop window keeps fewer than two samples")
        return Spectrum(self.freqs[sel], self.values[sel], self.units,
                        dict(self.metadata))

    # -- CSV round trip -----------------------------------------------------

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# units={self.units}\n")
            for key in sorted(self.metadata):
                fh.write(f"# {key}={self.metadata[key]}\n")
            fh.write("# columns=frequency_Hz,psd\n")
            for f, v in zip(self.freqs, self.values):
                fh.write(f"{f:.12g},{v:.12g}\n")

    @classmethod
    def read_csv(cls, path) -> "Spectrum":
        units = None
        metadata = {}
        freqs, values = [], []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if "=" in body:
                        key, _, val = body.partition("=")
                        key = key.strip()
                        if key == "units":
                            units = val.strip()
                        elif key != "columns":
                            metadata[key] = val.strip()
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise ParameterError(
                        f"{path}:{lineno}: expected two comma-separated columns")
                freqs.append(float(parts[0]))
                values.append(float(parts[1]))
        if units is None:
            raise UnitsError(f"{path}: missing '# units=<tag>' header")
        return cls(np.array(freqs), np.array(values), units, metadata)


def uniform_grid(center_hz: float, span_hz: float, n: int) -> np.ndarray:
    """Symmetric uniform grid of n points around center_hz."""
    if n < 2:
        raise ParameterError("grid needs at least two points")
    return np.linspace(center_hz - span_hz / 2.0, center_hz + span_hz / 2.0, n)
