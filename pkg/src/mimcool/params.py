"""Domain types for the optomechanical system and directly derived quantities.

Unit convention (used throughout the package): every rate, frequency,
detuning and linewidth is stored internally in *angular* units (rad/s).
Conversion to/from ordinary frequency (Hz) happens only at the I/O
boundary (config files, CSV, JSON reports).  All other quantities are SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import HBAR, KB, TWO_PI, C_LIGHT
from .errors import ParameterError


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not (value > 0) or not math.isfinite(value):
            raise ParameterError(f"{name} must be finite and > 0, got {value!r}")


def _require_fraction(**kwargs):
    for name, value in kwargs.items():
        if not (0.0 <= value <= 1.0):
            raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class MechanicalMode:
    """A single mechanical resonator mode.

    Parameters
    ----------
    omega_m : float
        Angular resonance frequency (rad/s).
    gamma_m : float
        Intrinsic angular damping rate, FWHM convention (rad/s).
    m_eff : float
        Effective (modal) mass (kg).
    temperature : float
        Bath temperature (K).
    """

    omega_m: float
    gamma_m: float
    m_eff: float
    temperature: float = 300.0

    def __post_init__(self):
        _require_positive(omega_m=self.omega_m, gamma_m=self.gamma_m,
                          m_eff=self.m_eff, temperature=self.temperature)

    @property
    def x_zpf(self) -> float:
        """Zero-point displacement amplitude sqrt(hbar / 2 m omega) (m)."""
        return math.sqrt(HBAR / (2.0 * self.m_eff * self.omega_m))

    @property
    def q_factor(self) -> float:
        return self.omega_m / self.gamma_m

    @property
    def n_thermal(self) -> float:
        """Bath occupancy in the classical limit kB T / (hbar omega)."""
        return KB * self.temperature / (HBAR * self.omega_m)

    @property
    def gamma_decoherence(self) -> float:
        """Thermal decoherence rate n_th * gamma_m (rad/s)."""
        return self.n_thermal * self.gamma_m

    @property
    def s_ff_thermal(self) -> float:
        """Single-sided thermal Langevin force PSD 4 m gamma kB T (N^2/Hz)."""
        return 4.0 * self.m_eff * self.gamma_m * KB * self.temperature

    @property
    def s_xzp(self) -> float:
        """Peak displacement PSD of the ground state, 4 x_zpf^2 / gamma_m (m^2/Hz)."""
        return 4.0 * self.x_zpf**2 / self.gamma_m


@dataclass(frozen=True)
class OpticalCavity:
    """Fabry-Perot cavity parameters.

    ``eta_c`` is the overcoupling fraction: the share of the total decay
    rate going through the input mirror.  When both mirror power
    transmissivities are given, eta_c must agree with t_f/(t_f+t_e).
    """

    kappa: float            # FWHM angular linewidth (rad/s)
    length: float           # cavity length (m)
    wavelength: float       # laser wavelength (m)
    eta_c: float = 0.5
    t_f: float | None = None  # input (fiber) mirror power transmissivity
    t_e: float | None = None  # end mirror power transmissivity

    def __post_init__(self):
        _require_positive(kappa=self.kappa, length=self.length,
                          wavelength=self.wavelength)
        _require_fraction(eta_c=self.eta_c)
        if self.t_f is not None and self.t_e is not None:
            implied = self.t_f / (self.t_f + self.t_e)
            if abs(implied - self.eta_c) > 1e-3:
                raise ParameterError(
                    f"eta_c={self.eta_c} inconsistent with t_f/(t_f+t_e)={implied:.4f}")

    @property
    def omega_c(self) -> float:
        """Optical resonance angular frequency 2 pi c / wavelength (rad/s)."""
        return TWO_PI * C_LIGHT / self.wavelength

    @property
    def free_spectral_range(self) -> float:
        """FSR in angular units, 2 pi c / 2L (rad/s)."""
        return TWO_PI * C_LIGHT / (2.0 * self.length)

    @property
    def finesse(self) -> float:
        return self.free_spectral_range / self.kappa


@dataclass(frozen=True)
class OpticalBeam:
    """One drive beam: incident power, detuning and measured coupling."""

    power_in: float         # W
    detuning: float         # rad/s, signed (red detuned < 0)
    g: float = 0.0          # field-enhanced coupling g0 sqrt(n_cav) (rad/s)
    label: str = "probe"

    def __post_init__(self):
        if self.power_in < 0:
            raise ParameterError(f"power_in must be >= 0, got {self.power_in!r}")
        if self.g < 0:
            raise ParameterError(f"g must be >= 0, got {self.g!r}")

    def quantum_cooperativity(self, cavity: OpticalCavity, mode: MechanicalMode) -> float:
        """C_q = 4 g^2 / (kappa gamma), gamma the thermal decoherence rate."""
        return 4.0 * self.g**2 / (cavity.kappa * mode.gamma_decoherence)


@dataclass(frozen=True)
class CouplingConfig:
    """Membrane-cavity coupling inputs for the g0 estimate."""

    g0: float = 0.0                   # vacuum optomechanical coupling (rad/s)
    membrane_reflectivity: float = 0.0  # |r|, field reflectivity
    overlap: float = 1.0              # transverse overlap xi

    def __post_init__(self):
        _require_fraction(membrane_reflectivity=self.membrane_reflectivity,
                          overlap=self.overlap)
        if self.g0 < 0:
            raise ParameterError(f"g0 must be >= 0, got {self.g0!r}")


@dataclass(frozen=True)
class DetectionChain:
    """Multiplicative efficiency budget of the homodyne detection path.

    ``fiber_loss`` is the power ratio |beta|^2 measured off resonance; see
    `detection_efficiency` for how it enters the product.
    """

    mode_matching: float      # epsilon
    overcoupling: float       # eta_c
    fiber_loss: float         # eta_r = |beta|^2 (power ratio)
    visibility: float         # homodyne fringe visibility
    quantum_efficiency: float  # photodetector QE

    def __post_init__(self):
        _require_fraction(mode_matching=self.mode_matching,
                          overcoupling=self.overcoupling,
                          fiber_loss=self.fiber_loss,
                          visibility=self.visibility,
                          quantum_efficiency=self.quantum_efficiency)


def derive_mode_quantities(mode: MechanicalMode) -> dict:
    """All scalar quantities derived from a mechanical mode, as a dict."""
    return {
        "x_zpf": mode.x_zpf,
        "q_factor": mode.q_factor,
        "n_th": mode.n_thermal,
        "gamma_decoherence": mode.gamma_decoherence,
    }


def intracavity_photons(cavity: OpticalCavity, beam: OpticalBeam) -> float:
    """Steady-state intracavity photon number for a detuned drive.

    n_cav = (eta_c kappa P / hbar omega_c) / (Delta^2 + (kappa/2)^2)
    """
    photon_flux = beam.power_in / (HBAR * cavity.omega_c)
    return (cavity.eta_c * cavity.kappa * photon_flux
            / (beam.detuning**2 + (cavity.kappa / 2.0)**2))


def g0_max(cavity: OpticalCavity, mode: MechanicalMode,
           coupling: CouplingConfig) -> float:
    """Upper estimate of the vacuum coupling for optimal membrane placement.

    g0_max = 2 (omega_c / L) |r| x_zpf xi
    """
    return (2.0 * cavity.omega_c / cavity.length
            * coupling.membrane_reflectivity * mode.x_zpf * coupling.overlap)


def detection_efficiency(chain: DetectionChain, fiber_loss_as_power=True) -> float:
    """Total detection efficiency, the product of the chain factors.

    The fiber-loss factor is ambiguous between an amplitude (|beta|) and a
    power (|beta|^2) convention; the power ratio reproduces the measured
    overall efficiency more closely and is the default.  Pass
    ``fiber_loss_as_power=False`` to use sqrt(fiber_loss) instead.
    """
    beta_factor = chain.fiber_loss if fiber_loss_as_power else math.sqrt(chain.fiber_loss)
    return (chain.mode_matching * chain.overcoupling * beta_factor
            * chain.visibility * chain.quantum_efficiency)


def mode_matching_from_transmission(p_t_over_p_in: float, eta_c: float) -> float:
    """Invert the on-resonance transmission P_t/P_in = 4 eps eta_c (1-eta_c)."""
    if not (0.0 < eta_c < 1.0):
        raise ParameterError(
            f"eta_c must lie strictly inside (0, 1) to invert, got {eta_c!r}")
    if p_t_over_p_in < 0:
        raise ParameterError("transmission ratio must be >= 0")
    return p_t_over_p_in / (4.0 * eta_c * (1.0 - eta_c))
