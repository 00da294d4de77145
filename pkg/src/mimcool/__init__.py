"""mimcool: modeling, simulation and calibration of laser cooling in a
membrane-in-the-middle cavity optomechanical system.

Internal convention: angular units (rad/s) for every rate and frequency;
ordinary Hz at all I/O boundaries.  PSDs are single sided.
"""

from .backaction import (BackactionResult, backaction_summary, fit_damping_offset,
                         fit_spring_vs_power, optical_damping, optical_spring)
from .config import ExperimentConfig, load_config, load_config_dict
from .errors import (AccuracyWarning, CalibrationError, ConfigError, FitError,
                     MimcoolError, ParameterError, RankDeficiencyError,
                     ResolutionWarning, StabilityError, UnitsError)
from .feedback import (AuxFilterStage, FeedbackFilter, LoopModel,
                       closed_loop_displacement_psd, closed_loop_susceptibility,
                       cold_damping_occupancy, cold_damping_occupancy_psd,
                       filter_response, inloop_psd, loop_stability_scan,
                       occupancy_from_psd, occupancy_vs_gain_model,
                       optimal_gain, tune_phase)
from .limits import (ForceNoise, ImprecisionBudget, feedback_min_occupancy_basic,
                     feedback_min_occupancy_full, force_noise, imprecision_budget,
                     min_sideband_occupancy, optimal_detuning,
                     optimal_detuning_numeric, quanta_conversions,
                     sideband_occupancy)
from .lsq import FitResult, damped_least_squares, linear_through_origin
from .params import (CouplingConfig, DetectionChain, MechanicalMode, OpticalBeam,
                     OpticalCavity, derive_mode_quantities, detection_efficiency,
                     g0_max, intracavity_photons, mode_matching_from_transmission)
from .report import build_report, desk_sim_config, effective_loop_model
from .sim import SimConfig, TimeSeries, occupancy_vs_gain_sweep, simulate, welch_psd
from .specfit import (CalibrationConstant, FrequencyNoiseCal, GasDampingModel,
                      GasMaterial, ReflectionModel, calibrate_anchor,
                      calibrated_displacement, fit_closed_loop, fit_inverse_area,
                      fit_lorentzian, fit_q_vs_pressure, fit_reflection_dip,
                      frequency_noise_calibration, gas_damping_quality,
                      reflection_dip, voltage_to_noise_spectra)
from .spectrum import Spectrum
from .tin import (TinBudget, TransductionExpansion, cubic_correlation_spectrum,
                  phase_expansion, phase_quadrature, tin_budget,
                  triple_convolution_spectrum)

__version__ = "0.1.0"
