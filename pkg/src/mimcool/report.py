"""Assembly of the full analysis pipeline from a configuration: derived
quantities, cooling limits, noise budgets, the closed-loop model, and the
machine-readable report document.

All frequencies in the report are ordinary Hz; PSDs are single sided.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import backaction, limits, tin
from .constants import HBAR, TWO_PI
from .errors import ParameterError
from .feedback import (LoopModel, occupancy_vs_gain_model, optimal_gain,
                       tune_phase)
from .params import (MechanicalMode, detection_efficiency, g0_max,
                     intracavity_photons)
from .sim import SimConfig

CONVENTIONS = {
    "frequencies": "ordinary Hz in every report and file; angular internally",
    "psd": "single-sided, per Hz",
    "linewidths": "FWHM",
    "occupancy_clamp": "negative formula values are clamped to 0 in reports "
                       "only; the raw value is kept alongside",
}


def _hz(omega_rad_s):
    return omega_rad_s / TWO_PI


def _occupancy_entry(value):
    if value < 0:
        return {"value": 0.0, "raw": float(value), "valid": False}
    return float(value)


def effective_loop_model(config, s_xx_imp=None, tuned=True):
    """Paper-scale closed-loop model implied by a configuration.

    Backaction from the probe and cooling beams shifts the mode; the
    anchor occupancy fixes the total force noise; the imprecision defaults
    to the observed excess (noise.n_imp_excess, bare-mode quanta) or the
    computed quantum budget.
    """
    mode = config.mechanical
    cavity = config.cavity
    probe, cooling = config.probe, config.cooling
    filt = config.feedback_filter
    if probe is None or cooling is None or filt is None:
        raise ParameterError(
            "loop model needs [probe], [cooling] and [filter] sections")

    d_probe = backaction.optical_spring(probe.g, probe.detuning,
                                        cavity.kappa, mode.omega_m)
    d_cool = backaction.optical_spring(cooling.g, cooling.detuning,
                                       cavity.kappa, mode.omega_m)
    gamma_probe = backaction.optical_damping(probe.g, probe.detuning,
                                             cavity.kappa, mode.omega_m)
    gamma_cool = backaction.optical_damping(cooling.g, cooling.detuning,
                                            cavity.kappa, mode.omega_m)
    omega_tot = mode.omega_m + d_probe + d_cool
    gamma_tot = mode.gamma_m + gamma_probe + gamma_cool
    mode_eff = MechanicalMode(omega_m=omega_tot, gamma_m=gamma_tot,
                              m_eff=mode.m_eff, temperature=mode.temperature)

    c_q = probe.quantum_cooperativity(cavity, mode)
    n_min_c = limits.min_sideband_occupancy(cooling.detuning, cavity.kappa,
                                            mode.omega_m)
    n_anchor = limits.sideband_occupancy(mode.n_thermal, mode.gamma_m, c_q,
                                         n_min_c, gamma_cool, gamma_tot)

    if s_xx_imp is None:
        noise = config.noise
        if noise["n_imp_excess"] is not None:
            s_xx_imp = limits.sxx_from_n_imp(noise["n_imp_excess"], mode)
        else:
            eta = detection_efficiency(config.detection) if config.detection else 1.0
            budget = limits.imprecision_budget(
                mode, c_q, eta, config.coupling.g0,
                s_omega_omega=noise["s_omega_omega"],
                s_xx_mirror=noise["s_xx_mirror"])
            s_xx_imp = budget.total

    model = LoopModel.from_open_loop_occupancy(mode_eff, filt, n_anchor, s_xx_imp)
    if tuned:
        model = model.tuned()
    return model, {
        "delta_omega_probe_hz": _hz(d_probe),
        "delta_omega_cooling_hz": _hz(d_cool),
        "gamma_probe_hz": _hz(gamma_probe),
        "gamma_cooling_hz": _hz(gamma_cool),
        "omega_tot_hz": _hz(omega_tot),
        "gamma_tot_hz": _hz(gamma_tot),
        "c_q_probe": c_q,
        "n_min_cooling_beam": n_min_c,
        "anchor_occupancy": n_anchor,
    }


def desk_sim_config(config, gain=None, seed=None, duration=None) -> SimConfig:
    """Desk-scale simulation scenario from the [simulation] section.

    The bath occupancy is scaled down (default 1e4) and the effective
    linewidth broadened so acceptance-grade runs finish in seconds;
    n_imp is referenced to the effective (broadened) mode.
    """
    s = config.simulation
    mech = config.mechanical
    mode_eff = MechanicalMode(omega_m=mech.omega_m, gamma_m=s["gamma_tot"],
                              m_eff=mech.m_eff, temperature=mech.temperature)
    filt = config.feedback_filter
    if filt is None:
        raise ParameterError("simulation needs a [filter] section")
    filt = filt.with_gain(s["gain"] if gain is None else gain)
    filt = filt.with_phase(tune_phase(filt, mode_eff.omega_m))
    s_ff = 4.0 * HBAR * mode_eff.m_eff * mode_eff.omega_m * mode_eff.gamma_m \
        * (s["n_th"] + 0.5)
    s_imp = 2.0 * s["n_imp"] * mode_eff.s_xzp
    return SimConfig(dt=1.0 / s["sample_rate"],
                     duration=s["duration"] if duration is None else duration,
                     seed=s["seed"] if seed is None else seed,
                     mode=mode_eff, filt=filt, s_ff_tot=s_ff, s_xx_imp=s_imp)


def predicted_minimum_occupancy(model: LoopModel, n_gains=21, span=12.0):
    """Minimum of the integrated closed-loop occupancy over a gain sweep."""
    g_star = optimal_gain(model.mode, model.s_ff_tot, model.s_xx_imp)
    unit_gain = model.with_gain(1.0).effective_gain()
    center = g_star / max(unit_gain, 1e-12)
    gains = np.geomspace(center / span, center * span, n_gains)
    occ = occupancy_vs_gain_model(model, gains)
    idx = int(np.argmin(occ))
    return {
        "minimum_occupancy": float(occ[idx]),
        "at_filter_gain": float(gains[idx]),
        "at_effective_gain": float(model.with_gain(gains[idx]).effective_gain()),
        "gains_scanned": [float(g) for g in gains],
    }


def build_report(config, include_gain_sweep=True) -> dict:
    """Full machine-readable analysis document for a configuration."""
    mode = config.mechanical
    cavity = config.cavity
    report = {
        "conventions": dict(CONVENTIONS),
        "config": config.to_base_dict(),
        "user_supplied_keys": sorted(config.provenance),
    }

    report["derived"] = {
        "x_zpf_m": mode.x_zpf,
        "q_factor": mode.q_factor,
        "n_th": mode.n_thermal,
        "gamma_decoherence_hz": _hz(mode.gamma_decoherence),
        "s_ff_thermal_N2_per_Hz": mode.s_ff_thermal,
        "s_xzp_m2_per_Hz": mode.s_xzp,
        "coherent_oscillations": mode.omega_m / mode.gamma_decoherence,
    }
    report["cavity"] = {
        "omega_c_hz": _hz(cavity.omega_c),
        "free_spectral_range_hz": _hz(cavity.free_spectral_range),
        "finesse": cavity.finesse,
        "g0_max_hz": _hz(g0_max(cavity, mode, config.coupling)),
    }

    beams = {}
    for beam in (config.probe, config.cooling):
        if beam is None:
            continue
        beams[beam.label] = {
            "power_W": beam.power_in,
            "detuning_hz": _hz(beam.detuning),
            "g_hz": _hz(beam.g),
            "n_cav_from_power": intracavity_photons(cavity, beam),
            "c_q": beam.quantum_cooperativity(cavity, mode),
        }
    report["beams"] = beams

    if config.detection is not None:
        report["detection"] = {
            "eta_det": detection_efficiency(config.detection),
            "eta_det_amplitude_convention": detection_efficiency(
                config.detection, fiber_loss_as_power=False),
        }

    delta_opt = limits.optimal_detuning(cavity.kappa, mode.omega_m)
    sideband = {
        "optimal_detuning_hz": _hz(delta_opt),
        "n_min_at_optimal_detuning": _occupancy_entry(
            limits.min_sideband_occupancy(delta_opt, cavity.kappa, mode.omega_m)),
        "n_min_at_half_kappa": _occupancy_entry(
            limits.min_sideband_occupancy(-cavity.kappa / 2.0, cavity.kappa,
                                          mode.omega_m)),
    }
    report["sideband"] = sideband

    if config.probe is not None and config.cooling is not None \
            and config.feedback_filter is not None:
        model, loop_info = effective_loop_model(config)
        report["loop"] = loop_info
        sideband["anchor_occupancy"] = _occupancy_entry(loop_info["anchor_occupancy"])

        c_q = loop_info["c_q_probe"]
        noise = config.noise
        eta = (detection_efficiency(config.detection)
               if config.detection is not None else 1.0)
        budget = limits.imprecision_budget(
            mode, c_q, eta, config.coupling.g0,
            s_omega_omega=noise["s_omega_omega"],
            s_xx_mirror=noise["s_xx_mirror"])
        report["imprecision"] = {
            "s_xx_quantum_m2_per_Hz": budget.s_xx_quantum,
            "sqrt_s_xx_quantum_am_per_rtHz": 1e18 * math.sqrt(budget.s_xx_quantum),
            "s_xx_laser_m2_per_Hz": budget.s_xx_laser_freq,
            "s_xx_mirror_m2_per_Hz": budget.s_xx_mirror,
            "laser_figure": budget.laser_figure,
            "mirror_figure": budget.mirror_figure,
            "total_m2_per_Hz": budget.total,
            "n_imp_excess_observed": noise["n_imp_excess"],
            "s_xx_imp_used_m2_per_Hz": model.s_xx_imp,
        }

        fb = {
            "n_min_fb_ideal": _occupancy_entry(
                limits.feedback_min_occupancy_full(
                    c_q, eta, 0.0, mode.n_thermal, mode.gamma_m, mode.x_zpf)),
            "n_min_fb_with_mirror_noise": _occupancy_entry(
                limits.feedback_min_occupancy_full(
                    c_q, eta, noise["s_xx_mirror"], mode.n_thermal,
                    mode.gamma_m, mode.x_zpf)),
            "n_min_basic_from_budgets": _occupancy_entry(
                limits.feedback_min_occupancy_basic(
                    model.s_ff_tot, model.s_xx_imp)),
            "optimal_cold_damping_gain": optimal_gain(
                model.mode, model.s_ff_tot, model.s_xx_imp),
        }
        if include_gain_sweep:
            sweep = predicted_minimum_occupancy(model)
            fb["predicted_minimum_occupancy"] = _occupancy_entry(
                sweep["minimum_occupancy"])
            fb["predicted_minimum_at_effective_gain"] = sweep["at_effective_gain"]
        report["feedback"] = fb

    if config.coupling.g0 > 0:
        budget = tin.tin_budget(config.coupling.g0, cavity.kappa, mode.n_thermal)
        report["tin"] = {
            "first_order_scaling": budget.first_order_scaling,
            "second_order_scaling": budget.second_order_scaling,
            "rms_detuning": budget.rms_detuning,
        }
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
