"""Core parameter types and directly derived quantities."""

import math

import mpmath
import numpy as np
import pytest

from mimcool import (CouplingConfig, DetectionChain, MechanicalMode, OpticalBeam,
                     OpticalCavity, ParameterError, derive_mode_quantities,
                     detection_efficiency, g0_max, intracavity_photons,
                     mode_matching_from_transmission)
from mimcool.constants import HBAR, KB, TWO_PI

mpmath.mp.dps = 40


@pytest.fixture
def paper_mode():
    return MechanicalMode(omega_m=TWO_PI * 1.3e6, gamma_m=TWO_PI * 9e-3,
                          m_eff=200e-15, temperature=300.0)


@pytest.fixture
def paper_cavity():
    return OpticalCavity(kappa=TWO_PI * 340e6, length=95e-6,
                         wavelength=1542e-9, eta_c=0.9)


class TestMechanicalMode:
    def test_x_zpf_headline_value(self, paper_mode):
        # 5.7 fm, 2% tolerance
        assert paper_mode.x_zpf == pytest.approx(5.7e-15, rel=0.02)

    def test_x_zpf_against_high_precision(self, paper_mode):
        expected = mpmath.sqrt(mpmath.mpf(HBAR)
                               / (2 * mpmath.mpf("200e-15") * TWO_PI * 1.3e6))
        assert paper_mode.x_zpf == pytest.approx(float(expected), rel=1e-12)

    def test_quality_factor(self, paper_mode):
        assert paper_mode.q_factor == pytest.approx(1.4e8, rel=0.05)

    def test_n_thermal_value(self, paper_mode):
        expected = mpmath.mpf(KB) * 300 / (mpmath.mpf(HBAR) * TWO_PI * 1.3e6)
        assert paper_mode.n_thermal == pytest.approx(float(expected), rel=1e-12)
        # the published estimate is ~5.1e6; formula value must sit within 10%
        assert paper_mode.n_thermal == pytest.approx(5.1e6, rel=0.10)

    def test_decoherence_rate(self, paper_mode):
        assert paper_mode.gamma_decoherence == pytest.approx(
            paper_mode.n_thermal * paper_mode.gamma_m, rel=1e-14)
        assert paper_mode.gamma_decoherence / TWO_PI == pytest.approx(48e3, rel=0.15)

    def test_x_zpf_mass_scaling_exact(self, paper_mode):
        heavier = MechanicalMode(paper_mode.omega_m, paper_mode.gamma_m,
                                 2.0 * paper_mode.m_eff, paper_mode.temperature)
        assert heavier.x_zpf == pytest.approx(paper_mode.x_zpf / math.sqrt(2.0),
                                              rel=1e-14)

    def test_x_zpf_frequency_scaling(self, paper_mode):
        faster = MechanicalMode(2.0 * paper_mode.omega_m, paper_mode.gamma_m,
                                paper_mode.m_eff, paper_mode.temperature)
        assert faster.x_zpf == pytest.approx(paper_mode.x_zpf / math.sqrt(2.0),
                                             rel=1e-14)

    def test_decoherence_invariant_under_rescaling(self, paper_mode):
        rescaled = MechanicalMode(paper_mode.omega_m, paper_mode.gamma_m / 2.0,
                                  paper_mode.m_eff, 2.0 * paper_mode.temperature)
        assert rescaled.gamma_decoherence == pytest.approx(
            paper_mode.gamma_decoherence, rel=1e-14)

    def test_derive_mode_quantities_dict(self, paper_mode):
        out = derive_mode_quantities(paper_mode)
        assert set(out) == {"x_zpf", "q_factor", "n_th", "gamma_decoherence"}
        assert out["x_zpf"] == paper_mode.x_zpf

    @pytest.mark.parametrize("field", ["omega_m", "gamma_m", "m_eff", "temperature"])
    def test_nonpositive_fields_rejected(self, field):
        kwargs = dict(omega_m=1.0, gamma_m=1.0, m_eff=1.0, temperature=1.0)
        kwargs[field] = 0.0
        with pytest.raises(ParameterError):
            MechanicalMode(**kwargs)


class TestCavityAndPhotons:
    def test_resonant_limit(self, paper_cavity):
        beam = OpticalBeam(power_in=1e-3, detuning=0.0)
        expected = 4.0 * 0.9 * 1e-3 / (HBAR * paper_cavity.omega_c
                                       * paper_cavity.kappa)
        assert intracavity_photons(paper_cavity, beam) == pytest.approx(
            expected, rel=1e-12)

    def test_far_detuned_limit(self, paper_cavity):
        resonant = intracavity_photons(paper_cavity,
                                       OpticalBeam(power_in=1e-3, detuning=0.0))
        far = intracavity_photons(paper_cavity,
                                  OpticalBeam(power_in=1e-3, detuning=TWO_PI * 1e15))
        assert far / resonant < 1e-12

    def test_paper_point_high_precision(self, paper_cavity):
        beam = OpticalBeam(power_in=780e-6, detuning=-TWO_PI * 80e6,
                           label="cooling")
        omega_c = 2 * mpmath.pi * mpmath.mpf(299792458.0) / mpmath.mpf("1542e-9")
        kappa = 2 * mpmath.pi * mpmath.mpf(340e6)
        delta = -2 * mpmath.pi * mpmath.mpf(80e6)
        expected = (mpmath.mpf("0.9") * kappa * mpmath.mpf("780e-6")
                    / (mpmath.mpf(HBAR) * omega_c)
                    / (delta**2 + (kappa / 2) ** 2))
        assert intracavity_photons(paper_cavity, beam) == pytest.approx(
            float(expected), rel=1e-12)

    def test_monotone_in_detuning_linear_in_power(self, paper_cavity):
        detunings = TWO_PI * np.linspace(0, 500e6, 40)
        values = [intracavity_photons(paper_cavity,
                                      OpticalBeam(power_in=1e-3, detuning=d))
                  for d in detunings]
        assert all(a > b for a, b in zip(values, values[1:]))
        double = intracavity_photons(paper_cavity,
                                     OpticalBeam(power_in=2e-3, detuning=0.0))
        assert double == pytest.approx(2.0 * values[0], rel=1e-12)

    def test_eta_c_transmissivity_consistency(self):
        OpticalCavity(kappa=1.0, length=1e-4, wavelength=1.5e-6, eta_c=0.9,
                      t_f=9e-5, t_e=1e-5)
        with pytest.raises(ParameterError):
            OpticalCavity(kappa=1.0, length=1e-4, wavelength=1.5e-6, eta_c=0.5,
                          t_f=9e-5, t_e=1e-5)


class TestG0Max:
    def test_vanishing_overlap_or_reflectivity(self, paper_cavity, paper_mode):
        assert g0_max(paper_cavity, paper_mode,
                      CouplingConfig(membrane_reflectivity=0.0, overlap=1.0)) == 0.0
        assert g0_max(paper_cavity, paper_mode,
                      CouplingConfig(membrane_reflectivity=0.5, overlap=0.0)) == 0.0

    def test_unit_reflectivity_value(self, paper_cavity, paper_mode):
        coupling = CouplingConfig(membrane_reflectivity=1.0, overlap=1.0)
        omega_c = 2 * mpmath.pi * mpmath.mpf(299792458.0) / mpmath.mpf("1542e-9")
        x_zpf = mpmath.sqrt(mpmath.mpf(HBAR) / (2 * mpmath.mpf("200e-15")
                                                * TWO_PI * 1.3e6))
        expected = 2 * omega_c / mpmath.mpf("95e-6") * x_zpf
        value = g0_max(paper_cavity, paper_mode, coupling)
        assert value == pytest.approx(float(expected), rel=1e-12)
        # ballpark: ~23 kHz for |r| xi = 1
        assert value / TWO_PI == pytest.approx(23.2e3, rel=0.02)

    def test_inverse_length_scaling(self, paper_cavity, paper_mode):
        coupling = CouplingConfig(membrane_reflectivity=0.3, overlap=0.8)
        doubled = OpticalCavity(kappa=paper_cavity.kappa,
                                length=2 * paper_cavity.length,
                                wavelength=paper_cavity.wavelength,
                                eta_c=paper_cavity.eta_c)
        assert g0_max(doubled, paper_mode, coupling) == pytest.approx(
            0.5 * g0_max(paper_cavity, paper_mode, coupling), rel=1e-14)


class TestDetectionChain:
    def test_paper_budget(self):
        chain = DetectionChain(mode_matching=0.04, overcoupling=0.9,
                               fiber_loss=0.42, visibility=0.9,
                               quantum_efficiency=0.8)
        eta = detection_efficiency(chain)
        assert eta == pytest.approx(0.04 * 0.9 * 0.42 * 0.9 * 0.8, rel=1e-14)
        assert eta == pytest.approx(0.0109, rel=0.01)
        assert eta == pytest.approx(0.012, rel=0.12)  # quoted "about 1.2%"
        # amplitude convention gives a larger number
        assert detection_efficiency(chain, fiber_loss_as_power=False) > eta

    def test_lossless_and_absorbing(self):
        ones = DetectionChain(1.0, 1.0, 1.0, 1.0, 1.0)
        assert detection_efficiency(ones) == 1.0
        dark = DetectionChain(0.0, 1.0, 1.0, 1.0, 1.0)
        assert detection_efficiency(dark) == 0.0

    def test_monotone_in_each_factor(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            f = rng.uniform(0.1, 0.9, size=5)
            base = detection_efficiency(DetectionChain(*f))
            for i in range(5):
                g = f.copy()
                g[i] = min(g[i] + 0.05, 1.0)
                assert detection_efficiency(DetectionChain(*g)) >= base

    def test_factor_out_of_range(self):
        with pytest.raises(ParameterError):
            DetectionChain(1.2, 0.9, 0.4, 0.9, 0.8)


class TestModeMatching:
    def test_paper_inversion(self):
        assert mode_matching_from_transmission(0.0144, 0.9) == pytest.approx(
            0.04, rel=1e-12)

    def test_zero_transmission(self):
        assert mode_matching_from_transmission(0.0, 0.7) == 0.0

    def test_impedance_matched_forward(self):
        # eta_c = 0.5, eps = 1 -> P_t/P_in = 1
        assert mode_matching_from_transmission(1.0, 0.5) == pytest.approx(1.0)

    @pytest.mark.parametrize("eta_c", [0.0, 1.0])
    def test_degenerate_overcoupling(self, eta_c):
        with pytest.raises(ParameterError):
            mode_matching_from_transmission(0.01, eta_c)
