"""Sideband/feedback cooling limits, noise budgets, quanta conversions."""

import math

import mpmath
import numpy as np
import pytest

from mimcool import (MechanicalMode, ParameterError, StabilityError,
                     feedback_min_occupancy_basic, feedback_min_occupancy_full,
                     force_noise, imprecision_budget, min_sideband_occupancy,
                     optimal_detuning, optimal_detuning_numeric,
                     quanta_conversions, sideband_occupancy)
from mimcool.constants import HBAR, KB, TWO_PI
from mimcool.limits import (n_imp_from_sxx, n_tot_from_sff, sff_from_n_tot,
                            sxx_from_n_imp)

mpmath.mp.dps = 40

KAPPA = TWO_PI * 340e6
OMEGA = TWO_PI * 1.3e6


def mode_with_nth(n_th, omega_m=OMEGA, gamma_m=TWO_PI * 9e-3, m_eff=200e-15):
    """Mechanical mode whose bath occupancy comes out exactly n_th."""
    temperature = n_th * HBAR * omega_m / KB
    return MechanicalMode(omega_m, gamma_m, m_eff, temperature)


class TestSidebandOccupancy:
    def test_no_cooling_returns_bath(self):
        gamma_m = TWO_PI * 9e-3
        assert sideband_occupancy(5.1e6, gamma_m, 0.0, 84.0, 0.0, gamma_m) == \
            pytest.approx(5.1e6, rel=1e-14)

    def test_paper_anchor_value(self):
        n_min_c = min_sideband_occupancy(-TWO_PI * 80e6, KAPPA, OMEGA)
        gamma_c = TWO_PI * (52.0 - 4.6 - 0.009)
        n = sideband_occupancy(5.1e6, TWO_PI * 9e-3, 0.1, n_min_c, gamma_c,
                               TWO_PI * 52.0)
        assert n == pytest.approx(1070.0, rel=0.10)

    def test_strong_cooling_limit(self):
        n_min_c = 84.0
        n = sideband_occupancy(5.1e6, TWO_PI * 9e-3, 0.1, n_min_c,
                               TWO_PI * 1e12, TWO_PI * 1e12)
        assert n == pytest.approx(n_min_c, rel=1e-3)

    def test_unstable_denominator(self):
        with pytest.raises(StabilityError):
            sideband_occupancy(5.1e6, 1.0, 0.1, 84.0, 1.0, 0.0)

    def test_convex_combination_without_backaction(self):
        # C_q = 0, gamma_tot = gamma_m + gamma_c: output between the sources
        rng = np.random.default_rng(6)
        for _ in range(25):
            n_th = rng.uniform(10, 1e7)
            n_min = rng.uniform(0.1, 1e3)
            gamma_m = rng.uniform(1e-3, 1.0)
            gamma_c = rng.uniform(1e-3, 1e3)
            n = sideband_occupancy(n_th, gamma_m, 0.0, n_min, gamma_c,
                                   gamma_m + gamma_c)
            assert min(n_th, n_min) <= n <= max(n_th, n_min)


class TestMinSidebandOccupancy:
    def test_analytic_substitution(self):
        # delta = -omega, kappa = 2 omega -> 1/4
        assert min_sideband_occupancy(-OMEGA, 2 * OMEGA, OMEGA) == \
            pytest.approx(0.25, rel=1e-14)

    def test_half_kappa_detuning(self):
        value = min_sideband_occupancy(-KAPPA / 2, KAPPA, OMEGA)
        expected = ((mpmath.mpf(OMEGA) - KAPPA / 2) ** 2 + (mpmath.mpf(KAPPA) / 2) ** 2) \
            / (4 * (mpmath.mpf(KAPPA) / 2) * OMEGA)
        assert value == pytest.approx(float(expected), rel=1e-12)
        assert value == pytest.approx(65.0, abs=2.0)

    def test_cooling_beam_detuning(self):
        value = min_sideband_occupancy(-TWO_PI * 80e6, KAPPA, OMEGA)
        assert value == pytest.approx(84.4, rel=0.01)

    def test_heating_regime_rejected(self):
        with pytest.raises(ParameterError):
            min_sideband_occupancy(TWO_PI * 1e6, KAPPA, OMEGA)


class TestOptimalDetuning:
    def test_analytic_vs_numeric(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            kappa = rng.uniform(0.05, 500) * OMEGA
            analytic = optimal_detuning(kappa, OMEGA)
            numeric = optimal_detuning_numeric(kappa, OMEGA)
            assert abs(numeric - analytic) / abs(analytic) < 1e-10

    def test_unresolved_sideband_limit(self):
        kappa = 1e4 * OMEGA
        delta = optimal_detuning(kappa, OMEGA)
        assert delta == pytest.approx(-kappa / 2, rel=1e-6)
        n_min = min_sideband_occupancy(delta, kappa, OMEGA)
        assert n_min == pytest.approx(kappa / (4 * OMEGA), rel=1e-3)

    def test_resolved_sideband_limit(self):
        kappa = 1e-5 * OMEGA
        delta = optimal_detuning(kappa, OMEGA)
        assert delta == pytest.approx(-OMEGA, rel=1e-9)
        assert min_sideband_occupancy(delta, kappa, OMEGA) < 1e-9

    def test_paper_minimum(self):
        n_min = min_sideband_occupancy(optimal_detuning(KAPPA, OMEGA), KAPPA, OMEGA)
        assert n_min == pytest.approx(65.4, rel=0.02)


class TestFeedbackLimits:
    def test_uncertainty_saturation(self):
        assert feedback_min_occupancy_basic(2 * HBAR, HBAR / 2) == \
            pytest.approx(0.0, abs=1e-14)

    def test_square_root_homogeneity(self):
        base = feedback_min_occupancy_basic(1e-30, 1e-32) + 0.5
        doubled = feedback_min_occupancy_basic(2e-30, 2e-32) + 0.5
        assert doubled == pytest.approx(2.0 * base, rel=1e-12)

    def test_quanta_identity_value(self):
        # n = 2 sqrt(n_tot n_imp) - 1/2 with the paper's numbers -> 26.3
        mode = mode_with_nth(5.1e6)
        s_ff = sff_from_n_tot(5.61e6, mode)
        s_imp = sxx_from_n_imp(3.2e-5, mode)
        n = feedback_min_occupancy_basic(s_ff, s_imp)
        assert n == pytest.approx(2 * math.sqrt(5.61e6 * 3.2e-5) - 0.5, rel=1e-9)
        assert n == pytest.approx(26.3, rel=0.01)

    def test_full_ideal_measurement_limit(self):
        n = feedback_min_occupancy_full(1e9, 1.0, 0.0, 5.1e6, TWO_PI * 9e-3,
                                        5.7e-15)
        assert abs(n) < 1e-4

    def test_full_paper_value(self):
        n = feedback_min_occupancy_full(0.1, 0.012, 0.0, 5.1e6, TWO_PI * 9e-3,
                                        5.7e-15)
        assert n == pytest.approx(15.0, abs=1.0)

    def test_classical_term_magnitude(self):
        # S_cl = (10 am)^2/Hz with n_th Gamma_m = 2 pi 48 kHz, x_zpf = 5.7 fm
        x_zpf = 5.7e-15
        n_th_gamma = TWO_PI * 48e3
        term = 1e-34 * n_th_gamma / (2 * x_zpf**2)
        assert term == pytest.approx(0.5, rel=0.20)
        with_cl = feedback_min_occupancy_full(0.1, 0.012, 1e-34, 5.1e6,
                                              n_th_gamma / 5.1e6, x_zpf)
        without = feedback_min_occupancy_full(0.1, 0.012, 0.0, 5.1e6,
                                              n_th_gamma / 5.1e6, x_zpf)
        assert with_cl > without

    def test_basic_equals_full_under_conversions(self):
        # Eq.(6) == Eq.(7) when the inputs are converted consistently
        rng = np.random.default_rng(8)
        for _ in range(10):
            c_q = rng.uniform(0.01, 10)
            eta = rng.uniform(0.001, 1.0)
            mode = mode_with_nth(rng.uniform(1e3, 1e7))
            s_cl = rng.uniform(0, 1e-33)
            s_ff_th = mode.s_ff_thermal
            s_q = HBAR**2 / (eta * c_q * s_ff_th)
            basic = feedback_min_occupancy_basic((1 + c_q) * s_ff_th, s_q + s_cl)
            full = feedback_min_occupancy_full(c_q, eta, s_cl, mode.n_thermal,
                                               mode.gamma_m, mode.x_zpf)
            assert basic == pytest.approx(full, rel=1e-9)

    def test_never_below_minus_half(self):
        assert feedback_min_occupancy_basic(0.0, 0.0) == -0.5
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = feedback_min_occupancy_basic(rng.uniform(0, 1e-28),
                                             rng.uniform(0, 1e-30))
            assert n >= -0.5


class TestForceNoise:
    def test_thermal_value_and_radiation(self):
        mode = mode_with_nth(5.1e6)
        fn = force_noise(mode, c_q=0.1)
        assert fn.s_ff_thermal == pytest.approx(
            4 * mode.m_eff * mode.gamma_m * KB * mode.temperature, rel=1e-14)
        assert fn.s_ff_radiation == pytest.approx(0.1 * fn.s_ff_thermal, rel=1e-14)
        assert fn.total == fn.s_ff_thermal + fn.s_ff_radiation


class TestImprecisionBudget:
    def test_quantum_imprecision_level(self):
        # gamma tuned to the quoted 2 pi x 48 kHz decoherence rate
        mode = mode_with_nth(48e3 / 9e-3)
        budget = imprecision_budget(mode, c_q=0.1, eta_det=0.012,
                                    g0=TWO_PI * 2.3e3)
        assert 1e18 * math.sqrt(budget.s_xx_quantum) == pytest.approx(210.0, rel=0.10)

    def test_quantum_imprecision_identity(self):
        # x_zpf^2/(2 eta C gamma) == hbar^2/(eta C S_FF_th)
        mode = mode_with_nth(5.1e6)
        budget = imprecision_budget(mode, 0.1, 0.012, TWO_PI * 2.3e3)
        alt = HBAR**2 / (0.012 * 0.1 * mode.s_ff_thermal)
        assert budget.s_xx_quantum == pytest.approx(alt, rel=1e-12)

    def test_laser_noise_figure(self):
        mode = mode_with_nth(5.1e6)
        s_ww = (TWO_PI * 1.0) ** 2
        budget = imprecision_budget(mode, 0.1, 0.012, TWO_PI * 2.3e3,
                                    s_omega_omega=s_ww)
        expected = s_ww * mode.gamma_decoherence / (2 * (TWO_PI * 2.3e3) ** 2)
        assert budget.laser_figure == pytest.approx(expected, rel=1e-12)
        assert budget.laser_figure == pytest.approx(0.027, rel=0.05)
        assert budget.laser_figure == pytest.approx(0.03, rel=0.20)

    def test_zero_laser_noise(self):
        mode = mode_with_nth(5.1e6)
        budget = imprecision_budget(mode, 0.1, 0.012, TWO_PI * 2.3e3,
                                    s_omega_omega=0.0)
        assert budget.s_xx_laser_freq == 0.0
        assert budget.laser_figure == 0.0

    def test_freq_pull_and_total(self):
        mode = mode_with_nth(5.1e6)
        budget = imprecision_budget(mode, 0.1, 0.012, TWO_PI * 2.3e3,
                                    s_omega_omega=(TWO_PI * 1.0) ** 2,
                                    s_xx_mirror=1e-34)
        assert budget.freq_pull == pytest.approx(TWO_PI * 2.3e3 / mode.x_zpf,
                                                 rel=1e-13)
        assert budget.total == pytest.approx(
            budget.s_xx_quantum + budget.s_xx_laser_freq + budget.s_xx_mirror,
            rel=1e-14)


class TestQuantaConversions:
    def test_imprecision_paper_value(self):
        mode = MechanicalMode(OMEGA, TWO_PI * 9e-3, 200e-15, 300.0)
        s_imp = sxx_from_n_imp(3.2e-5, mode)
        assert math.sqrt(s_imp) == pytest.approx(370e-18, rel=0.10)
        assert n_imp_from_sxx(s_imp, mode) == pytest.approx(3.2e-5, rel=1e-14)

    def test_thermal_force_maps_to_n_th(self):
        # classical thermal force noise converts to exactly n_th quanta
        mode = mode_with_nth(7.7e5)
        assert n_tot_from_sff(mode.s_ff_thermal, mode) == pytest.approx(
            mode.n_thermal, rel=1e-12)

    def test_round_trips_exact(self):
        mode = MechanicalMode(OMEGA, TWO_PI * 9e-3, 200e-15, 300.0)
        rng = np.random.default_rng(10)
        for _ in range(10):
            s = rng.uniform(1e-36, 1e-28)
            assert sxx_from_n_imp(n_imp_from_sxx(s, mode), mode) == \
                pytest.approx(s, rel=1e-14)
            assert sff_from_n_tot(n_tot_from_sff(s, mode), mode) == \
                pytest.approx(s, rel=1e-14)

    def test_zero_maps_to_zero(self):
        mode = MechanicalMode(OMEGA, TWO_PI * 9e-3, 200e-15, 300.0)
        out = quanta_conversions(mode, s_xx_imp=0.0, s_ff=0.0)
        assert out["n_imp"] == 0.0 and out["n_tot"] == 0.0

    def test_requires_an_input(self):
        mode = MechanicalMode(OMEGA, TWO_PI * 9e-3, 200e-15, 300.0)
        with pytest.raises(ParameterError):
            quanta_conversions(mode)
