"""Optical spring / optical damping and the power-series regression."""

import mpmath
import numpy as np
import pytest

from mimcool import (MechanicalMode, OpticalBeam, OpticalCavity,
                     RankDeficiencyError, StabilityError, backaction_summary,
                     fit_damping_offset, fit_spring_vs_power, intracavity_photons,
                     optical_damping, optical_spring)
from mimcool.constants import TWO_PI

mpmath.mp.dps = 40

G = TWO_PI * 644e3
DELTA = -TWO_PI * 80e6
KAPPA = TWO_PI * 340e6
OMEGA = TWO_PI * 1.3e6


def _spring_mp(g, delta, kappa, omega):
    g, delta, kappa, omega = map(mpmath.mpf, (g, delta, kappa, omega))
    half_sq = (kappa / 2) ** 2
    return g**2 * ((delta - omega) / (half_sq + (delta - omega) ** 2)
                   + (delta + omega) / (half_sq + (delta + omega) ** 2))


def _damping_mp(g, delta, kappa, omega):
    g, delta, kappa, omega = map(mpmath.mpf, (g, delta, kappa, omega))
    half_sq = (kappa / 2) ** 2
    return g**2 * kappa * (1 / (half_sq + (delta + omega) ** 2)
                           - 1 / (half_sq + (delta - omega) ** 2))


class TestSpringAndDamping:
    def test_zero_detuning_vanishes(self):
        assert optical_spring(G, 0.0, KAPPA, OMEGA) == pytest.approx(0.0, abs=1e-30)
        assert optical_damping(G, 0.0, KAPPA, OMEGA) == pytest.approx(0.0, abs=1e-30)

    def test_paper_point_values(self):
        spring = optical_spring(G, DELTA, KAPPA, OMEGA)
        damping = optical_damping(G, DELTA, KAPPA, OMEGA)
        assert spring == pytest.approx(float(_spring_mp(G, DELTA, KAPPA, OMEGA)),
                                       rel=1e-12)
        assert damping == pytest.approx(float(_damping_mp(G, DELTA, KAPPA, OMEGA)),
                                        rel=1e-12)
        assert spring / TWO_PI == pytest.approx(-1.88e3, rel=0.01)
        assert damping / TWO_PI == pytest.approx(47.0, rel=0.02)

    def test_g_squared_scaling(self):
        assert optical_spring(2 * G, DELTA, KAPPA, OMEGA) == pytest.approx(
            4.0 * optical_spring(G, DELTA, KAPPA, OMEGA), rel=1e-13)
        assert optical_damping(2 * G, DELTA, KAPPA, OMEGA) == pytest.approx(
            4.0 * optical_damping(G, DELTA, KAPPA, OMEGA), rel=1e-13)

    def test_odd_in_detuning(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            delta = rng.uniform(0.1, 5.0) * KAPPA
            assert optical_spring(G, -delta, KAPPA, OMEGA) == pytest.approx(
                -optical_spring(G, delta, KAPPA, OMEGA), rel=1e-12)
            assert optical_damping(G, -delta, KAPPA, OMEGA) == pytest.approx(
                -optical_damping(G, delta, KAPPA, OMEGA), rel=1e-12)

    def test_red_detuning_damps(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            kappa = rng.uniform(0.01, 100) * OMEGA
            delta = -rng.uniform(0.01, 10) * kappa
            assert optical_damping(G, delta, kappa, OMEGA) > 0

    def test_resolved_sideband_limit(self):
        # kappa << omega, delta = -omega: damping -> 4 g^2 / kappa
        for ratio in (1e-2, 1e-3, 1e-4):
            kappa = ratio * OMEGA
            val = optical_damping(G, -OMEGA, kappa, OMEGA)
            assert val / (4 * G**2 / kappa) == pytest.approx(1.0, abs=4 * ratio**2 + 1e-6)


class TestSummary:
    def test_two_beam_total(self):
        mode = MechanicalMode(OMEGA, TWO_PI * 9e-3, 200e-15, 300.0)
        cavity = OpticalCavity(KAPPA, 95e-6, 1542e-9, eta_c=0.9)
        beams = [OpticalBeam(780e-6, DELTA, g=G, label="cooling"),
                 OpticalBeam(520e-6, -TWO_PI * 2e6, g=TWO_PI * 607e3, label="probe")]
        result = backaction_summary(mode, beams, cavity)
        assert result.stable
        assert result.gamma_total == pytest.approx(
            mode.gamma_m + result.gamma_opt, rel=1e-12)

    def test_blue_detuning_instability_flagged(self):
        mode = MechanicalMode(OMEGA, TWO_PI * 9e-3, 200e-15, 300.0)
        cavity = OpticalCavity(KAPPA, 95e-6, 1542e-9, eta_c=0.9)
        beams = [OpticalBeam(780e-6, -DELTA, g=G, label="blue")]
        with pytest.raises(StabilityError):
            backaction_summary(mode, beams, cavity)


class TestSpringFit:
    def setup_method(self):
        self.cavity = OpticalCavity(KAPPA, 95e-6, 1542e-9, eta_c=0.9)
        self.g0 = TWO_PI * 2.3e3
        self.powers = np.linspace(50e-6, 780e-6, 8)

    def _synthetic_points(self, g0):
        pts = []
        for p in self.powers:
            n_cav = intracavity_photons(self.cavity,
                                        OpticalBeam(p, DELTA, label="cooling"))
            g = g0 * np.sqrt(n_cav)
            pts.append((p, optical_spring(g, DELTA, KAPPA, OMEGA)))
        return pts

    def test_round_trip_recovery(self):
        out = fit_spring_vs_power(self._synthetic_points(self.g0), self.cavity,
                                  DELTA, OMEGA)
        assert out["g0_estimate"] == pytest.approx(self.g0, rel=1e-6)

    def test_paper_operating_point(self):
        # synthetic Fig.2b-like data built from the paper chain recovers 2.3 kHz
        out = fit_spring_vs_power(self._synthetic_points(TWO_PI * 2.3e3),
                                  self.cavity, DELTA, OMEGA)
        assert out["g0_estimate"] / TWO_PI == pytest.approx(2.3e3, rel=1e-6)

    def test_zero_shifts_zero_slope(self):
        pts = [(p, 0.0) for p in self.powers]
        out = fit_spring_vs_power(pts, self.cavity, DELTA, OMEGA)
        assert out["slope"] == 0.0

    def test_degenerate_powers(self):
        pts = [(1e-4, -1.0), (1e-4, -2.0)]
        with pytest.raises(RankDeficiencyError):
            fit_spring_vs_power(pts, self.cavity, DELTA, OMEGA)


class TestDampingOffsetFit:
    def setup_method(self):
        self.gamma_m = TWO_PI * 9e-3
        self.g_values = TWO_PI * np.linspace(100e3, 644e3, 7)

    def _points(self, offset):
        return [(g, self.gamma_m + offset + optical_damping(g, DELTA, KAPPA, OMEGA))
                for g in self.g_values]

    def test_offset_recovery(self):
        injected = TWO_PI * 4.6
        out = fit_damping_offset(self._points(injected), KAPPA, DELTA, OMEGA,
                                 self.gamma_m)
        assert out["gamma_probe_offset"] == pytest.approx(injected, rel=1e-6)

    def test_zero_offset(self):
        out = fit_damping_offset(self._points(0.0), KAPPA, DELTA, OMEGA,
                                 self.gamma_m)
        assert abs(out["gamma_probe_offset"]) < 1e-9 * self.gamma_m + 1e-12

    def test_duplicate_point_invariance(self):
        pts = self._points(TWO_PI * 4.6)
        out1 = fit_damping_offset(pts, KAPPA, DELTA, OMEGA, self.gamma_m)
        out2 = fit_damping_offset(pts + [pts[-1]], KAPPA, DELTA, OMEGA,
                                  self.gamma_m)
        assert out2["gamma_probe_offset"] == pytest.approx(
            out1["gamma_probe_offset"], rel=1e-9)
