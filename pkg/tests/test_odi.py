import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from extinctlab.energy import ExponentPack, compute_ledger, ode_inequality_residual
from extinctlab.odi import (
    NoPlateauError,
    OdiConfig,
    build_curve,
    curve_y2,
    extinction_iteration,
    region_boundaries,
    region_classifier,
    solve_extinction_radius,
    solve_tau_double_prime,
    solve_tau_prime,
)
from extinctlab.profiles import OmegaProfile, PotentialField, SRamp


@pytest.fixture(scope="module")
def beta2_config():
    pot = PotentialField(1.0, OmegaProfile.log_power(2.0))
    return OdiConfig(potential=pot, y0=1e-4, q=0.5)


class TestTauPrime:
    def test_linear_omega_closed_form(self):
        # tau^2/omega = tau: the relation collapses to an explicit value
        pot = PotentialField(1.0, OmegaProfile.power(1.0))
        cfg = OdiConfig(potential=pot, y0=1e-4, q=0.5, c0=1.0)
        expected = (2.0 / 0.5) / (math.log(3.0) - math.log(1e-4))
        assert solve_tau_prime(cfg) == pytest.approx(expected, rel=1e-10)

    def test_constant_omega_closed_form(self):
        pot = PotentialField(1.0, OmegaProfile.constant(0.5))
        cfg = OdiConfig(potential=pot, y0=1e-4, q=0.5, c0=1.0)
        expected = math.sqrt(0.5 * 4.0 / (math.log(3.0) - math.log(1e-4)))
        assert solve_tau_prime(cfg) == pytest.approx(expected, rel=1e-10)

    def test_log_power_residual(self, beta2_config):
        tau_p = solve_tau_prime(beta2_config)
        lhs = tau_p**2 / beta2_config.omega.omega(tau_p)
        rhs = 4.0 / (math.log(3.0) - math.log(beta2_config.y0))
        assert abs(lhs - rhs) / rhs < 1e-10

    def test_no_plateau_error(self, beta2_config):
        pot = beta2_config.potential
        with pytest.raises(NoPlateauError):
            solve_tau_prime(OdiConfig(potential=pot, y0=5.0, q=0.5, c0=1.0))


class TestCurveY2:
    def test_starts_at_y0(self, beta2_config):
        tau_p = solve_tau_prime(beta2_config)
        piece = curve_y2(beta2_config, tau_p)
        assert piece(tau_p) == pytest.approx(beta2_config.y0, rel=1e-12)

    def test_strictly_decreasing(self, beta2_config):
        tau_p = solve_tau_prime(beta2_config)
        piece = curve_y2(beta2_config, tau_p)
        taus = np.linspace(tau_p, min(2 * tau_p, 1.0), 50)
        vals = piece(taus)
        assert np.all(np.diff(vals) < 0)

    def test_matches_stiff_ode_integration(self, beta2_config):
        # independent oracle: integrate the separable mode equation directly
        cfg = beta2_config
        tau_p = solve_tau_prime(cfg)
        piece = curve_y2(cfg, tau_p)
        ep = cfg.exponents
        sramp = cfg.sramp

        def rhs(tau, y):
            _, log_sp = sramp.log_value_and_derivative(float(tau))
            psi2 = math.exp((1 - ep.theta2) * cfg.potential.log_a(float(tau)) + log_sp)
            return [-psi2 * max(y[0] / (3 * cfg.c0), 0.0) ** (1.0 / (1.0 + ep.lambda2))]

        tau_end = 0.9
        sol = solve_ivp(rhs, (tau_p, tau_end), [cfg.y0], method="Radau",
                        rtol=1e-10, atol=1e-16, dense_output=True)
        probe = np.linspace(tau_p, tau_end, 20)
        closed = piece(probe)
        direct = sol.sol(probe)[0]
        assert np.all(np.abs(closed - direct) <= 1e-3 * np.maximum(direct, 1e-300))


class TestTauDoublePrime:
    def test_bisection_residual(self):
        pot = PotentialField(1.0, OmegaProfile.power(1.0))
        cfg = OdiConfig(potential=pot, y0=1e-4, q=0.5)
        tau_p = solve_tau_prime(cfg)
        piece = curve_y2(cfg, tau_p)
        res = solve_tau_double_prime(cfg, piece, tau_p)
        ep = cfg.exponents
        _, log_sp = cfg.sramp.log_value_and_derivative(res.tau)
        boundary = math.exp(math.log(3 * cfg.c0)
                            + 2 / (1 - cfg.q) * cfg.potential.log_a(res.tau)
                            + 2 / ((1 - cfg.q) * (ep.theta1 - ep.theta2)) * log_sp)
        assert abs(piece(res.tau) - boundary) <= 1e-8 * boundary

    def test_bracket_constant_independent_of_y0(self, beta2_config):
        ks = []
        for y0 in (1e-4, 3e-5, 1e-5):
            cfg = OdiConfig(potential=beta2_config.potential, y0=y0, q=0.5)
            tau_p = solve_tau_prime(cfg)
            ks.append(solve_tau_double_prime(cfg, curve_y2(cfg, tau_p), tau_p)
                      .bracket_constant)
        assert max(ks) / min(ks) < 2.0

    def test_plateau_collapse_skips_region(self, beta2_config):
        # y0 close to 3c0 pushes tau' to radii where the ramp slope exceeds
        # one and the middle region is empty: tau'' collapses onto tau'
        cfg = OdiConfig(potential=beta2_config.potential, y0=1e-2, q=0.5)
        curve = build_curve(cfg)
        assert curve.region2_skipped
        assert curve.tau_double_prime == curve.tau_prime


class TestTauTriplePrime:
    def test_linear_omega_ad_hoc_closed_form(self):
        pot = PotentialField(1.0, OmegaProfile.power(1.0))
        cfg = OdiConfig(potential=pot, y0=1e-4, q=0.5, c7=0.8)
        tau_bar, clipped = solve_extinction_radius(cfg, cfg.y0)
        assert not clipped
        assert tau_bar == pytest.approx(0.8 / math.log(1e4), rel=1e-10)

    def test_scaling_relation(self, beta2_config):
        # tau_bar^2 ln(1/y0) / omega(tau_bar) reproduces c7 across levels
        for y0 in (1e-6, 1e-4, 1e-2):
            cfg = OdiConfig(potential=beta2_config.potential, y0=y0, q=0.5)
            tau_bar, _ = solve_extinction_radius(cfg, y0)
            got = tau_bar**2 * math.log(1 / y0) / cfg.omega.omega(tau_bar)
            assert got == pytest.approx(cfg.c7, rel=1e-9)

    def test_dual_roots_agree_within_fixed_factor(self, beta2_config):
        ratios = []
        for y0 in (1e-6, 1e-5, 1e-4, 1e-3):
            cfg = OdiConfig(potential=beta2_config.potential, y0=y0, q=0.5)
            curve = build_curve(cfg)
            info = curve.triple_info
            assert math.isfinite(info.direct_root)
            ratios.append(info.direct_root / info.ad_hoc_root)
        assert max(ratios) / min(ratios) < 10.0
        assert all(0.05 < r < 20.0 for r in ratios)


class TestCurveAssembly:
    def test_continuity_and_monotonicity(self, beta2_config):
        curve = build_curve(beta2_config)
        g1, g2 = curve.join_gaps()
        assert g1 <= 1e-10 * beta2_config.y0
        assert g2 <= 1e-10 * beta2_config.y0
        assert np.all(np.diff(curve.Y) <= 1e-12)
        assert curve.Y[0] == beta2_config.y0
        assert curve.Y[-1] <= 0.0 + 1e-300

    def test_ordering_of_radii(self, beta2_config):
        curve = build_curve(beta2_config)
        assert 0 < curve.tau_prime <= curve.tau_double_prime < curve.tau_triple_prime
        assert curve.tau_triple_prime > 2.0 * curve.tau_double_prime


class TestRegionClassifier:
    def test_above_upper_boundary(self, beta2_config):
        upper, _ = region_boundaries(beta2_config, 0.3)
        assert region_classifier(0.3, upper * 10.0, beta2_config) == 0

    def test_below_lower_boundary(self, beta2_config):
        _, lower = region_boundaries(beta2_config, 0.3)
        assert region_classifier(0.3, lower * 0.1, beta2_config) == 1

    def test_tie_prefers_lower_index(self, beta2_config):
        upper, _ = region_boundaries(beta2_config, 0.3)
        assert region_classifier(0.3, upper, beta2_config) == 0

    def test_lattice_agreement_with_closed_forms(self, beta2_config):
        # restrict to radii with ramp slope below one, where the three-way
        # decomposition is consistent (the boundaries cross beyond that)
        taus = np.geomspace(0.05, 0.6, 100)
        ys = np.geomspace(1e-10, 1.0, 100)
        TT, YY = np.meshgrid(taus, ys)
        got = region_classifier(TT.ravel(), YY.ravel(), beta2_config).reshape(TT.shape)
        upper, lower = region_boundaries(beta2_config, taus)
        want = np.where(YY >= upper[None, :], 0,
                        np.where(YY <= lower[None, :], 1, 2))
        assert np.array_equal(got, want)

    def test_validation(self, beta2_config):
        with pytest.raises(ValueError):
            region_classifier(-0.1, 1.0, beta2_config)


class TestExtinctionIteration:
    def test_constant_omega_unbounded(self):
        pot = PotentialField(1.0, OmegaProfile.constant(1.0))
        cfg = OdiConfig(potential=pot, y0=1e-4, q=0.5)
        rep = extinction_iteration(cfg)
        assert rep.verdict == "unbounded"
        assert rep.total == math.inf
        # waiting times are constant once the radius caps: linear growth
        assert rep.t_rounds[-1] == pytest.approx(rep.t_rounds[-2], rel=1e-6)

    def test_round_relations(self, beta2_config):
        rep = extinction_iteration(beta2_config)
        cfg = rep.config
        w = cfg.omega.omega(rep.tau_rounds)
        expect_t = cfg.gamma * cfg.c7 / cfg.cbar * w
        assert np.allclose(rep.t_rounds, expect_t, rtol=1e-12)
        # the defining radius relation, rounds are not clipped here
        assert rep.clipped_rounds == 0
        got = rep.tau_rounds**2 * (-rep.log_levels) / w
        assert np.allclose(got, cfg.c7, rtol=1e-8)
        assert np.all(np.diff(rep.tau_rounds) < 0)
        assert np.all(np.diff(rep.log_levels) < 0)

    def test_bounded_verdict_with_finite_total(self, beta2_config):
        rep = extinction_iteration(beta2_config)
        assert rep.verdict == "bounded"
        assert math.isfinite(rep.total)
        assert rep.total > rep.sum_t + rep.sum_s - 1e-12

    def test_offset_sum_geometric(self, beta2_config):
        rep = extinction_iteration(beta2_config)
        # s(tau_i) <= const * tau_i^2 with tau_i^2 geometric: tail must be
        # dominated by a geometric series
        ratios = rep.s_rounds[1:] / rep.s_rounds[:-1]
        assert np.all(ratios[5:] < 0.75)
        assert rep.sum_s < 10 * rep.s_rounds[0]

    def test_partial_sums_vs_integral_comparison(self, beta2_config):
        rep = extinction_iteration(beta2_config)
        ratio = rep.omega_sum_partial / rep.integral_comparison
        assert 0.25 < ratio < 4.0

    def test_finite_iff_dini_convergent(self):
        profiles = [
            (OmegaProfile.power(0.5), True), (OmegaProfile.power(1.0), True),
            (OmegaProfile.power(1.5), True), (OmegaProfile.log_power(0.5), False),
            (OmegaProfile.log_power(1.0), False), (OmegaProfile.log_power(1.5), True),
            (OmegaProfile.log_power(2.0), True), (OmegaProfile.log_power(3.0), True),
            (OmegaProfile.constant(1.0), False),
        ]
        for prof, finite in profiles:
            cfg = OdiConfig(potential=PotentialField(1.0, prof), y0=1e-4, q=0.5)
            import warnings as _w
            with _w.catch_warnings():
                _w.simplefilter("ignore")
                rep = extinction_iteration(cfg)
            assert math.isfinite(rep.total) == finite, prof.kind
            assert (rep.verdict == "bounded") == finite, prof.kind

    def test_y0_validation(self, beta2_config):
        with pytest.raises(ValueError):
            extinction_iteration(OdiConfig(potential=beta2_config.potential,
                                           y0=1.0, q=0.5))


class TestComparisonProperty:
    def test_ledger_y_below_dominating_curve(self, omega_r_small_run):
        traj, pot = omega_r_small_run
        sramp = SRamp(pot.omega)
        ep = ExponentPack(0.5, 1)
        taus = np.geomspace(0.02, 0.9, 40)
        led = compute_ledger(traj, pot, taus, sramp)
        res = ode_inequality_residual(led, ep, sramp)
        cfg = OdiConfig(potential=pot, y0=led.y0, q=0.5, c0=res.c0)
        curve = build_curve(cfg)
        margin = curve.value(taus) - led.y
        tol = np.maximum(led.quad_error, 1e-12 * led.y0)
        assert np.all(margin >= -tol)
