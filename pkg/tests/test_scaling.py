"""Scaling-law machinery: the power-law fitter against closed forms,
scale-function identities, estimators driven by stub sources, pure-path
controls with classical exponents, and the ball/tail event algebra on
synthetic sample sets."""

import math

import numpy as np
import pytest

from lrplab import scaling as sc
from lrplab.errors import InvariantViolation, NumericValidityError
from lrplab.model import Environment, ModelParams, centered_window, sample_environment
from lrplab.scaling import (
    BallSampleSet,
    ScalingFunctions,
    ball_samples,
    dyadic_chain_check,
    dyadic_chain_sequence,
    estimate_delta,
    exit_time_exponent,
    fit_power_law,
    fit_tail_slope,
    good_radius_frequency,
    spectral_dimension_annealed,
    spectral_dimension_quenched,
    tail_curve,
    wilson_interval,
)


class TestPowerLawFit:
    def test_exact_square_law(self):
        fit = fit_power_law([(2, 4), (4, 16), (8, 64)])
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.residual_max < 1e-12
        assert fit.n_points == 3

    def test_constant_series_has_zero_slope(self):
        fit = fit_power_law([(2, 5.0), (4, 5.0), (8, 5.0), (16, 5.0)])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert math.exp(fit.intercept) == pytest.approx(5.0, rel=1e-12)

    def test_noisy_exponent_within_halfwidth(self):
        rng = np.random.default_rng(0)
        x = 2.0 ** np.arange(1, 9)
        y = x**0.7 * (1.0 + 0.01 * rng.uniform(-1, 1, size=x.size))
        fit = fit_power_law(zip(x, y))
        assert abs(fit.slope - 0.7) <= fit.slope_halfwidth
        assert fit.slope_halfwidth < 0.05

    def test_weights_favor_precise_points(self):
        # exact square law plus one corrupted point with a huge error bar;
        # the weighted fit must stay near 2, the unweighted one must not
        pts = [(2, 4, 0.01), (4, 16, 0.04), (8, 64, 0.16), (16, 64, 60.0)]
        weighted = fit_power_law(pts)
        unweighted = fit_power_law([(x, y) for x, y, _ in pts])
        assert abs(weighted.slope - 2.0) < 0.05
        assert abs(unweighted.slope - 2.0) > 0.2

    def test_predict_round_trip(self):
        fit = fit_power_law([(2, 4), (4, 16), (8, 64)])
        x = np.array([3.0, 5.0, 100.0])
        assert fit.predict(x) == pytest.approx(x**2, rel=1e-10)

    def test_rejects_short_input(self):
        with pytest.raises(ValueError, match="at least 3"):
            fit_power_law([(2, 4), (4, 16)])

    def test_rejects_nonpositive_values(self):
        with pytest.raises(ValueError, match="positive"):
            fit_power_law([(2, 4), (4, -1), (8, 64)])
        with pytest.raises(ValueError, match="positive"):
            fit_power_law([(0, 4), (4, 16), (8, 64)])

    def test_rejects_identical_x(self):
        with pytest.raises(ValueError, match="degenerate"):
            fit_power_law([(4, 1), (4, 2), (4, 3)])


class TestWilsonInterval:
    def test_matches_published_value(self):
        # k=8, n=10 at z=1.96: the standard worked example
        lo, hi = wilson_interval(8, 10)
        assert lo == pytest.approx(0.4902, abs=5e-4)
        assert hi == pytest.approx(0.9433, abs=5e-4)

    def test_degenerate_inputs(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)
        lo, hi = wilson_interval(0, 20)
        assert lo == 0.0 and 0.0 < hi < 0.25
        lo, hi = wilson_interval(20, 20)
        assert hi == 1.0 and 0.75 < lo < 1.0

    def test_contains_point_estimate(self):
        for k, n in [(1, 7), (3, 9), (50, 100), (99, 100)]:
            lo, hi = wilson_interval(k, n)
            assert lo <= k / n <= hi


class TestScalingFunctions:
    def test_identities_at_one_half(self):
        sf = ScalingFunctions(0.5)
        assert sf.volume_scale(3.0) == pytest.approx(9.0, rel=1e-12)
        assert sf.resistance_scale(3.0) == 3.0
        assert sf.walk_radius(27.0) == pytest.approx(3.0, rel=1e-12)
        assert sf.return_scale(8.0) == pytest.approx(4.0, rel=1e-12)
        assert sf.exit_time_exponent == pytest.approx(3.0)
        assert sf.return_exponent == pytest.approx(2.0 / 3.0)
        assert sf.spectral_dimension == pytest.approx(4.0 / 3.0)

    def test_walk_radius_inverts_exit_scale(self):
        for delta in (0.2, 0.37, 0.5, 0.8):
            sf = ScalingFunctions(delta)
            assert sf.inverse_identity_error() <= 1e-10
            assert sf.inverse_identity_error(r_grid=[0.5, 2.0, 1e4]) <= 1e-10

    def test_spectral_dimension_is_twice_return_exponent(self):
        sf = ScalingFunctions(0.42)
        assert sf.spectral_dimension == pytest.approx(2.0 * sf.return_exponent)

    def test_rejects_delta_outside_unit_interval(self):
        for bad in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError, match="outside"):
                ScalingFunctions(bad)


class TestDeltaEstimation:
    def test_stub_source_recovers_exponent(self):
        sf, fit = estimate_delta(
            1.0, [16, 32, 64, 128], 0, 0,
            lambda_source=lambda n: (float(n) ** 0.5, 0.0),
        )
        assert sf.delta_hat == pytest.approx(0.5, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_grid_too_short(self):
        with pytest.raises(ValueError, match="at least 3"):
            estimate_delta(1.0, [16, 32], 5, 0)

    def test_path_limit_rejected(self):
        # with long edges suppressed the maximal resistance is n - 1 and
        # log(n-1) is convex in log n, so the fitted exponent lands just
        # above 1; scale functions are undefined there and must say so
        with pytest.raises(ValueError, match="outside"):
            estimate_delta(1e-12, [16, 32, 64, 128, 256], 3, 42)

    def test_real_environment_smoke(self):
        sf, fit = estimate_delta(1.0, [16, 32, 64], 10, 3)
        assert 0.1 < sf.delta_hat < 0.9
        assert fit.n_points == 3


def _even_times(lo_exp, hi_exp):
    return [2**k for k in range(lo_exp, hi_exp + 1)]


class TestSpectralStubEstimators:
    def test_annealed_recovers_exact_decay(self):
        times = np.array(_even_times(6, 12), dtype=float)

        def source(seed):
            return times**-0.5, 0, True

        est = spectral_dimension_annealed(1.0, _even_times(6, 12), 5, 0,
                                          trace_source=source)
        assert est.fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert est.spectral_dimension == pytest.approx(1.0, abs=1e-12)
        assert est.discard_rate == 0.0
        assert est.environments_used == 5

    def test_annealed_counts_escalations_and_discards(self):
        times = np.array(_even_times(6, 10), dtype=float)
        calls = []

        def source(seed):
            calls.append(seed)
            bad = len(calls) % 25 == 0
            return times**-0.5, 2, not bad

        est = spectral_dimension_annealed(1.0, _even_times(6, 10), 100, 0,
                                          max_discard=0.1, trace_source=source)
        assert est.window_escalations == 200
        assert est.discard_rate == pytest.approx(0.04)
        assert est.environments_used == 96

    def test_annealed_discard_guard(self):
        times = np.array(_even_times(6, 10), dtype=float)

        def source(seed):
            return times**-0.5, 0, (seed % 2 == 0)

        with pytest.raises(NumericValidityError, match="discard"):
            spectral_dimension_annealed(1.0, _even_times(6, 10), 40, 0,
                                        trace_source=source)

    def test_time_grid_validation(self):
        with pytest.raises(ValueError, match="even"):
            spectral_dimension_annealed(1.0, [7, 14, 28], 3, 0,
                                        trace_source=lambda s: ([], 0, True))
        with pytest.raises(ValueError, match="at least 3"):
            spectral_dimension_quenched(None, [64, 128],
                                        trace_source=lambda s: ([], 0.0))

    def test_quenched_recovers_exact_decay(self):
        times = np.array(_even_times(6, 14), dtype=float)
        est = spectral_dimension_quenched(
            None, _even_times(6, 14),
            trace_source=lambda seed: (times**-0.6, 0.0),
        )
        assert est.fit.slope == pytest.approx(-0.6, abs=1e-12)
        assert est.spectral_dimension == pytest.approx(1.2, abs=1e-12)

    def test_quenched_leak_guard(self):
        times = np.array(_even_times(6, 10), dtype=float)
        values = times**-0.5
        with pytest.raises(NumericValidityError, match="leaked"):
            spectral_dimension_quenched(
                None, _even_times(6, 10),
                trace_source=lambda seed: (values, 0.5 * values[-1]),
            )

    def test_quenched_needs_env_or_source(self):
        with pytest.raises(ValueError, match="environment"):
            spectral_dimension_quenched(None, _even_times(6, 10))


class TestPurePathControls:
    def test_quenched_slope_is_classical(self):
        # simple random walk on Z: p_{2n}(0,0) ~ n^{-1/2}
        env = Environment.pure_path(1.0, -2050, 2051)
        est = spectral_dimension_quenched(env, _even_times(6, 14))
        assert est.fit.slope == pytest.approx(-0.5, abs=0.05)

    def test_exit_slope_is_classical(self):
        # exit time of (-r, r) from 0 is exactly r^2 on the path
        res = exit_time_exponent(1e-12, [2, 4, 8, 16], 3, 43,
                                 ScalingFunctions(0.995))
        assert res.fit.slope == pytest.approx(2.0, abs=1e-9)
        assert res.discard_rate == 0.0
        assert res.mean_exit == pytest.approx([4.0, 16.0, 64.0, 256.0], rel=1e-9)

    def test_annealed_control_near_one_dimension(self):
        est = spectral_dimension_annealed(1e-12, _even_times(6, 10), 3, 7)
        assert abs(est.spectral_dimension - 1.0) <= 0.05


class TestExitEstimator:
    def test_stub_source_recovers_cubic(self):
        res = exit_time_exponent(1.0, [2, 4, 8, 16], 50, 0,
                                 ScalingFunctions(0.5),
                                 exit_source=lambda r: (r**3, 0.0))
        assert res.fit.slope == pytest.approx(3.0, abs=1e-12)
        assert res.predicted_slope == pytest.approx(3.0)
        assert res.discard_rate == 0.0
        assert list(res.used) == [50] * 4


class TestBallSampling:
    def test_small_real_run(self):
        s = ball_samples(1.0, 2.0, 30, 0.42, 5)
        assert s.total == 30
        assert s.used + s.discarded == 30
        assert s.discard_rate <= 0.05
        assert (s.volumes >= 6).all()  # the seed's closed neighbourhood
        assert (s.complement_resistance > 0).all()
        assert s.window_escalations >= 0

    def test_zero_replicates(self):
        s = ball_samples(1.0, 2.0, 0, 0.42, 5)
        assert s.used == 0 and s.discard_rate == 0.0

    def test_inverse_volume_scale_bounded(self):
        # E[1/V_r] * r^{1/delta} stays bounded and never trends upward.
        # Desk-scale balls overshoot the volume scale, so the product
        # actually decreases; only the upper bound is theorem-shaped.
        delta = 0.39
        rows = []
        for i, r in enumerate((2.0, 4.0, 8.0)):
            s = ball_samples(1.0, r, 40, delta, 9000 + i)
            inv = float(np.mean(1.0 / s.volumes))
            rows.append((r, inv))
            assert inv * r ** (1.0 / delta) <= 0.3
        fit = fit_power_law([(r, inv, 0.0) for r, inv in rows])
        assert fit.slope <= -1.0 / delta + 0.2


def _synthetic_samples(volumes, rc, r=8.0, delta=0.5):
    volumes = np.asarray(volumes, dtype=float)
    rc = np.asarray(rc, dtype=float)
    return BallSampleSet(1.0, r, delta, 1024, volumes, rc,
                         len(volumes), 0)


class TestTailEvents:
    # phi = r^{1/delta} = 64 for r=8, delta=0.5
    def test_good_radius_complements_the_tails(self):
        rng = np.random.default_rng(3)
        s = _synthetic_samples(np.exp(rng.uniform(0, 12, 500)),
                              np.exp(rng.uniform(-3, 2.2, 500)))
        for lam in (2.0, 5.0, 31.0):
            low = sc._tail_events("volume-lower", lam, s)
            high = sc._tail_events("volume-upper", lam, s)
            rc_low = sc._tail_events("resistance-lower", lam, s)
            good = sc._tail_events("good-radius", lam, s)
            # continuous draws: ties have probability zero
            assert (good == ~(low | high | rc_low)).all()

    def test_events_monotone_in_lambda(self):
        rng = np.random.default_rng(4)
        s = _synthetic_samples(np.exp(rng.uniform(0, 12, 400)),
                              np.exp(rng.uniform(-3, 2.2, 400)))
        grid = [2.0, 4.0, 8.0, 16.0, 32.0]
        for tag in ("volume-lower", "volume-upper", "resistance-lower"):
            curve = tail_curve(tag, 1.0, 8.0, grid, 0, 0.5, 0, samples=s)
            assert (np.diff(curve.probabilities) <= 1e-12).all()
            assert curve.used == 400
            assert (curve.ci_low <= curve.probabilities + 1e-12).all()
            assert (curve.probabilities <= curve.ci_high + 1e-12).all()
        goods = [good_radius_frequency(1.0, 8.0, lam, 0, 0.5, 0, samples=s)
                 for lam in grid]
        assert (np.diff(goods) >= -1e-12).all()

    def test_good_radius_saturates(self):
        s = _synthetic_samples([10.0, 64.0, 300.0], [0.5, 1.0, 4.0])
        assert good_radius_frequency(1.0, 8.0, 1e9, 0, 0.5, 0, samples=s) == 1.0

    def test_good_radius_rejects_small_lambda(self):
        s = _synthetic_samples([10.0], [1.0])
        with pytest.raises(ValueError, match="exceed 1"):
            good_radius_frequency(1.0, 8.0, 1.0, 0, 0.5, 0, samples=s)

    def test_unknown_tag_raises(self):
        s = _synthetic_samples([10.0], [1.0])
        with pytest.raises(ValueError, match="unknown tail tag"):
            tail_curve("volume-middle", 1.0, 8.0, [2, 4, 8], 0, 0.5, 0,
                       samples=s)

    def test_lambda_grid_below_one_rejected(self):
        s = _synthetic_samples([10.0], [1.0])
        with pytest.raises(ValueError, match=">= 1"):
            tail_curve("volume-lower", 1.0, 8.0, [0.5, 2, 4], 0, 0.5, 0,
                       samples=s)

    def test_tail_slope_recovers_power(self):
        # 64 volumes arranged so P[V <= phi/lam] = lam^{-2} exactly
        # at lam in {2, 4, 8}
        phi = 64.0
        volumes = np.concatenate([
            [phi / 16.0],
            np.full(3, phi / 5.0),
            np.full(12, phi / 3.0),
            np.full(48, phi * 0.9),
        ])
        s = _synthetic_samples(volumes, np.ones_like(volumes))
        curve = tail_curve("volume-lower", 1.0, 8.0, [2, 4, 8], 0, 0.5, 0,
                           samples=s)
        assert curve.probabilities == pytest.approx([1 / 4, 1 / 16, 1 / 64])
        fit = fit_tail_slope(curve)
        assert fit.slope == pytest.approx(-2.0, abs=1e-9)

    def test_tail_slope_needs_three_nonzero_points(self):
        # only lambda=2 catches the small volume; the other points are zero
        s = _synthetic_samples([20.0, 100.0], [1.0, 1.0])
        curve = tail_curve("volume-lower", 1.0, 8.0, [2, 4, 8], 0, 0.5, 0,
                           samples=s)
        with pytest.raises(ValueError, match="nonzero"):
            fit_tail_slope(curve)


class TestDyadicChain:
    def test_sequence_at_zero(self):
        assert dyadic_chain_sequence(0, 5) == [0] * 6

    def test_sequence_all_ones_pattern(self):
        # x = 2^m - 1 drops one bit per level: x_l = 2^m - 2^l
        m = 8
        seq = dyadic_chain_sequence(2**m - 1, m)
        assert seq == [2**m - 2**level for level in range(m + 1)]

    def test_sequence_structure(self):
        rng = np.random.default_rng(9)
        for x in rng.integers(0, 256, size=20):
            seq = dyadic_chain_sequence(int(x), 8)
            assert seq[0] == x and seq[-1] == 0
            for level, val in enumerate(seq):
                assert val % (1 << level) == 0
            for level in range(8):
                assert seq[level] - seq[level + 1] in (0, 1 << level)

    def test_path_chain_is_tight(self):
        # on the pure path every interval resistance is its length, so
        # both inequalities collapse to equalities at x = n - 1
        env = Environment.pure_path(1.0, 0, 256)
        report = dyadic_chain_check(env, 256, 255)
        assert report.resistance == pytest.approx(255.0, rel=1e-9)
        assert report.chain_slack == pytest.approx(0.0, abs=1e-9)
        assert report.level_slack == pytest.approx(0.0, abs=1e-9)

    def test_random_environment_slack(self):
        rng = np.random.default_rng(11)
        for seed in (1, 2, 3):
            env = sample_environment(ModelParams(1.0, 0, 256), seed)
            x = int(rng.integers(1, 256))
            report = dyadic_chain_check(env, 256, x)
            assert report.chain_slack >= -1e-8
            assert report.level_slack >= -1e-8
            assert report.properties_ok

    def test_domain_validation(self):
        env = Environment.pure_path(1.0, 0, 64)
        with pytest.raises(ValueError, match="outside"):
            dyadic_chain_check(env, 64, 64)
        with pytest.raises(ValueError, match="window"):
            dyadic_chain_check(env, 128, 3)
