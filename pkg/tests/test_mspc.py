import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mspc_guard.errors import CalibrationFault, InputFault
from mspc_guard.mspc import (
    THEORETICAL,
    AlarmEvent,
    ControlLimits,
    StatSeries,
    StreamMonitor,
    calibrate,
    compute_arl,
    d_limit_theoretical,
    d_statistic,
    dump_model,
    empirical_limits,
    load_model,
    monitor_stream,
    project,
    q_limit_box,
    q_statistic,
    save_model,
    statistics,
    theoretical_limits,
)
from mspc_guard.plant import VARIABLE_NAMES, ScenarioConfig, simulate_run


@pytest.fixture(scope="module")
def sim_block():
    run = simulate_run(ScenarioConfig(duration=500 * 5 / 3600, seed=21, onset=0.1))
    return run.controller_view


@pytest.fixture
def model(gaussian_data):
    return calibrate(gaussian_data, ["a", "b", "c", "d"], retain=2)


class TestCalibrate:
    def test_loadings_orthonormal(self, model):
        P = model.loadings
        assert np.abs(P.T @ P - np.eye(model.retained)).max() <= 1e-8

    def test_score_variances_positive_nonincreasing(self, gaussian_data):
        m = calibrate(gaussian_data, retain=4)
        assert np.all(m.score_variances > 0)
        assert np.all(np.diff(m.score_variances) <= 1e-12)

    def test_calibration_scores_centered_with_lambda_variance(self, gaussian_data, model):
        scores, _ = project(model, gaussian_data)
        assert np.abs(scores.mean(axis=0)).max() <= 1e-8
        np.testing.assert_allclose(scores.var(axis=0, ddof=1), model.score_variances, rtol=1e-6)

    def test_pooled_scaling_uses_ddof_one(self, gaussian_data, model):
        np.testing.assert_allclose(model.mean, gaussian_data.mean(axis=0))
        np.testing.assert_allclose(model.std, gaussian_data.std(axis=0, ddof=1))

    def test_rank_two_data(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((2, 300))
        X = np.column_stack([a, 3 * a, b])
        m = calibrate(X, retain=2)
        assert m.explained_variance_ratio[:2].sum() == pytest.approx(1.0, abs=1e-12)
        _, res = project(m, X)
        assert np.abs(res).max() <= 1e-10

    def test_variance_threshold_policy(self, gaussian_data):
        m = calibrate(gaussian_data, retain=0.9)
        cum = np.cumsum(m.explained_variance_ratio)
        assert cum[m.retained - 1] >= 0.9
        assert m.retained == 1 or cum[m.retained - 2] < 0.9

    def test_zero_variance_variable_excluded(self, sim_block):
        m = calibrate(sim_block, VARIABLE_NAMES, retain=0.9)
        assert m.excluded_variables == ("u_b",)
        assert len(m.kept) == 7
        # full-width observations still project
        scores, residual = project(m, sim_block[:3])
        assert scores.shape == (3, m.retained) and residual.shape == (3, 7)

    def test_fixed_retain_capped_at_kept_variables(self, sim_block):
        with pytest.warns(UserWarning):
            m = calibrate(sim_block, VARIABLE_NAMES, retain=8)
        assert m.retained == 7
        scores, residual = project(m, sim_block)
        Z = m.scale(sim_block)
        rel = np.linalg.norm(scores @ m.loadings.T - Z) / np.linalg.norm(Z)
        assert rel <= 1e-8

    def test_all_constant_is_fault(self):
        with pytest.raises(CalibrationFault):
            calibrate(np.ones((10, 3)))

    def test_non_finite_is_input_fault(self, gaussian_data):
        X = gaussian_data.copy()
        X[5, 1] = np.nan
        with pytest.raises(InputFault):
            calibrate(X)

    def test_single_row_rejected(self):
        with pytest.raises(InputFault):
            calibrate(np.ones((1, 3)))

    def test_retain_zero_rejected(self, gaussian_data):
        with pytest.raises(InputFault):
            calibrate(gaussian_data, retain=0)

    def test_deterministic_sign(self, gaussian_data):
        m = calibrate(gaussian_data, retain=3)
        pivot = np.argmax(np.abs(m.loadings), axis=0)
        assert np.all(m.loadings[pivot, np.arange(3)] > 0)


class TestProject:
    def test_mean_projects_to_origin(self, model):
        scores, res = project(model, model.mean)
        assert np.all(scores == 0) and np.all(res == 0)

    def test_point_on_first_component(self, model):
        x = model.mean + model.std * model.loadings[:, 0]
        scores, res = project(model, x)
        np.testing.assert_allclose(scores, [1.0, 0.0], atol=1e-12)
        assert np.abs(res).max() <= 1e-12

    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
    def test_reconstruction_identity(self, x):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((50, 4)) @ np.diag([1.0, 2.0, 0.5, 3.0])
        m = calibrate(data, retain=2)
        scores, res = project(m, np.array(x))
        z = m.scale(np.array(x))
        assert np.abs(scores @ m.loadings.T + res - z).max() <= 1e-10 * max(1.0, np.abs(z).max())

    def test_dimension_mismatch(self, model):
        with pytest.raises(InputFault):
            project(model, np.zeros(3))


class TestStatistics:
    def test_d_trivial(self, model):
        assert d_statistic(model, np.zeros(2)) == 0.0
        assert d_statistic(model, [np.sqrt(model.score_variances[0]), 0.0]) == pytest.approx(1.0)

    def test_q_trivial(self, model):
        assert q_statistic(model, np.zeros(4)) == 0.0
        assert q_statistic(model, [0, 1.0, 0, 0]) == 1.0

    def test_wrong_lengths(self, model):
        with pytest.raises(InputFault):
            d_statistic(model, np.zeros(3))
        with pytest.raises(InputFault):
            q_statistic(model, np.zeros(2))

    def test_non_negative(self, model, gaussian_data):
        d, q = statistics(model, gaussian_data)
        assert np.all(d >= 0) and np.all(q >= 0)


class TestLimits:
    def test_constant_series(self):
        c = np.full(200, 2.5)
        lim = empirical_limits(c, c)
        assert lim.d_95 == lim.d_99 == lim.q_95 == lim.q_99 == 2.5

    def test_linear_interpolation_quantile(self):
        s = np.arange(1, 1001, dtype=float)
        lim = empirical_limits(s, s)
        # position (n - 1) p = 989.01 between 990 and 991
        assert lim.d_99 == pytest.approx(990.01, abs=1e-9)
        assert lim.d_95 == pytest.approx(950.05, abs=1e-9)

    def test_self_exceedance_one_percent(self, model, gaussian_data):
        d, q = statistics(model, gaussian_data)
        lim = empirical_limits(d, q)
        assert abs(np.mean(d > lim.d_99) - 0.01) <= 0.002
        assert abs(np.mean(q > lim.q_99) - 0.01) <= 0.002

    def test_too_few_points(self):
        with pytest.raises(CalibrationFault):
            empirical_limits(np.ones(99), np.ones(99))

    def test_limit_ordering_enforced(self):
        with pytest.raises(CalibrationFault):
            ControlLimits(2.0, 1.0, 1.0, 2.0)

    def test_d_limit_tends_to_chi2(self):
        assert d_limit_theoretical(1, 1_000_000, 0.01) == pytest.approx(6.635, rel=0.01)

    def test_d_limit_needs_more_rows_than_components(self):
        with pytest.raises(CalibrationFault):
            d_limit_theoretical(5, 5, 0.01)

    @pytest.mark.parametrize("k", [2, 5, 10])
    def test_box_approximation_on_chi2_sample(self, k):
        rng = np.random.default_rng(k)
        q = 0.3 * rng.chisquare(k, size=10_000)
        mc = np.quantile(rng.chisquare(k, size=1_000_000) * 0.3, 0.99)
        assert q_limit_box(q, 0.01) == pytest.approx(mc, rel=0.10)

    def test_theoretical_monotone(self, model, gaussian_data):
        _, q = statistics(model, gaussian_data)
        lim = theoretical_limits(model, len(gaussian_data), q)
        assert lim.d_95 < lim.d_99 and lim.q_95 < lim.q_99
        assert lim.method == THEORETICAL

    def test_box_zero_residual(self):
        assert q_limit_box(np.zeros(500), 0.01) == 0.0


def _limits(d99=1.0, q99=1.0):
    return ControlLimits(d99, d99, q99, q99)


def _monitor_values(values, limit=1.0):
    """Run the alarm rule on a D series by building a 1-variable model whose
    D equals z^2 for standardized input z."""
    rng = np.random.default_rng(0)
    base = rng.standard_normal(5000)
    base = (base - base.mean()) / base.std(ddof=1)
    m = calibrate(base[:, None], retain=1)
    obs = m.mean + m.std * np.sqrt(np.asarray(values, dtype=float)) * np.sqrt(m.score_variances[0])
    return monitor_stream(m, ControlLimits(limit, limit, 0.0, 0.0), obs[:, None],
                          times=np.arange(len(values)) * 5.0)


class TestMonitor:
    def test_below_limits_no_alarm(self):
        alarms, series = _monitor_values([0.5] * 50)
        assert alarms == []
        assert len(series) == 50

    def test_three_consecutive_rule(self):
        vals = [0.1] * 5 + [2, 2, 0.1, 2, 2, 2] + [0.1] * 5
        alarms, _ = _monitor_values(vals)
        d_alarms = [a for a in alarms if a.statistic == "D"]
        assert len(d_alarms) == 1
        a = d_alarms[0]
        assert a.alarm_index == 10 and a.first_exceedance_index == 8
        assert a.alarm_t == 50.0 and a.first_exceedance_t == 40.0
        assert a.alarm_t >= a.first_exceedance_t + 2 * 5.0

    def test_exactly_at_limit_is_not_exceedance(self):
        alarms, _ = _monitor_values([1.0] * 20)
        assert alarms == []

    def test_one_open_alarm_until_closed(self):
        vals = [2] * 10 + [0.1, 0.1] + [2] * 5 + [0.1] * 3 + [2] * 3
        alarms, _ = _monitor_values(vals)
        d = [a.alarm_index for a in alarms if a.statistic == "D"]
        # the two-point dip does not close the first event; three points do
        assert d == [2, 22]

    def test_non_finite_observation_index(self, model, gaussian_data):
        X = gaussian_data[:30].copy()
        X[17, 2] = np.inf
        with pytest.raises(InputFault, match="17"):
            monitor_stream(model, _limits(), X)

    def test_chunk_offsets_in_error_index(self, model, gaussian_data):
        mon = StreamMonitor(model, _limits())
        mon.update(gaussian_data[:10], np.arange(10.0))
        bad = gaussian_data[10:20].copy()
        bad[3, 0] = np.nan
        with pytest.raises(InputFault, match="13"):
            mon.update(bad, np.arange(10.0, 20.0))

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(1, 40), min_size=1, max_size=8))
    def test_streaming_equals_batch(self, cuts):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((400, 3))
        data[100:140] += 4.0
        data[250:255, 1] -= 5.0
        m = calibrate(data[:300], retain=2)
        lim = ControlLimits(3.0, 6.0, 2.0, 3.0)
        times = np.arange(400) * 5.0
        batch_alarms, batch_series = monitor_stream(m, lim, data, times)
        mon = StreamMonitor(m, lim)
        alarms, parts, start = [], [], 0
        for c in cuts + [400]:
            stop = min(start + c, 400)
            a, s = mon.update(data[start:stop], times[start:stop])
            alarms += a
            parts.append(s)
            start = stop
            if start >= 400:
                break
        merged = StatSeries.concatenate(parts)
        assert alarms == batch_alarms
        assert np.array_equal(merged.d, batch_series.d)
        assert np.array_equal(merged.q, batch_series.q)


class TestArl:
    def _alarm(self, t):
        return AlarmEvent("D", t - 10.0, t, "controller", 0, 2)

    def test_fastest_possible(self):
        assert compute_arl([self._alarm(36010.0)], 36000.0) == 10.0

    def test_not_detected(self):
        assert compute_arl([self._alarm(100.0)], 36000.0) is None
        assert compute_arl([], 36000.0) is None

    def test_minimum_after_onset(self):
        alarms = [self._alarm(t) for t in (5.0, 36500.0, 36100.0)]
        assert compute_arl(alarms, 36000.0) == 100.0


class TestPersistence:
    def test_round_trip(self, tmp_path, model, gaussian_data):
        d, q = statistics(model, gaussian_data)
        lim = empirical_limits(d, q)
        path = tmp_path / "model.json"
        save_model(path, model, lim, {"note": "x"})
        m2, lim2, doc = load_model(path)
        assert lim2 == lim and doc["note"] == "x"
        d2, q2 = statistics(m2, gaussian_data)
        assert np.abs(d2 - d).max() <= 1e-12 and np.abs(q2 - q).max() <= 1e-12

    def test_document_contents(self, model):
        doc = json.loads(dump_model(model, _limits()))
        for key in ("mean", "std", "loadings", "score_variances", "retained", "excluded_variables"):
            assert key in doc["model"]
        assert doc["limits"]["method"] == "empirical"

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputFault):
            load_model(tmp_path / "nope.json")

    def test_alarm_dict_round_trip(self):
        a = AlarmEvent("Q", 10.0, 20.0, "process", 2, 4)
        assert AlarmEvent.from_dict(a.to_dict()) == a
