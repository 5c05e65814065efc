import math

import numpy as np
import pytest

from buslink.errors import FitError, MetricError
from buslink.evaluation import (bound_width, evaluate_split, hm_fit, hm_predict,
                                lr_fit, lr_predict, mae, modal_covariates,
                                quantile_interp, rmse, split_by_date)
from buslink.hetlognorm import PredictionWithBounds
from buslink.inference import CovariateVector, LinkObservation


class TestHistoricalMean:
    def test_four_point_quantiles(self):
        m = hm_fit([10, 20, 30, 40], min_samples=4)
        assert m.mean == 25.0
        assert m.q2_5 == pytest.approx(10.75, abs=1e-12)
        assert m.q97_5 == pytest.approx(39.25, abs=1e-12)

    def test_constant_sample(self):
        m = hm_fit([7, 7, 7, 7], min_samples=4)
        b = hm_predict(m)
        assert (b.point, b.lower, b.upper) == (7.0, 7.0, 7.0)

    def test_outlier_shifts_mean_not_low_quantile(self):
        # per the project-wide (n-1)q rule: q97.5 at position 2.925 of
        # [10,10,10,100] interpolates to 10 + 0.925*90 = 93.25
        m = hm_fit([10, 10, 10, 100], min_samples=4)
        assert m.mean == 32.5
        assert m.q97_5 == pytest.approx(93.25, abs=1e-12)
        assert m.q2_5 == pytest.approx(10.0, abs=1e-12)

    def test_insufficient(self):
        with pytest.raises(FitError):
            hm_fit([1.0, 2.0])

    def test_bounds_widen_with_spread(self):
        base = np.array([20.0, 25.0, 30.0, 35.0, 40.0] * 10)
        narrow = hm_fit(base)
        wide = hm_fit(30.0 + 2.0 * (base - 30.0))
        assert bound_width(hm_predict(wide)) >= bound_width(hm_predict(narrow))
        assert wide.mean == pytest.approx(narrow.mean)


class TestLinearBaseline:
    def test_exact_linear_zero_width(self):
        X = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [1, 1, 0, 0]] * 5,
                     dtype=float)
        y = 10.0 + 3.0 * X[:, 0] + 2.0 * X[:, 1]
        m = lr_fit(y, X)
        b = lr_predict(m, [1, 1, 0, 0])
        assert b.point == pytest.approx(15.0, abs=1e-9)
        assert bound_width(b) == pytest.approx(0.0, abs=1e-6)

    def test_intercept_only_closed_form(self):
        y = np.array([10.0, 20.0, 30.0])
        X = np.zeros((3, 4))
        m = lr_fit(y, X, min_samples=3)
        b = lr_predict(m, [0, 0, 0, 0])
        assert b.point == pytest.approx(20.0)
        assert m.residual_variance == pytest.approx(100.0)
        half = 1.959963984540054 * math.sqrt(100.0 / 3.0)
        assert b.upper - b.point == pytest.approx(half, rel=1e-9)

    def test_rank_deficient(self):
        X = np.zeros((30, 4))
        X[:, 0] = np.tile([0.0, 1.0], 15)
        X[:, 1] = X[:, 0]
        with pytest.raises(FitError) as e:
            lr_fit(np.random.default_rng(0).normal(size=30), X)
        assert e.value.kind == "rank_deficient"


class TestMetrics:
    def test_worked_example(self):
        obs, pred = [10, 20, 30], [12, 18, 33]
        assert mae(obs, pred) == pytest.approx(7.0 / 3.0, abs=1e-9)
        assert rmse(obs, pred) == pytest.approx(math.sqrt(17.0 / 3.0), abs=1e-9)

    def test_identical(self):
        assert mae([1, 2], [1, 2]) == 0.0
        assert rmse([1, 2], [1, 2]) == 0.0

    def test_bound_width(self):
        assert bound_width(PredictionWithBounds(27.5, 26.436, 28.601)) == \
            pytest.approx(2.165, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            mae([1, 2], [1, 2, 3])
        with pytest.raises(MetricError):
            rmse([], [])

    def test_rmse_ge_mae_property(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = rng.integers(1, 30)
            obs = rng.normal(0, 10, n)
            pred = obs + rng.normal(0, 5, n)
            assert rmse(obs, pred) >= mae(obs, pred) - 1e-12


def _obs(route_key, link, depart, road, cov):
    return LinkObservation(route_key=route_key, link_index=link, depart_prev=depart,
                           total_time=road + 5.0, dwell_time=5.0,
                           intersection_times=(), road_time=road,
                           covariates=CovariateVector(*cov))


class TestSplit:
    def _mk(self, n_train=40, n_test=10):
        rows = []
        rng = np.random.default_rng(0)
        # 2023-09-01 .. / test rows dated 2023-10-10+
        for i in range(n_train):
            t = 1693526400 + i * 3600  # from 2023-09-01 UTC
            rows.append(_obs(("R", 0), 1, t, float(rng.uniform(20, 40)),
                             (0, i % 2, 1, 0)))
        for i in range(n_test):
            t = 1696912200 + i * 3600  # 2023-10-10 local and later
            rows.append(_obs(("R", 0), 1, t, float(rng.uniform(20, 40)),
                             (0, i % 2, 1, 0)))
        return rows

    def test_no_test_observation_predates_cut(self):
        rows = self._mk()
        train, test = split_by_date(rows, "2023-10-09", tz_offset=-5.0)
        from buslink.ingest import local_date_hour
        assert all(local_date_hour(o.depart_prev, -5.0)[0] >= "2023-10-09" for o in test)
        assert len(train) + len(test) == len(rows)
        assert train and test

    def test_empty_split_raises(self):
        rows = self._mk(n_test=0)
        with pytest.raises(MetricError) as e:
            evaluate_split(rows, "2024-01-01", tz_offset=-5.0)
        assert e.value.kind == "empty_split"

    def test_modal_covariates(self):
        rows = [_obs(("R", 0), 1, 0.0, 10.0, c)
                for c in [(0, 1, 1, 0)] * 3 + [(1, 0, 0, 1)] * 2]
        assert modal_covariates(rows) == (0, 1, 1, 0)


def test_lr_on_log_homoscedastic_data_recovers_coefficients():
    # cross-module check: OLS on log responses generated with constant
    # variance recovers the mean coefficients within standard OLS error
    from buslink.hetlognorm import generate_synthetic
    beta = np.array([3.0, 0.1, 0.2, -0.1, 0.5])
    ys, X = generate_synthetic(beta, [-3.0, 0, 0, 0, 0], 5000, seed=6)
    m = lr_fit(ys, X)
    sigma = math.exp(-1.5)
    se = sigma * math.sqrt(8.0 / 5000.0)  # conservative bound for binary columns
    assert np.all(np.abs(m.coef - beta) < 5 * se)


def test_quantile_interp_matches_numpy():
    rng = np.random.default_rng(5)
    vals = rng.normal(size=37)
    for q in (0.025, 0.5, 0.975):
        assert quantile_interp(vals, q) == pytest.approx(
            float(np.percentile(vals, 100 * q, method="linear")), abs=1e-12)
