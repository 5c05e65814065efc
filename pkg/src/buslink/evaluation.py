"""Baselines (historical mean, linear regression on raw seconds), point
metrics, and the train/test comparison driver.

Quantiles everywhere use linear interpolation at position (n-1)*q, the
project-wide rule shared with the Markov percentiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError, MetricError
from .hetlognorm import (PredictionWithBounds, design_matrix, fit as ln_fit,
                         predict_interval, predict_point)
from .ingest import local_date_hour
from .stats import normal_quantile


def quantile_interp(values, q: float) -> float:
    """Linear interpolation at position (n-1)*q of the sorted values."""
    s = np.sort(np.asarray(values, dtype=float))
    pos = (s.shape[0] - 1) * q
    lo = int(np.floor(pos))
    hi = int(np.ceil(pos))
    if lo == hi:
        return float(s[lo])
    return float(s[lo] + (pos - lo) * (s[hi] - s[lo]))


@dataclass(frozen=True)
class HistoricalMean:
    mean: float
    q2_5: float
    q97_5: float
    n: int


def hm_fit(samples, min_samples: int = 10) -> HistoricalMean:
    s = np.asarray(samples, dtype=float)
    if s.shape[0] < min_samples:
        raise FitError("insufficient_data", f"need {min_samples} samples, have {s.shape[0]}")
    return HistoricalMean(mean=float(np.mean(s)),
                          q2_5=quantile_interp(s, 0.025),
                          q97_5=quantile_interp(s, 0.975),
                          n=int(s.shape[0]))


def hm_predict(m: HistoricalMean) -> PredictionWithBounds:
    """Point = training mean; bounds = training 2.5/97.5 quantiles. Note the
    mean is not guaranteed to lie inside the quantile band."""
    return PredictionWithBounds(point=m.mean, lower=m.q2_5, upper=m.q97_5)


@dataclass(frozen=True)
class LinearBaseline:
    coef: np.ndarray  # (5,), NaN at masked positions
    active_mask: np.ndarray  # (5,) bool
    residual_variance: float  # unbiased, raw seconds^2
    gram_inv: np.ndarray  # (k, k) inverse of Z'Z on the active design
    n: int

    def coef_effective(self) -> np.ndarray:
        return np.where(self.active_mask, np.nan_to_num(self.coef), 0.0)


def lr_fit(ys, X, min_samples: int = 11) -> LinearBaseline:
    """OLS of raw seconds on the binary covariates with intercept."""
    y = np.asarray(ys, dtype=float)
    n = y.shape[0]
    if n < min_samples:
        raise FitError("insufficient_data", f"need {min_samples} samples, have {n}")
    Z_full = design_matrix(X)
    mask = np.ones(Z_full.shape[1], dtype=bool)
    for j in range(1, Z_full.shape[1]):
        if np.all(Z_full[:, j] == Z_full[0, j]):
            mask[j] = False
    Z = Z_full[:, mask]
    k = Z.shape[1]
    if np.linalg.matrix_rank(Z) < k:
        raise FitError("rank_deficient", "active design is rank deficient")
    gram = Z.T @ Z
    gram_inv = np.linalg.inv(gram)
    coef = gram_inv @ (Z.T @ y)
    resid = y - Z @ coef
    dof = max(n - k, 1)
    s2 = float(resid @ resid) / dof
    coef5 = np.full(Z_full.shape[1], np.nan)
    coef5[mask] = coef
    return LinearBaseline(coef=coef5, active_mask=mask, residual_variance=s2,
                          gram_inv=gram_inv, n=n)


def lr_predict(m: LinearBaseline, x, level: float = 0.95) -> PredictionWithBounds:
    """Mean prediction with its sampling CI (constant-variance normal errors)."""
    a_full = np.concatenate([[1.0], np.asarray(x, dtype=float).reshape(-1)])
    point = float(np.dot(m.coef_effective(), a_full))
    a = a_full[m.active_mask]
    half = normal_quantile(0.5 + level / 2.0) * np.sqrt(m.residual_variance * (a @ m.gram_inv @ a))
    return PredictionWithBounds(point=point, lower=point - float(half),
                                upper=point + float(half), level=level)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _paired(obs, pred):
    o = np.asarray(obs, dtype=float)
    p = np.asarray(pred, dtype=float)
    if o.shape[0] == 0:
        raise MetricError("empty", "no observations")
    if o.shape != p.shape:
        raise MetricError("length_mismatch", f"{o.shape} vs {p.shape}")
    return o, p


def rmse(obs, pred) -> float:
    o, p = _paired(obs, pred)
    return float(np.sqrt(np.mean((o - p) ** 2)))


def mae(obs, pred) -> float:
    o, p = _paired(obs, pred)
    return float(np.mean(np.abs(o - p)))


def bound_width(b: PredictionWithBounds) -> float:
    return b.upper - b.lower


# ---------------------------------------------------------------------------
# train/test comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkEvaluation:
    route_key: tuple
    link_index: int
    n_train: int
    n_test: int
    mae_ln: float | None
    rmse_ln: float | None
    bw_ln: float | None
    mae_hm: float | None
    rmse_hm: float | None
    bw_hm: float | None
    mae_lr: float | None
    rmse_lr: float | None
    bw_lr: float | None
    note: str = ""


def modal_covariates(rows) -> tuple:
    """Most frequent covariate combination; ties break lexicographically."""
    counts: dict = {}
    for obs in rows:
        key = obs.covariates.as_tuple()
        counts[key] = counts.get(key, 0) + 1
    top = max(counts.values())
    return min(k for k, c in counts.items() if c == top)


def split_by_date(observations, cut_date: str, tz_offset: float):
    """Date-cut split on depart_prev: local date < cut trains, >= cut tests."""
    train, test = [], []
    for obs in observations:
        date, _ = local_date_hour(obs.depart_prev, tz_offset)
        (train if date < cut_date else test).append(obs)
    return train, test


def evaluate_split(observations, cut_date: str, tz_offset: float,
                   min_fit_samples: int = 30) -> list:
    """Fit LN-MLE / HM / LR per link on the training side of the date cut and
    score them on the test side. Per-link failures become table gaps."""
    train, test = split_by_date(observations, cut_date, tz_offset)
    if not test or not train:
        raise MetricError("empty_split", f"train={len(train)} test={len(test)} at cut {cut_date}")

    keys = sorted({(o.route_key, o.link_index) for o in observations})
    results = []
    for route_key, link_index in keys:
        tr = [o for o in train if (o.route_key, o.link_index) == (route_key, link_index)]
        te = [o for o in test if (o.route_key, o.link_index) == (route_key, link_index)]
        base = dict(route_key=route_key, link_index=link_index,
                    n_train=len(tr), n_test=len(te))
        if not tr or not te:
            results.append(LinkEvaluation(**base, mae_ln=None, rmse_ln=None, bw_ln=None,
                                          mae_hm=None, rmse_hm=None, bw_hm=None,
                                          mae_lr=None, rmse_lr=None, bw_lr=None,
                                          note="empty side"))
            continue
        y_tr = np.array([o.road_time for o in tr])
        X_tr = np.array([o.covariates.as_array() for o in tr])
        y_te = np.array([o.road_time for o in te])
        X_te = np.array([o.covariates.as_array() for o in te])
        modal = np.array(modal_covariates(tr), dtype=float)

        vals: dict = {}
        notes = []
        try:
            ln = ln_fit(np.log(y_tr), X_tr, min_samples=min_fit_samples)
            pred = np.array([predict_point(ln, x) for x in X_te])
            vals["mae_ln"] = mae(y_te, pred)
            vals["rmse_ln"] = rmse(y_te, pred)
            vals["bw_ln"] = bound_width(predict_interval(ln, modal))
        except FitError as exc:
            vals.update(mae_ln=None, rmse_ln=None, bw_ln=None)
            notes.append(f"LN: {exc.kind}")
        try:
            hm = hm_fit(y_tr)
            vals["mae_hm"] = mae(y_te, np.full(len(te), hm.mean))
            vals["rmse_hm"] = rmse(y_te, np.full(len(te), hm.mean))
            vals["bw_hm"] = bound_width(hm_predict(hm))
        except FitError as exc:
            vals.update(mae_hm=None, rmse_hm=None, bw_hm=None)
            notes.append(f"HM: {exc.kind}")
        try:
            lr = lr_fit(y_tr, X_tr)
            pred = np.array([lr_predict(lr, x).point for x in X_te])
            vals["mae_lr"] = mae(y_te, pred)
            vals["rmse_lr"] = rmse(y_te, pred)
            vals["bw_lr"] = bound_width(lr_predict(lr, modal))
        except FitError as exc:
            vals.update(mae_lr=None, rmse_lr=None, bw_lr=None)
            notes.append(f"LR: {exc.kind}")
        results.append(LinkEvaluation(**base, **vals, note="; ".join(notes)))
    return results
