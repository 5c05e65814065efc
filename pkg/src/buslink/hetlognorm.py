"""Heteroscedastic log-normal road-time model fitted by maximum likelihood.

Log road time y is normal with mean beta'z and variance exp(gamma'z),
where z = [1, rain, peak, weekday, traffic]. Fitting is Fisher scoring
with analytic score and the closed-form block-diagonal information
matrix, started from OLS. The information matrix is stored as the total
over observations; interval variances are a' (F^-1)_bb a with no extra
sample-size division.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError, NumericalError
from .stats import normal_quantile

COVARIATE_COUNT = 4
COEF_COUNT = COVARIATE_COUNT + 1  # intercept + covariates
GAMMA_FLOOR = -30.0  # exp floor guarding 1/sigma^2 overflow


def design_matrix(X) -> np.ndarray:
    """Augment an (n, 4) covariate matrix with an intercept column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != COVARIATE_COUNT:
        raise ValueError(f"expected {COVARIATE_COUNT} covariates, got {X.shape[1]}")
    return np.column_stack([np.ones(X.shape[0]), X])


def log_likelihood(beta, gamma, ys, Z) -> float:
    """Gaussian log-likelihood with log-linear variance, summed over rows."""
    ys = np.asarray(ys, dtype=float)
    Z = np.asarray(Z, dtype=float)
    n = ys.shape[0]
    gz = Z @ np.asarray(gamma, dtype=float)
    resid = ys - Z @ np.asarray(beta, dtype=float)
    return float(-0.5 * n * np.log(2.0 * np.pi)
                 - 0.5 * np.sum(gz)
                 - np.sum(resid * resid / (2.0 * np.exp(gz))))


def score(beta, gamma, ys, Z) -> np.ndarray:
    """Gradient of the log-likelihood, beta block then gamma block."""
    ys = np.asarray(ys, dtype=float)
    Z = np.asarray(Z, dtype=float)
    gz = Z @ np.asarray(gamma, dtype=float)
    inv_var = np.exp(-gz)
    resid = ys - Z @ np.asarray(beta, dtype=float)
    g_beta = Z.T @ (resid * inv_var)
    g_gamma = Z.T @ (-0.5 + 0.5 * resid * resid * inv_var)
    return np.concatenate([g_beta, g_gamma])


def fisher_information(beta, gamma, Z) -> np.ndarray:
    """Expected information: blockdiag(Z'SZ, Z'Z/2), cross blocks exactly 0."""
    Z = np.asarray(Z, dtype=float)
    k = Z.shape[1]
    inv_var = np.exp(-(Z @ np.asarray(gamma, dtype=float)))
    fim = np.zeros((2 * k, 2 * k))
    fim[:k, :k] = Z.T @ (Z * inv_var[:, None])
    fim[k:, k:] = 0.5 * (Z.T @ Z)
    return fim


@dataclass(frozen=True)
class HetLogNormalModel:
    """Fitted per-link model. Masked (constant-column) coefficients are NaN
    in ``beta``/``gamma`` and contribute zero to predictions; ``fim`` is the
    10x10 total information with zero rows/columns at masked positions."""

    beta: np.ndarray  # (5,)
    gamma: np.ndarray  # (5,)
    fim: np.ndarray  # (10, 10)
    n: int
    active_mask: np.ndarray  # (5,) bool, intercept always True
    loglik: float

    def beta_effective(self) -> np.ndarray:
        return np.where(self.active_mask, np.nan_to_num(self.beta), 0.0)

    def gamma_effective(self) -> np.ndarray:
        return np.where(self.active_mask, np.nan_to_num(self.gamma), 0.0)


def _active_mask(Z: np.ndarray) -> np.ndarray:
    mask = np.ones(Z.shape[1], dtype=bool)
    for j in range(1, Z.shape[1]):
        col = Z[:, j]
        if np.all(col == col[0]):
            mask[j] = False
    return mask


def fit(ys, X, min_samples: int = 30, tol: float = 1e-6,
        max_iter: int = 500) -> HetLogNormalModel:
    """Maximum-likelihood fit of (beta, gamma) for one link.

    ys are log road seconds, X the (n, 4) binary covariates. Starts from
    OLS (gamma0 = log mean squared residual), then Fisher-scoring steps
    with halving on likelihood decrease until the score norm scaled by n
    drops to ``tol``.
    """
    ys = np.asarray(ys, dtype=float)
    n = ys.shape[0]
    if n < min_samples:
        raise FitError("insufficient_data", f"need at least {min_samples} observations, have {n}")
    Z_full = design_matrix(X)
    mask = _active_mask(Z_full)
    Z = Z_full[:, mask]
    k = Z.shape[1]
    if np.linalg.matrix_rank(Z) < k:
        raise FitError("singular_design", "active design is rank deficient")

    beta, *_ = np.linalg.lstsq(Z, ys, rcond=None)
    resid = ys - Z @ beta
    msr = float(np.mean(resid * resid))
    if msr <= 0.0:
        raise FitError("degenerate_variance", "zero-variance sample")
    gamma = np.zeros(k)
    gamma[0] = np.log(msr)

    ll = log_likelihood(beta, gamma, ys, Z)
    converged = False
    for _ in range(max_iter):
        if np.min(Z @ gamma) < GAMMA_FLOOR:
            raise FitError("degenerate_variance",
                           f"log variance below {GAMMA_FLOOR}; sample is (near) deterministic")
        grad = score(beta, gamma, ys, Z)
        if np.linalg.norm(grad) / n <= tol:
            converged = True
            break
        fim = fisher_information(beta, gamma, Z)
        try:
            step = np.linalg.solve(fim, grad)
        except np.linalg.LinAlgError as exc:
            raise FitError("singular_design", f"information matrix singular: {exc}") from exc
        scale = 1.0
        improved = False
        for _ in range(40):
            b_new = beta + scale * step[:k]
            g_new = gamma + scale * step[k:]
            ll_new = log_likelihood(b_new, g_new, ys, Z)
            if ll_new >= ll - 1e-12:
                beta, gamma, ll = b_new, g_new, ll_new
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    if not converged:
        grad = score(beta, gamma, ys, Z)
        if np.linalg.norm(grad) / n > tol:
            raise FitError("no_convergence",
                           f"score norm {np.linalg.norm(grad) / n:.3e} after {max_iter} iterations")

    beta5 = np.full(COEF_COUNT, np.nan)
    gamma5 = np.full(COEF_COUNT, np.nan)
    beta5[mask] = beta
    gamma5[mask] = gamma
    fim10 = np.zeros((2 * COEF_COUNT, 2 * COEF_COUNT))
    idx = np.concatenate([np.flatnonzero(mask), COEF_COUNT + np.flatnonzero(mask)])
    fim10[np.ix_(idx, idx)] = fisher_information(beta, gamma, Z)
    return HetLogNormalModel(beta=beta5, gamma=gamma5, fim=fim10, n=n,
                             active_mask=mask, loglik=float(ll))


def _augmented(model: HetLogNormalModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != COVARIATE_COUNT:
        raise ValueError(f"expected {COVARIATE_COUNT} covariates")
    return np.concatenate([[1.0], x])


def predict_point(model: HetLogNormalModel, x) -> float:
    """Median road time in seconds: exp(beta' [1, x]), masked terms = 0."""
    a = _augmented(model, x)
    return float(np.exp(np.dot(model.beta_effective(), a)))


@dataclass(frozen=True)
class PredictionWithBounds:
    point: float
    lower: float
    upper: float
    level: float = 0.95

    @property
    def width(self) -> float:
        return self.upper - self.lower


def mu_interval_stddev(model: HetLogNormalModel, x) -> float:
    """Asymptotic std dev of the fitted mean at covariates x."""
    a = _augmented(model, x)[model.active_mask]
    k = int(np.sum(model.active_mask))
    idx = np.flatnonzero(model.active_mask)
    f_bb = model.fim[np.ix_(idx, idx)]
    try:
        sol = np.linalg.solve(f_bb, a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular_fim", f"cannot invert information matrix: {exc}") from exc
    var = float(a @ sol)
    if var < 0.0:
        raise NumericalError("singular_fim", "negative interval variance")
    return float(np.sqrt(var))


def predict_interval(model: HetLogNormalModel, x, level: float = 0.95) -> PredictionWithBounds:
    """Point estimate with confidence bounds exp(mu_hat -+ z * sd(mu_hat))."""
    a = _augmented(model, x)
    mu = float(np.dot(model.beta_effective(), a))
    sd = mu_interval_stddev(model, x)
    z = normal_quantile(0.5 + level / 2.0)
    return PredictionWithBounds(point=float(np.exp(mu)),
                                lower=float(np.exp(mu - z * sd)),
                                upper=float(np.exp(mu + z * sd)),
                                level=level)


def generate_synthetic(beta, gamma, n: int, covariate_law=None, seed: int = 0):
    """Draw (ys, X) from the model; the oracle for consistency checks.

    ``covariate_law`` maps (rng, n) to an (n, 4) array; the default is four
    independent Bernoulli(0.5) columns. Same seed, same bits.
    """
    rng = np.random.default_rng(seed)
    if covariate_law is None:
        X = (rng.random((n, COVARIATE_COUNT)) < 0.5).astype(float)
    else:
        X = np.asarray(covariate_law(rng, n), dtype=float)
    Z = design_matrix(X)
    mu = Z @ np.asarray(beta, dtype=float)
    sd = np.exp(0.5 * (Z @ np.asarray(gamma, dtype=float)))
    ys = mu + sd * rng.standard_normal(n)
    return ys, X
