"""Stop dwell (empirical bootstrap) and intersection time (log-normal) models.

Dwell keeps the raw sample pool because skipped stops put a spike at
zero that no unimodal fit survives; sampling is a bootstrap draw so the
spike is preserved. Intersection times are fitted log-normal from the
strictly positive samples only, with the excluded-zero fraction kept as
metadata.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError

DEFAULT_MIN_COMPONENT_SAMPLES = 10


@dataclass(frozen=True)
class EmpiricalDwell:
    stop_id: str
    samples: np.ndarray  # sorted, non-negative seconds
    mean: float
    pooled: bool = False


def fit_dwell(stop_id: str, samples, min_samples: int = DEFAULT_MIN_COMPONENT_SAMPLES,
              pooled: bool = False) -> EmpiricalDwell:
    s = np.sort(np.asarray(samples, dtype=float))
    if s.shape[0] < min_samples:
        raise FitError("insufficient_data",
                       f"stop {stop_id}: need {min_samples} dwell samples, have {s.shape[0]}")
    if np.any(s < 0.0):
        raise FitError("invalid_sample", f"stop {stop_id}: negative dwell sample")
    return EmpiricalDwell(stop_id=stop_id, samples=s, mean=float(np.mean(s)), pooled=pooled)


def bootstrap_pick(samples: np.ndarray, u: float) -> float:
    """Uniform draw from a sample pool given a uniform variate; this is the
    single bootstrap definition shared with the simulation kernels."""
    idx = int(u * samples.shape[0])
    if idx >= samples.shape[0]:
        idx = samples.shape[0] - 1
    return float(samples[idx])


def sample_dwell(d: EmpiricalDwell, rng: np.random.Generator) -> float:
    return bootstrap_pick(d.samples, rng.random())


@dataclass(frozen=True)
class IntersectionLogNormal:
    intersection_id: str
    mu_s: float  # log seconds
    sigma_s: float  # log seconds, >= 0 (population MLE)
    n: int
    excluded_zero_fraction: float = 0.0
    pooled: bool = False


def fit_intersection(intersection_id: str, samples,
                     min_samples: int = DEFAULT_MIN_COMPONENT_SAMPLES,
                     excluded_zero_fraction: float = 0.0,
                     pooled: bool = False) -> IntersectionLogNormal:
    """Log-normal MLE from strictly positive waiting/passing times."""
    s = np.asarray(samples, dtype=float)
    if s.shape[0] < min_samples:
        raise FitError("insufficient_data",
                       f"intersection {intersection_id}: need {min_samples} samples, have {s.shape[0]}")
    if np.any(s <= 0.0):
        raise FitError("invalid_sample",
                       f"intersection {intersection_id}: nonpositive sample in log-normal fit")
    logs = np.log(s)
    return IntersectionLogNormal(intersection_id=intersection_id,
                                 mu_s=float(np.mean(logs)),
                                 sigma_s=float(np.std(logs)),
                                 n=int(s.shape[0]),
                                 excluded_zero_fraction=float(excluded_zero_fraction),
                                 pooled=pooled)


def predict_intersection(m: IntersectionLogNormal) -> float:
    """Median waiting/passing time, exp(mu)."""
    return float(np.exp(m.mu_s))


def lognormal_from_z(mu: float, sigma: float, z: float) -> float:
    return float(np.exp(mu + sigma * z))


def sample_intersection(m: IntersectionLogNormal, rng: np.random.Generator) -> float:
    return lognormal_from_z(m.mu_s, m.sigma_s, rng.standard_normal())
