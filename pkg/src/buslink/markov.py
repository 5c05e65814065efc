"""Link-state Markov chain: transition rows from predicted speeds, M-run
Monte-Carlo simulation of remaining time to every downstream stop.

The per-link step count is geometric with success probability
``1 - p_stay``; drawing it directly (inverse CDF of a pre-drawn uniform)
is distribution-identical to stepping the chain and exponentially
faster. Dwell and intersection times are sampled once per run and
feature. Remaining time to a stop means time until *departure from*
that stop, matching the link-total telescoping of the decomposition
identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accel import markov_offsets
from .components import (EmpiricalDwell, IntersectionLogNormal, bootstrap_pick,
                         lognormal_from_z)
from .errors import ConfigError, SimError
from .geometry import RouteModel, link_index_at
from .hetlognorm import HetLogNormalModel, predict_point
from .inference import open_road_link_of, resolve_threshold, space_mean_speed

S_CLAMP = 1.0 + 1e-9  # keeps p_stay >= 0 on a nearly finished link


@dataclass(frozen=True)
class MarkovConfig:
    delta_t: float = 5.0
    runs: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class TransitionRow:
    link_index: int
    p_stay: float
    p_advance: float


@dataclass(frozen=True)
class LinkPlan:
    """Everything the simulation needs about one in-scope link."""

    link_index: int
    end_stop_id: str
    remaining_dist: float
    speed: float  # link length / predicted road time
    steps: float  # remaining_dist / (delta_t * speed), clamped
    p_stay: float
    dwell: EmpiricalDwell
    intersections: tuple  # (IntersectionLogNormal, ...)


@dataclass(frozen=True)
class StopForecast:
    stop_id: str
    mean_remaining: float
    p2_5: float
    p97_5: float


@dataclass(frozen=True)
class SimulationSummary:
    origin_link: int
    origin_arc: float
    origin_time: float
    runs: int
    stops: tuple  # (StopForecast, ...) in route order


def steps_to_complete(remaining_dist: float, predicted_speed: float,
                      delta_t: float) -> float:
    """Time steps to finish the remaining distance at the predicted speed,
    clamped just above 1 so the stay probability stays non-negative."""
    if remaining_dist <= 0.0 or predicted_speed <= 0.0 or delta_t <= 0.0:
        raise SimError("nonpositive", "remaining distance, speed, and delta_t must be > 0")
    return max(remaining_dist / (delta_t * predicted_speed), S_CLAMP)


def build_plan(rm: RouteModel, road_models: dict, dwell_models: dict,
               intersection_models: dict, covariates, origin_link: int,
               origin_arc: float, delta_t: float) -> list:
    """Per-link plans from the origin position to the terminal stop.

    Road speed on every link uses the fitted model with the covariates
    observed at the origin time. Downstream full links must have a
    predicted traversal time above delta_t (the transition probabilities
    are unidentifiable otherwise); the partially completed origin link is
    clamped instead.
    """
    x = covariates.as_array() if hasattr(covariates, "as_array") else np.asarray(covariates, float)
    x_arc = dict(rm.projected_intersections)
    plans = []
    for link in rm.links:
        if link.index < origin_link:
            continue
        model: HetLogNormalModel = road_models[link.index]
        road_time = predict_point(model, x)
        speed = link.length / road_time
        if link.index == origin_link:
            remaining = link.end_arc - origin_arc
            if remaining <= 0.0:
                raise SimError("nonpositive", "origin is at or past the link end")
            x_ids = [xid for xid in link.intersection_ids if x_arc[xid] > origin_arc]
        else:
            remaining = link.length
            if road_time <= delta_t:
                raise ConfigError(
                    "delta_t_too_large",
                    f"link {link.index}: predicted road time {road_time:.2f}s <= "
                    f"delta_t {delta_t:.2f}s")
            x_ids = list(link.intersection_ids)
        steps = steps_to_complete(remaining, speed, delta_t)
        plans.append(LinkPlan(
            link_index=link.index, end_stop_id=link.to_stop,
            remaining_dist=remaining, speed=speed, steps=steps,
            p_stay=(steps - 1.0) / steps,
            dwell=dwell_models[link.to_stop],
            intersections=tuple(intersection_models[x] for x in x_ids)))
    if not plans:
        raise SimError("no_links", "origin has no downstream links")
    return plans


def transition_rows(plans) -> list:
    """Explicit transition rows; the terminal state is absorbing."""
    rows = [TransitionRow(link_index=p.link_index, p_stay=p.p_stay,
                          p_advance=1.0 - p.p_stay) for p in plans]
    rows.append(TransitionRow(link_index=plans[-1].link_index + 1, p_stay=1.0,
                              p_advance=0.0))
    return rows


def geometric_steps(u: float, p_stay: float) -> float:
    """Steps spent on a link: inverse-CDF geometric draw, support 1, 2, ..."""
    if p_stay <= 0.0:
        return 1.0
    f = math.ceil(math.log1p(-u) / math.log(p_stay))
    return f if f >= 1.0 else 1.0


def simulate_once(plans, delta_t: float, rng: np.random.Generator) -> np.ndarray:
    """One Markov run: remaining seconds until departure from each
    downstream stop. Reference implementation of the vectorized kernel."""
    out = np.empty(len(plans))
    cum = 0.0
    for i, plan in enumerate(plans):
        cum += geometric_steps(rng.random(), plan.p_stay) * delta_t
        cum += bootstrap_pick(plan.dwell.samples, rng.random())
        for x in plan.intersections:
            cum += lognormal_from_z(x.mu_s, x.sigma_s, rng.standard_normal())
        out[i] = cum
    return out


def simulate(plans, config: MarkovConfig, origin_arc: float = float("nan"),
             origin_time: float = float("nan")) -> SimulationSummary:
    """M-run simulation summary: mean and 2.5/97.5 percentiles per stop.

    Deterministic given the seed: all variates are drawn up front from one
    Generator (road uniforms, dwell uniforms, intersection normals, in that
    order) and transformed by the backend kernel.
    """
    m = int(config.runs)
    if m < 1:
        raise SimError("nonpositive", "runs must be >= 1")
    n_links = len(plans)
    rng = np.random.default_rng(config.seed)
    u_road = rng.random((m, n_links))
    u_dwell = rng.random((m, n_links))

    p_stay = np.array([p.p_stay for p in plans])
    dwell_pools = [p.dwell.samples for p in plans]
    dwell_len = np.array([s.shape[0] for s in dwell_pools], dtype=np.int64)
    dwell_start = np.concatenate(([0], np.cumsum(dwell_len)[:-1])).astype(np.int64)
    dwell_flat = (np.concatenate(dwell_pools) if dwell_pools
                  else np.zeros(0)).astype(float)

    x_mu, x_sigma, x_len = [], [], []
    for p in plans:
        x_len.append(len(p.intersections))
        for x in p.intersections:
            x_mu.append(x.mu_s)
            x_sigma.append(x.sigma_s)
    x_len = np.array(x_len, dtype=np.int64)
    x_start = np.concatenate(([0], np.cumsum(x_len)[:-1])).astype(np.int64)
    x_mu = np.array(x_mu, dtype=float)
    x_sigma = np.array(x_sigma, dtype=float)
    z_x = rng.standard_normal((m, x_mu.shape[0])) if x_mu.shape[0] else np.zeros((m, 0))

    offsets = markov_offsets(p_stay, u_road, dwell_flat, dwell_start, dwell_len,
                             u_dwell, x_mu, x_sigma, x_start, x_len, z_x,
                             float(config.delta_t))

    means = offsets.mean(axis=0)
    lo, hi = np.percentile(offsets, [2.5, 97.5], axis=0, method="linear")
    stops = tuple(StopForecast(stop_id=p.end_stop_id, mean_remaining=float(means[i]),
                               p2_5=float(lo[i]), p97_5=float(hi[i]))
                  for i, p in enumerate(plans))
    return SimulationSummary(origin_link=plans[0].link_index,
                             origin_arc=origin_arc, origin_time=origin_time,
                             runs=m, stops=stops)


class PredictionSession:
    """Replay-style real-time prediction for one traversal.

    Feed projected pings in time order; a simulation summary comes back
    for the first ping and thereafter whenever the traffic indicator
    flips. The indicator follows the latest open-road ping pair on the
    current link: below the speed threshold switches it to 1, at or above
    switches it back to 0. Rain/peak/weekday covariates are rebuilt at
    each emission time through ``covariate_fn(t, traffic)``. Each emission
    draws from a fresh seed derived from (base seed, emission index), so a
    replay is deterministic.
    """

    def __init__(self, rm: RouteModel, road_models: dict, dwell_models: dict,
                 intersection_models: dict, covariate_fn, config: MarkovConfig,
                 speed_threshold: float, initial_traffic: int = 0):
        self.rm = rm
        self.road_models = road_models
        self.dwell_models = dwell_models
        self.intersection_models = intersection_models
        self.covariate_fn = covariate_fn
        self.config = config
        self.speed_threshold = speed_threshold
        self.traffic = initial_traffic
        self._prev_ping = None
        self._emissions = 0

    def _locate(self, ping):
        arc = min(max(ping.arc_pos, self.rm.first_arc), self.rm.last_arc)
        if arc >= self.rm.last_arc:
            return None, arc
        link = link_index_at(self.rm, arc)
        return link, arc

    def _emit(self, ping) -> SimulationSummary | None:
        link, arc = self._locate(ping)
        if link is None:
            return None
        covariates = self.covariate_fn(ping.timestamp, self.traffic)
        plans = build_plan(self.rm, self.road_models, self.dwell_models,
                           self.intersection_models, covariates, link, arc,
                           self.config.delta_t)
        cfg = MarkovConfig(delta_t=self.config.delta_t, runs=self.config.runs,
                           seed=self.config.seed + self._emissions)
        self._emissions += 1
        return simulate(plans, cfg, origin_arc=arc, origin_time=ping.timestamp)

    def _advance(self, ping) -> bool:
        """Fold one ping into the indicator state; True when it flipped."""
        prev, self._prev_ping = self._prev_ping, ping
        if prev is None:
            return False
        pair_link = _shared_open_road_link(self.rm, prev, ping)
        if pair_link is None:
            return False
        v = space_mean_speed(prev, ping)
        new_traffic = 1 if v < resolve_threshold(self.speed_threshold, pair_link) else 0
        if new_traffic == self.traffic:
            return False
        self.traffic = new_traffic
        return True

    def start(self, ping) -> SimulationSummary | None:
        self._prev_ping = ping
        return self._emit(ping)

    def observe(self, ping) -> None:
        self._advance(ping)

    def update(self, ping) -> SimulationSummary | None:
        """Fold in one new ping; re-predict only on an indicator flip."""
        return self._emit(ping) if self._advance(ping) else None

    def emit_at(self, ping) -> SimulationSummary | None:
        self._advance(ping)
        return self._emit(ping)


def _shared_open_road_link(rm: RouteModel, a, b):
    """Link index when both pings are open road on the same link, else None."""
    tags = open_road_link_of([a, b], rm)
    if tags[0] >= 1 and tags[0] == tags[1]:
        return int(tags[0])
    return None
