"""End-to-end drivers behind the CLI commands plus the run configuration.

A RunConfig comes from a ``key = value`` text file with CLI-flag
overrides on top (flags win). Every driver is deterministic given the
inputs and the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evaluation, stats
from .components import (DEFAULT_MIN_COMPONENT_SAMPLES, fit_dwell, fit_intersection)
from .errors import BuslinkError, ConfigError, FitError, InferenceError
from .geometry import build_route_model
from .hetlognorm import fit as ln_fit, predict_interval, predict_point
from .inference import (DEFAULT_PEAK_HOURS, build_covariates,
                        observations_from_traversal, project_traversal,
                        repair_monotonic)
from .ingest import (DEFAULT_MAX_GAP_S, DEFAULT_RAIN_LABELS, DEFAULT_TZ_OFFSET,
                     load_gtfs_static, load_intersections, load_pings, load_weather)
from .markov import MarkovConfig, PredictionSession
from .store import ModelStore, read_observations, read_store, write_observations, write_store


@dataclass
class RunConfig:
    gtfs_dir: str = ""
    pings: str = ""
    weather: str = ""
    intersections: str = ""
    observations: str = "observations.csv"
    model_store: str = "models.txt"
    out_dir: str = "."
    tz_offset: float = DEFAULT_TZ_OFFSET
    buffer_radius: float = 20.0
    off_route: float = 30.0
    speed_threshold: float = 5.0
    peak_hours: tuple = tuple(sorted(DEFAULT_PEAK_HOURS))
    delta_t: float = 5.0
    runs: int = 1000
    seed: int = 0
    cut_date: str = ""
    max_gap: float = DEFAULT_MAX_GAP_S
    min_fit_samples: int = 30
    min_component_samples: int = DEFAULT_MIN_COMPONENT_SAMPLES
    backward_tolerance: float = 5.0
    rain_labels: tuple = tuple(sorted(DEFAULT_RAIN_LABELS))
    link_speed_thresholds: str = ""  # per-link overrides, e.g. "2:4.0,5:6.5"

    @property
    def peak_hour_set(self):
        return frozenset(int(h) for h in self.peak_hours)

    @property
    def rain_label_set(self):
        return frozenset(self.rain_labels)

    @property
    def speed_threshold_by_link(self):
        """Global threshold or, with overrides, a link-index mapping."""
        if not self.link_speed_thresholds:
            return self.speed_threshold
        table: dict = {None: self.speed_threshold}
        for tok in self.link_speed_thresholds.split(","):
            link, _, value = tok.partition(":")
            if not value:
                raise ConfigError("bad_config",
                                  f"link_speed_thresholds entry {tok!r} is not index:value")
            table[int(link)] = float(value)
        return table


_INT_KEYS = {"runs", "seed", "min_fit_samples", "min_component_samples"}
_FLOAT_KEYS = {"tz_offset", "buffer_radius", "off_route", "speed_threshold",
               "delta_t", "max_gap", "backward_tolerance"}
_TUPLE_KEYS = {"peak_hours": int, "rain_labels": str}


def _coerce(key: str, value: str):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _TUPLE_KEYS:
        conv = _TUPLE_KEYS[key]
        return tuple(conv(tok.strip()) for tok in value.split(",") if tok.strip())
    return value


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                key = key.strip()
                if not sep or key not in known:
                    raise ConfigError("bad_config", f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _coerce(key, value.strip())
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        values[key] = _coerce(key, value) if isinstance(value, str) else value
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

@dataclass
class InferReport:
    observations_path: str
    n_traversals: int
    n_used: int
    n_observations: int
    n_interpolated: int
    per_link_counts: dict
    skipped: list = field(default_factory=list)


def run_infer(cfg: RunConfig) -> InferReport:
    net = load_gtfs_static(cfg.gtfs_dir)
    xs = load_intersections(cfg.intersections)
    weather = load_weather(cfg.weather)
    series = load_pings(cfg.pings, max_gap_s=cfg.max_gap)

    route_keys = sorted({(net.trips[t.trip_id].route_id, net.trips[t.trip_id].direction_id)
                         for t in series.segments if t.trip_id in net.trips})
    models = {rk: build_route_model(net, xs, rk, buffer_radius=cfg.buffer_radius,
                                    off_route_m=cfg.off_route)
              for rk in route_keys}

    observations = []
    skipped = []
    n_used = 0
    for trav in series.segments:
        trip = net.trips.get(trav.trip_id)
        if trip is None:
            skipped.append(f"{trav.trip_id}: unknown trip")
            continue
        rm = models[(trip.route_id, trip.direction_id)]
        try:
            obs, skips = observations_from_traversal(
                trav, rm, weather, tz_offset=cfg.tz_offset,
                speed_threshold=cfg.speed_threshold_by_link,
                peak_hours=cfg.peak_hour_set, rain_labels=cfg.rain_label_set,
                backward_tolerance=cfg.backward_tolerance)
        except InferenceError as exc:
            skipped.append(f"{trav.trip_id}@{trav.pings[0].timestamp}: {exc}")
            continue
        observations.extend(obs)
        skipped.extend(skips)
        if obs:
            n_used += 1

    observations.sort(key=lambda o: (o.route_key, o.link_index, o.depart_prev))
    out_path = Path(cfg.out_dir) / cfg.observations
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_observations(out_path, observations)
    counts: dict = {}
    for o in observations:
        counts[(o.route_key, o.link_index)] = counts.get((o.route_key, o.link_index), 0) + 1
    n_interp = sum(1 for o in observations
                   if any(f.startswith("interp") for f in o.flags))
    return InferReport(observations_path=str(out_path), n_traversals=len(series.segments),
                       n_used=n_used, n_observations=len(observations),
                       n_interpolated=n_interp, per_link_counts=counts, skipped=skipped)


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    store_path: str
    fitted_links: list
    failed_links: list  # (key, reason)


def _route_models_for(net, xs, cfg, route_keys):
    return {rk: build_route_model(net, xs, rk, buffer_radius=cfg.buffer_radius,
                                  off_route_m=cfg.off_route)
            for rk in route_keys}


def fit_all(observations, cfg: RunConfig, route_models: dict) -> tuple:
    """Fit road/dwell/intersection models for every link with data.

    Returns (ModelStore, fitted keys, failures). Dwell and intersection
    models fall back to route-level pooled samples when a feature has too
    few of its own.
    """
    store = ModelStore(road={}, dwell={}, intersections={})
    fitted, failed = [], []
    by_link: dict = {}
    for o in observations:
        by_link.setdefault((o.route_key, o.link_index), []).append(o)

    for key in sorted(by_link):
        rows = by_link[key]
        y = np.array([o.road_time for o in rows])
        X = np.array([o.covariates.as_array() for o in rows])
        try:
            store.road[key] = ln_fit(np.log(y), X, min_samples=cfg.min_fit_samples)
            fitted.append(key)
        except FitError as exc:
            failed.append((key, f"{exc.kind}"))

    for rk, rm in sorted(route_models.items()):
        link_obs = {li: by_link.get((rk, li), []) for li in (l.index for l in rm.links)}
        pooled_dwell = [o.dwell_time for rows in link_obs.values() for o in rows]
        for link in rm.links:
            samples = [o.dwell_time for o in link_obs[link.index]]
            try:
                store.dwell[(rk, link.to_stop)] = fit_dwell(
                    link.to_stop, samples, min_samples=cfg.min_component_samples)
            except FitError:
                try:
                    store.dwell[(rk, link.to_stop)] = fit_dwell(
                        link.to_stop, pooled_dwell,
                        min_samples=cfg.min_component_samples, pooled=True)
                except FitError as exc:
                    failed.append(((rk, link.to_stop), f"dwell {exc.kind}"))
        pooled_x = []
        x_samples: dict = {}
        x_zeros: dict = {}
        for link in rm.links:
            for o in link_obs[link.index]:
                for xid, secs, interpolated in o.intersection_times:
                    if secs > 0.0 and not interpolated:
                        x_samples.setdefault(xid, []).append(secs)
                        pooled_x.append(secs)
                    else:
                        x_zeros[xid] = x_zeros.get(xid, 0) + 1
        for xid, _arc in rm.projected_intersections:
            samples = x_samples.get(xid, [])
            zeros = x_zeros.get(xid, 0)
            frac = zeros / (zeros + len(samples)) if (zeros + len(samples)) else 0.0
            try:
                store.intersections[(rk, xid)] = fit_intersection(
                    xid, samples, min_samples=cfg.min_component_samples,
                    excluded_zero_fraction=frac)
            except FitError:
                try:
                    store.intersections[(rk, xid)] = fit_intersection(
                        xid, pooled_x, min_samples=cfg.min_component_samples,
                        excluded_zero_fraction=frac, pooled=True)
                except FitError as exc:
                    failed.append(((rk, xid), f"intersection {exc.kind}"))
    return store, fitted, failed


def run_fit(cfg: RunConfig) -> FitReport:
    observations = read_observations(Path(cfg.out_dir) / cfg.observations)
    net = load_gtfs_static(cfg.gtfs_dir)
    xs = load_intersections(cfg.intersections)
    route_keys = sorted({o.route_key for o in observations})
    route_models = _route_models_for(net, xs, cfg, route_keys)
    store, fitted, failed = fit_all(observations, cfg, route_models)
    store_path = Path(cfg.out_dir) / cfg.model_store
    write_store(store_path, store)
    return FitReport(store_path=str(store_path), fitted_links=fitted, failed_links=failed)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

@dataclass
class ValidationRow:
    component: str  # e.g. "road R1/0 link 1" or "intersection X1"
    test_name: str
    statistic: float | None
    p_value: float | None
    n: int
    note: str = ""


def run_validate(cfg: RunConfig) -> list:
    observations = read_observations(Path(cfg.out_dir) / cfg.observations)
    rows = []
    by_link: dict = {}
    x_samples: dict = {}
    for o in observations:
        by_link.setdefault((o.route_key, o.link_index), []).append(o)
        for xid, secs, interpolated in o.intersection_times:
            if secs > 0.0 and not interpolated:
                x_samples.setdefault((o.route_key, xid), []).append(secs)

    for key in sorted(by_link):
        rk, li = key
        obs = sorted(by_link[key], key=lambda o: o.depart_prev)
        label = f"road {rk[0]}/{rk[1]} link {li}"
        road = np.array([o.road_time for o in obs])
        Z = np.column_stack([np.ones(len(obs))] +
                            [np.array([o.covariates.as_array()[j] for o in obs])
                             for j in range(4)])
        for name, runner in (("ks_lognormal", lambda: stats.ks_lognormal(road)),
                             ("breusch_pagan", lambda: stats.breusch_pagan(np.log(road), Z)),
                             ("runs", lambda: stats.runs_test(road))):
            try:
                r = runner()
                rows.append(ValidationRow(component=label, test_name=r.test_name,
                                          statistic=r.statistic, p_value=r.p_value, n=r.n))
            except BuslinkError as exc:
                rows.append(ValidationRow(component=label, test_name=name,
                                          statistic=None, p_value=None,
                                          n=len(obs), note=exc.kind))
    for key in sorted(x_samples):
        rk, xid = key
        vals = np.array(x_samples[key])
        label = f"intersection {rk[0]}/{rk[1]} {xid}"
        try:
            r = stats.ks_lognormal(vals)
            rows.append(ValidationRow(component=label, test_name=r.test_name,
                                      statistic=r.statistic, p_value=r.p_value, n=r.n))
        except BuslinkError as exc:
            rows.append(ValidationRow(component=label, test_name="ks_lognormal",
                                      statistic=None, p_value=None,
                                      n=len(vals), note=exc.kind))
    return rows


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def run_evaluate(cfg: RunConfig) -> list:
    if not cfg.cut_date:
        raise ConfigError("bad_config", "cut_date is required for evaluate")
    observations = read_observations(Path(cfg.out_dir) / cfg.observations)
    return evaluation.evaluate_split(observations, cfg.cut_date, cfg.tz_offset,
                                     min_fit_samples=cfg.min_fit_samples)


# ---------------------------------------------------------------------------
# predict / simulate
# ---------------------------------------------------------------------------

def run_predict(cfg: RunConfig, route_id: str, direction_id: int, link_index: int,
                x, level: float = 0.95):
    store = read_store(Path(cfg.out_dir) / cfg.model_store)
    key = ((route_id, direction_id), link_index)
    if key not in store.road:
        raise ConfigError("not_fitted", f"no fitted model for {key}")
    model = store.road[key]
    return predict_point(model, x), predict_interval(model, x, level=level)


@dataclass
class SimulationBatch:
    timestamp: float
    trip_id: str
    summary: object


def _session_for(cfg: RunConfig, rm, store: ModelStore, weather):
    road, dwell, inters = store.for_route(rm.route_key)
    missing = [l.index for l in rm.links if l.index not in road
               or l.to_stop not in dwell
               or any(x not in inters for x in l.intersection_ids)]
    if missing:
        raise ConfigError("not_fitted", f"links without fitted models: {missing}")

    def covariate_fn(t, traffic):
        return build_covariates(t, weather, traffic, cfg.tz_offset,
                                cfg.peak_hour_set, cfg.rain_label_set)

    return PredictionSession(rm, road, dwell, inters, covariate_fn,
                             MarkovConfig(delta_t=cfg.delta_t, runs=cfg.runs, seed=cfg.seed),
                             cfg.speed_threshold_by_link)


def run_simulate(cfg: RunConfig, trip_id: str, at: float | None = None,
                 replay: bool = False) -> list:
    """Replay a traversal through the prediction session.

    With ``at``: one batch from the bus position at the last ping <= at.
    With ``replay``: a batch at the first ping and at every traffic
    indicator flip.
    """
    net = load_gtfs_static(cfg.gtfs_dir)
    xs = load_intersections(cfg.intersections)
    weather = load_weather(cfg.weather)
    series = load_pings(cfg.pings, max_gap_s=cfg.max_gap)
    store = read_store(Path(cfg.out_dir) / cfg.model_store)

    trip = net.trips.get(trip_id)
    if trip is None:
        raise ConfigError("not_found", f"trip {trip_id} not in the static feed")
    candidates = [t for t in series.segments if t.trip_id == trip_id]
    if at is not None:
        candidates = [t for t in candidates
                      if t.pings[0].timestamp <= at]
        candidates = [t for t in candidates if t.pings[-1].timestamp >= at] or candidates[-1:]
    if not candidates:
        raise ConfigError("not_found", f"no ping segment for trip {trip_id}"
                          + (f" at {at}" if at is not None else ""))
    trav = candidates[-1]
    rm = build_route_model(net, xs, (trip.route_id, trip.direction_id),
                           buffer_radius=cfg.buffer_radius, off_route_m=cfg.off_route)
    pps = repair_monotonic(project_traversal(trav, rm), cfg.backward_tolerance)
    if at is not None:
        pps = [p for p in pps if p.timestamp <= at]
        if not pps:
            raise ConfigError("not_found", f"trip {trip_id} has no pings at or before {at}")

    session = _session_for(cfg, rm, store, weather)
    batches = []
    if replay:
        for i, ping in enumerate(pps):
            summary = session.start(ping) if i == 0 else session.update(ping)
            if summary is not None:
                batches.append(SimulationBatch(timestamp=ping.timestamp,
                                               trip_id=trip_id, summary=summary))
    else:
        for ping in pps[:-1]:
            session.observe(ping)
        summary = session.emit_at(pps[-1])
        if summary is None:
            raise ConfigError("not_found", f"trip {trip_id} already past the terminal at {at}")
        batches.append(SimulationBatch(timestamp=pps[-1].timestamp,
                                       trip_id=trip_id, summary=summary))
    return batches
