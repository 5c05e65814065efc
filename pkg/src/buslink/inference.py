"""Buffer-zone event detection and link travel-time decomposition.

A projected traversal becomes a sequence of feature events (first ping
inside a feature's buffer zone = arrival, first subsequent ping outside
= departure). Features jumped between pings get a synthetic event at the
linearly interpolated crossing time, flagged ``interpolated``. Events
then decompose each link's total time into road, dwell, and
per-intersection components; the decomposition identity
``total = road + dwell + sum(intersections)`` holds exactly by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InferenceError
from .geometry import RouteModel, project_many
from .ingest import (DEFAULT_RAIN_LABELS, Traversal, WeatherTable, local_datetime,
                     rain_indicator)

DEFAULT_SPEED_THRESHOLD_MS = 5.0
DEFAULT_PEAK_HOURS = frozenset({7, 8, 16, 17})
DEFAULT_BACKWARD_TOLERANCE_M = 5.0
DEFAULT_MAX_INTERP_FRACTION = 0.5


@dataclass(frozen=True)
class ProjectedPing:
    timestamp: float
    arc_pos: float
    offset: float


@dataclass(frozen=True)
class FeatureEvent:
    kind: str  # "stop" | "intersection"
    feature_id: str
    arc: float
    t_arrival: float
    t_departure: float
    interpolated: bool = False

    @property
    def duration(self) -> float:
        return self.t_departure - self.t_arrival


def project_traversal(trav: Traversal, rm: RouteModel) -> list:
    lats = [p.lat for p in trav.pings]
    lons = [p.lon for p in trav.pings]
    arcs, offs = project_many(rm.polyline, lats, lons)
    return [ProjectedPing(timestamp=float(p.timestamp), arc_pos=float(a), offset=float(o))
            for p, a, o in zip(trav.pings, arcs, offs)]


def repair_monotonic(pps, backward_tolerance: float = DEFAULT_BACKWARD_TOLERANCE_M) -> list:
    """Drop pings that regress more than the tolerance behind the running
    maximum arc position (GPS jitter near stops)."""
    out = []
    high = -np.inf
    for p in pps:
        if p.arc_pos < high - backward_tolerance:
            continue
        out.append(p)
        if p.arc_pos > high:
            high = p.arc_pos
    return out


def detect_events(pps, rm: RouteModel,
                  max_interp_fraction: float = DEFAULT_MAX_INTERP_FRACTION) -> list:
    """Arrival/departure events for every feature the traversal crossed.

    ``pps`` must already be monotonicity-repaired. Raises
    InferenceError("too_sparse") when more than ``max_interp_fraction`` of
    the crossed features had to be interpolated.
    """
    if not pps:
        return []
    arcs = [p.arc_pos for p in pps]
    times = [p.timestamp for p in pps]
    n = len(pps)
    buffer = rm.buffer_radius

    events = []
    n_interp = 0
    i = 0
    prev_dep = -np.inf
    for kind, fid, farc in rm.ordered_features():
        while i < n and arcs[i] < farc - buffer:
            i += 1
        if i == n:
            break  # feature never reached
        if abs(arcs[i] - farc) <= buffer:
            t_arr = times[i]
            k = i + 1
            while k < n and abs(arcs[k] - farc) <= buffer:
                k += 1
            if k == n:
                break  # traversal ends inside the zone: incomplete event
            t_dep = times[k]
            i = k
            interpolated = False
        else:
            # zone jumped between pings i-1 and i
            if i == 0:
                continue  # traversal starts beyond this feature: not crossed
            frac = (farc - arcs[i - 1]) / (arcs[i] - arcs[i - 1])
            t_arr = t_dep = times[i - 1] + frac * (times[i] - times[i - 1])
            interpolated = True
            n_interp += 1
        # keep event times monotone when several zones fall in one ping gap
        t_arr = max(t_arr, prev_dep)
        t_dep = max(t_dep, t_arr)
        prev_dep = t_dep
        events.append(FeatureEvent(kind=kind, feature_id=fid, arc=farc,
                                   t_arrival=t_arr, t_departure=t_dep,
                                   interpolated=interpolated))
    if events and n_interp > max_interp_fraction * len(events):
        raise InferenceError("too_sparse",
                             f"{n_interp}/{len(events)} features interpolated")
    return events


class LinkTimes(NamedTuple):
    total: float
    dwell: float
    intersections: tuple  # ((intersection_id, seconds, interpolated), ...)
    road: float


def decompose_link(stop_event: FeatureEvent, intersection_events,
                   prev_stop_departure: float) -> LinkTimes:
    """Split one link traversal into its time components.

    total = t_dep(stop) - t_dep(prev stop); dwell = stop event duration;
    road = t_arr(stop) - t_dep(prev stop) - sum of intersection durations.
    """
    total = stop_event.t_departure - prev_stop_departure
    dwell = stop_event.t_departure - stop_event.t_arrival
    xs = tuple((e.feature_id, e.duration, e.interpolated) for e in intersection_events)
    road = stop_event.t_arrival - prev_stop_departure - sum(x[1] for x in xs)
    if road <= 0.0:
        raise InferenceError("nonpositive_road_time",
                             f"road time {road:.3f}s at stop {stop_event.feature_id}")
    return LinkTimes(total=total, dwell=dwell, intersections=xs, road=road)


def space_mean_speed(ping_prev: ProjectedPing, ping_curr: ProjectedPing) -> float:
    """Arc distance over elapsed time between two consecutive records."""
    dt = ping_curr.timestamp - ping_prev.timestamp
    if dt <= 0.0:
        raise InferenceError("bad_pair", "timestamps must strictly increase")
    return (ping_curr.arc_pos - ping_prev.arc_pos) / dt


class TrafficIndicator(NamedTuple):
    value: int
    observed: bool


def traffic_indicator(open_road_speeds, threshold: float) -> TrafficIndicator:
    """1 if any open-road speed fell below the threshold; an empty list is
    reported as 0 with observed=False."""
    speeds = list(open_road_speeds)
    if not speeds:
        return TrafficIndicator(value=0, observed=False)
    return TrafficIndicator(value=1 if any(v < threshold for v in speeds) else 0,
                            observed=True)


@dataclass(frozen=True)
class CovariateVector:
    rain: int
    peak: int
    weekday: int
    traffic: int

    def as_array(self) -> np.ndarray:
        return np.array([self.rain, self.peak, self.weekday, self.traffic], dtype=float)

    def as_tuple(self) -> tuple:
        return (self.rain, self.peak, self.weekday, self.traffic)


def build_covariates(t: float, weather: WeatherTable, traffic: int,
                     tz_offset: float,
                     peak_hours=DEFAULT_PEAK_HOURS,
                     rain_labels=None) -> CovariateVector:
    """Covariates at a timestamp: rain from the weather table, peak from the
    local hour, weekday Mon-Fri, traffic passed through."""
    labels = DEFAULT_RAIN_LABELS if rain_labels is None else rain_labels
    local = local_datetime(t, tz_offset)
    rain = rain_indicator(weather, t, tz_offset, labels)
    return CovariateVector(rain=rain,
                           peak=1 if local.hour in peak_hours else 0,
                           weekday=1 if local.weekday() < 5 else 0,
                           traffic=int(traffic))


@dataclass(frozen=True)
class LinkObservation:
    route_key: tuple
    link_index: int
    depart_prev: float
    total_time: float
    dwell_time: float
    intersection_times: tuple  # ((intersection_id, seconds, interpolated), ...)
    road_time: float
    covariates: CovariateVector
    flags: tuple = ()

    def identity_residual(self) -> float:
        parts = self.road_time + self.dwell_time + sum(x[1] for x in self.intersection_times)
        return self.total_time - parts


def resolve_threshold(speed_threshold, link_index: int) -> float:
    """The congestion threshold is configurable globally (a float) or per
    link (a mapping from link index, falling back to the global default)."""
    if isinstance(speed_threshold, dict):
        return float(speed_threshold.get(link_index,
                                         speed_threshold.get(None, DEFAULT_SPEED_THRESHOLD_MS)))
    return float(speed_threshold)


def observations_from_traversal(trav: Traversal, rm: RouteModel, weather: WeatherTable,
                                *, tz_offset: float,
                                speed_threshold=DEFAULT_SPEED_THRESHOLD_MS,
                                peak_hours=DEFAULT_PEAK_HOURS,
                                rain_labels=None,
                                backward_tolerance: float = DEFAULT_BACKWARD_TOLERANCE_M):
    """Full per-traversal inference: project, repair, detect, decompose.

    Returns (observations, skip_log); per-link failures are recorded and
    skipped rather than raised. InferenceError("too_sparse") and weather
    LookupError propagate (the whole traversal is unusable).
    """
    pps = repair_monotonic(project_traversal(trav, rm), backward_tolerance)
    events = detect_events(pps, rm)
    by_key = {(e.kind, e.arc): e for e in events}
    speeds_by_link = _open_road_speeds(pps, rm)

    observations = []
    skip_log = []
    stop_arcs = {sid_arc[0]: sid_arc[1] for sid_arc in rm.projected_stops}
    x_arcs = dict(rm.projected_intersections)
    for link in rm.links:
        ev_prev = by_key.get(("stop", stop_arcs[link.from_stop]))
        ev_stop = by_key.get(("stop", stop_arcs[link.to_stop]))
        if ev_prev is None or ev_stop is None:
            continue  # link not fully covered by this traversal
        x_events = []
        missing = False
        for xid in link.intersection_ids:
            ev = by_key.get(("intersection", x_arcs[xid]))
            if ev is None:
                missing = True
                break
            x_events.append(ev)
        if missing:
            continue
        try:
            lt = decompose_link(ev_stop, x_events, ev_prev.t_departure)
        except InferenceError as exc:
            skip_log.append(f"{trav.trip_id} link {link.index}: {exc}")
            continue
        traffic = traffic_indicator(speeds_by_link.get(link.index, []),
                                    resolve_threshold(speed_threshold, link.index))
        cov = build_covariates(ev_prev.t_departure, weather, traffic.value,
                               tz_offset, peak_hours, rain_labels)
        flags = []
        if ev_stop.interpolated:
            flags.append("interp_stop")
        for ev in x_events:
            if ev.interpolated:
                flags.append(f"interp_x={ev.feature_id}")
        if not traffic.observed:
            flags.append("unobs_traffic")
        observations.append(LinkObservation(
            route_key=rm.route_key, link_index=link.index,
            depart_prev=ev_prev.t_departure, total_time=lt.total,
            dwell_time=lt.dwell, intersection_times=lt.intersections,
            road_time=lt.road, covariates=cov, flags=tuple(flags)))
    return observations, skip_log


def open_road_link_of(pps, rm: RouteModel) -> np.ndarray:
    """Per ping: the 1-based link index if the ping is open road inside a
    link, else -1 (in a buffer zone or off the stop span)."""
    arcs = np.array([p.arc_pos for p in pps], dtype=float)
    feat_arcs = np.array([f[2] for f in rm.ordered_features()], dtype=float)
    pos = np.searchsorted(feat_arcs, arcs)
    dist = np.full(arcs.shape, np.inf)
    left_ok = pos > 0
    dist[left_ok] = arcs[left_ok] - feat_arcs[pos[left_ok] - 1]
    right_ok = pos < feat_arcs.shape[0]
    dist[right_ok] = np.minimum(dist[right_ok], feat_arcs[pos[right_ok]] - arcs[right_ok])
    in_zone = dist <= rm.buffer_radius

    stop_arcs = np.array([a for _, a in rm.projected_stops], dtype=float)
    link_idx = np.searchsorted(stop_arcs, arcs)
    on_span = (link_idx >= 1) & (link_idx <= len(rm.links)) & (arcs > stop_arcs[0]) \
        & (arcs < stop_arcs[-1])
    return np.where(on_span & ~in_zone, link_idx, -1)


def _open_road_speeds(pps, rm: RouteModel) -> dict:
    """Space-mean speeds of consecutive open-road ping pairs, per link."""
    tags = open_road_link_of(pps, rm)
    speeds: dict = {}
    for j in range(1, len(pps)):
        li = tags[j]
        if li >= 1 and tags[j - 1] == li and pps[j].timestamp > pps[j - 1].timestamp:
            speeds.setdefault(int(li), []).append(space_mean_speed(pps[j - 1], pps[j]))
    return speeds
