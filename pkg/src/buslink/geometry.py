"""Route geometry: arc-length projection, links, and buffer zones.

All distances are planar meters from an equirectangular projection
anchored at the route's centroid. Routes span well under 20 km, so the
flat-earth error is orders of magnitude below the 20 m buffer radius
that event detection works at.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .accel import project_onto_polyline
from .errors import GeometryError
from .ingest import IntersectionSet, StaticNetwork

EARTH_RADIUS_M = 6371000.0
DEFAULT_BUFFER_RADIUS_M = 20.0
DEFAULT_OFF_ROUTE_M = 30.0


@dataclass(frozen=True)
class Polyline:
    """Planar polyline with cumulative arc length per vertex."""

    xs: np.ndarray
    ys: np.ndarray
    cum: np.ndarray
    anchor_lat: float
    anchor_lon: float

    @property
    def total_length(self) -> float:
        return float(self.cum[-1])


def planar_xy(lats, lons, anchor_lat: float, anchor_lon: float):
    lat = np.radians(np.asarray(lats, dtype=float))
    lon = np.radians(np.asarray(lons, dtype=float))
    lat0 = np.radians(anchor_lat)
    lon0 = np.radians(anchor_lon)
    x = EARTH_RADIUS_M * (lon - lon0) * np.cos(lat0)
    y = EARTH_RADIUS_M * (lat - lat0)
    return x, y


def build_polyline(points) -> Polyline:
    """points: sequence of (lat, lon) with >= 2 entries, no consecutive dups."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 2:
        raise GeometryError("degenerate_shape", "polyline needs at least 2 points")
    anchor_lat = float(pts[:, 0].mean())
    anchor_lon = float(pts[:, 1].mean())
    xs, ys = planar_xy(pts[:, 0], pts[:, 1], anchor_lat, anchor_lon)
    seg = np.hypot(np.diff(xs), np.diff(ys))
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    return Polyline(xs=xs, ys=ys, cum=cum, anchor_lat=anchor_lat, anchor_lon=anchor_lon)


def project_many(polyline: Polyline, lats, lons):
    """Arc position and perpendicular offset for a batch of lat/lon points.

    Ties between equidistant segments resolve to the smallest arc position.
    """
    qx, qy = planar_xy(lats, lons, polyline.anchor_lat, polyline.anchor_lon)
    qx = np.atleast_1d(np.asarray(qx, dtype=float))
    qy = np.atleast_1d(np.asarray(qy, dtype=float))
    return project_onto_polyline(qx, qy, polyline.xs, polyline.ys, polyline.cum)


def project_point(polyline: Polyline, lat: float, lon: float):
    arcs, offs = project_many(polyline, [lat], [lon])
    return float(arcs[0]), float(offs[0])


@dataclass(frozen=True)
class Link:
    index: int
    from_stop: str
    to_stop: str
    start_arc: float
    end_arc: float
    intersection_ids: tuple

    @property
    def length(self) -> float:
        return self.end_arc - self.start_arc


@dataclass(frozen=True)
class Zone:
    kind: str  # "stop" | "intersection" | "road"
    feature_id: str | None = None
    arc: float | None = None


ROAD_ZONE = Zone(kind="road")


@dataclass(frozen=True)
class RouteModel:
    route_key: tuple
    polyline: Polyline
    projected_stops: tuple  # ((stop_id, arc), ...) strictly increasing in arc
    projected_intersections: tuple  # ((intersection_id, arc), ...) kept ones
    links: tuple  # (Link, ...)
    buffer_radius: float
    merge_log: tuple = field(default=())
    representative_trip: str = ""

    @property
    def first_arc(self) -> float:
        return self.projected_stops[0][1]

    @property
    def last_arc(self) -> float:
        return self.projected_stops[-1][1]

    def ordered_features(self):
        feats = [("stop", sid, arc) for sid, arc in self.projected_stops]
        feats += [("intersection", xid, arc) for xid, arc in self.projected_intersections]
        feats.sort(key=lambda f: f[2])
        return feats


def _modal_trip(net: StaticNetwork, route_key) -> str:
    trips = [t for t in net.trips.values()
             if (t.route_id, t.direction_id) == tuple(route_key)]
    if not trips:
        raise GeometryError("no_trips", f"no trips for route {route_key}")
    counts = Counter(t.stop_ids for t in trips)
    top = max(counts.values())
    # deterministic tie break: highest count, then lexicographically smallest
    best_seq = min(s for s in counts if counts[s] == top)
    return min(t.trip_id for t in trips if t.stop_ids == best_seq)


def build_route_model(net: StaticNetwork, xs: IntersectionSet, route_key,
                      buffer_radius: float = DEFAULT_BUFFER_RADIUS_M,
                      off_route_m: float = DEFAULT_OFF_ROUTE_M) -> RouteModel:
    """Build the arc-length model for one (route_id, direction_id).

    The representative trip is the modal stop sequence among the route's
    trips. Intersections more than ``off_route_m`` from the shape are
    excluded; intersections whose buffer zone would overlap another
    feature's zone are merged away and recorded in the merge log.
    """
    trip_id = _modal_trip(net, route_key)
    trip = net.trips[trip_id]
    polyline = build_polyline(net.shapes[trip.shape_id])

    stop_lats = [net.stops[s][0] for s in trip.stop_ids]
    stop_lons = [net.stops[s][1] for s in trip.stop_ids]
    arcs, offs = project_many(polyline, stop_lats, stop_lons)
    for k in range(1, len(arcs)):
        if arcs[k] <= arcs[k - 1]:
            raise GeometryError(
                "non_monotone_stops",
                f"stop {trip.stop_ids[k]} projects at {arcs[k]:.1f} m, not after "
                f"{trip.stop_ids[k - 1]} at {arcs[k - 1]:.1f} m")
    projected_stops = tuple((sid, float(a)) for sid, a in zip(trip.stop_ids, arcs))

    merge_log = []
    kept = []
    if xs.points:
        x_ids = [p[0] for p in xs.points]
        x_arcs, x_offs = project_many(polyline, [p[1] for p in xs.points],
                                      [p[2] for p in xs.points])
        order = np.argsort(x_arcs, kind="stable")
        first_arc, last_arc = float(arcs[0]), float(arcs[-1])
        stop_arcs = np.asarray(arcs, dtype=float)
        for i in order:
            xid, arc, off = x_ids[i], float(x_arcs[i]), float(x_offs[i])
            if off > off_route_m:
                merge_log.append((xid, "off_route", off))
                continue
            if not (first_arc < arc < last_arc):
                merge_log.append((xid, "off_extent", arc))
                continue
            if np.min(np.abs(stop_arcs - arc)) <= 2.0 * buffer_radius:
                merge_log.append((xid, "near_stop", arc))
                continue
            if kept and arc - kept[-1][1] <= 2.0 * buffer_radius:
                merge_log.append((xid, "near_intersection", arc))
                continue
            kept.append((xid, arc))

    links = []
    for i in range(1, len(projected_stops)):
        a0, a1 = projected_stops[i - 1][1], projected_stops[i][1]
        in_link = tuple(xid for xid, arc in kept if a0 < arc < a1)
        links.append(Link(index=i, from_stop=projected_stops[i - 1][0],
                          to_stop=projected_stops[i][0],
                          start_arc=a0, end_arc=a1, intersection_ids=in_link))

    return RouteModel(route_key=tuple(route_key), polyline=polyline,
                      projected_stops=projected_stops,
                      projected_intersections=tuple(kept),
                      links=tuple(links), buffer_radius=buffer_radius,
                      merge_log=tuple(merge_log), representative_trip=trip_id)


def feature_zone_test(rm: RouteModel, arc_pos: float) -> Zone:
    """Zone tag at an arc position: the unique feature within the buffer
    radius (boundary inclusive), else open road."""
    for kind, fid, arc in rm.ordered_features():
        if abs(arc_pos - arc) <= rm.buffer_radius:
            return Zone(kind=kind, feature_id=fid, arc=arc)
    return ROAD_ZONE


def link_index_at(rm: RouteModel, arc_pos: float) -> int | None:
    """1-based link whose [start, end) arc interval contains the position."""
    for link in rm.links:
        if link.start_arc <= arc_pos < link.end_arc:
            return link.index
    return None
