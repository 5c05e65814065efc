"""Loaders for GTFS static tables, ping records, weather, and intersections.

All loaders are pure functions of their input files and return frozen
structures that are safe to share between threads. Timestamps are POSIX
seconds UTC throughout; calendar logic (hour of day, weekday, service
date) applies a single signed ``tz_offset`` in hours.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .errors import IngestError

DEFAULT_TZ_OFFSET = -5  # US Eastern standard time; the feeds carry no zone info
DEFAULT_MAX_GAP_S = 120.0
DEFAULT_RAIN_LABELS = frozenset({"Rain", "Thunderstorm", "Drizzle"})

_GTFS_TABLES = ("stops.txt", "shapes.txt", "trips.txt", "routes.txt", "stop_times.txt")


def local_datetime(t: float, tz_offset: float) -> datetime:
    """Local wall-clock datetime for a POSIX timestamp under a fixed offset."""
    return datetime.fromtimestamp(t, tz=timezone.utc) + timedelta(hours=tz_offset)


def local_date_hour(t: float, tz_offset: float):
    dt = local_datetime(t, tz_offset)
    return dt.strftime("%Y-%m-%d"), dt.hour


# ---------------------------------------------------------------------------
# GTFS static
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trip:
    trip_id: str
    route_id: str
    direction_id: int
    shape_id: str
    stop_ids: tuple


@dataclass(frozen=True)
class StaticNetwork:
    routes: tuple  # ((route_id, direction_id), ...)
    shapes: dict  # shape_id -> ((lat, lon), ...)
    stops: dict  # stop_id -> (lat, lon, name)
    trips: dict  # trip_id -> Trip


def _read_table(dir_path: Path, name: str):
    path = dir_path / name
    if not path.is_file():
        raise IngestError("missing_table", f"{name} not found in {dir_path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


def _req(row: dict, key: str, table: str):
    val = row.get(key)
    if val is None or val == "":
        raise IngestError("parse", f"{table}: missing field {key!r} in row {row}")
    return val


def load_gtfs_static(dir_path) -> StaticNetwork:
    """Parse the five core GTFS tables into a validated StaticNetwork."""
    dir_path = Path(dir_path)

    stops = {}
    for row in _read_table(dir_path, "stops.txt"):
        sid = _req(row, "stop_id", "stops.txt")
        stops[sid] = (float(_req(row, "stop_lat", "stops.txt")),
                      float(_req(row, "stop_lon", "stops.txt")),
                      row.get("stop_name", ""))

    shape_pts = {}
    for row in _read_table(dir_path, "shapes.txt"):
        sid = _req(row, "shape_id", "shapes.txt")
        shape_pts.setdefault(sid, []).append(
            (int(_req(row, "shape_pt_sequence", "shapes.txt")),
             float(_req(row, "shape_pt_lat", "shapes.txt")),
             float(_req(row, "shape_pt_lon", "shapes.txt"))))
    shapes = {}
    for sid, pts in shape_pts.items():
        pts.sort(key=lambda p: p[0])
        coords = []
        for _, lat, lon in pts:
            if coords and coords[-1] == (lat, lon):
                continue  # drop exact consecutive duplicates
            coords.append((lat, lon))
        if len(coords) < 2:
            raise IngestError("referential", f"shape {sid} has fewer than 2 distinct points")
        shapes[sid] = tuple(coords)

    route_ids = set()
    for row in _read_table(dir_path, "routes.txt"):
        route_ids.add(_req(row, "route_id", "routes.txt"))

    trip_rows = {}
    for row in _read_table(dir_path, "trips.txt"):
        tid = _req(row, "trip_id", "trips.txt")
        rid = _req(row, "route_id", "trips.txt")
        if rid not in route_ids:
            raise IngestError("referential", f"trip {tid} references unknown route {rid}")
        shape_id = _req(row, "shape_id", "trips.txt")
        if shape_id not in shapes:
            raise IngestError("referential", f"trip {tid} references unknown shape {shape_id}")
        direction = int(row.get("direction_id") or 0)
        if direction not in (0, 1):
            raise IngestError("parse", f"trip {tid}: direction_id must be 0 or 1")
        trip_rows[tid] = (rid, direction, shape_id)

    seq = {}
    for row in _read_table(dir_path, "stop_times.txt"):
        tid = _req(row, "trip_id", "stop_times.txt")
        if tid not in trip_rows:
            raise IngestError("referential", f"stop_times references unknown trip {tid}")
        sid = _req(row, "stop_id", "stop_times.txt")
        if sid not in stops:
            raise IngestError("referential", f"trip {tid} references unknown stop {sid}")
        seq.setdefault(tid, []).append((int(_req(row, "stop_sequence", "stop_times.txt")), sid))

    trips = {}
    for tid, (rid, direction, shape_id) in trip_rows.items():
        if tid not in seq:
            raise IngestError("referential", f"trip {tid} has no stop_times rows")
        ordered = [sid for _, sid in sorted(seq[tid], key=lambda p: p[0])]
        if len(ordered) < 2:
            raise IngestError("referential", f"trip {tid} has fewer than 2 stops")
        trips[tid] = Trip(trip_id=tid, route_id=rid, direction_id=direction,
                          shape_id=shape_id, stop_ids=tuple(ordered))

    routes = tuple(sorted({(t.route_id, t.direction_id) for t in trips.values()}))
    return StaticNetwork(routes=routes, shapes=shapes, stops=stops, trips=trips)


# ---------------------------------------------------------------------------
# Vehicle position records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ping:
    trip_id: str
    vehicle_id: str
    timestamp: int
    lat: float
    lon: float


@dataclass(frozen=True)
class Traversal:
    trip_id: str
    vehicle_id: str
    pings: tuple  # (Ping, ...) strictly increasing timestamps


@dataclass(frozen=True)
class PingSeries:
    records: tuple  # all pings after dedup, sorted within groups
    segments: tuple  # (Traversal, ...) split at gaps > max_gap_s
    max_gap_s: float


def load_pings(path, max_gap_s: float = DEFAULT_MAX_GAP_S) -> PingSeries:
    """Load newline-delimited ``trip_id,vehicle_id,timestamp,lat,lon`` records.

    Records are grouped by (trip_id, vehicle_id), deduplicated on identical
    timestamps, and sorted; gaps larger than ``max_gap_s`` split a group
    into separate traversal segments.
    """
    path = Path(path)
    by_group: dict = {}
    n_lines = 0
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            n_lines += 1
            parts = line.split(",")
            if len(parts) != 5:
                raise IngestError("parse", f"{path.name}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                ping = Ping(trip_id=parts[0], vehicle_id=parts[1],
                            timestamp=int(parts[2]), lat=float(parts[3]), lon=float(parts[4]))
            except ValueError as exc:
                raise IngestError("parse", f"{path.name}:{lineno}: {exc}") from exc
            # first record wins on duplicate (trip, vehicle, timestamp)
            by_group.setdefault((ping.trip_id, ping.vehicle_id), {}).setdefault(ping.timestamp, ping)
    if n_lines == 0:
        raise IngestError("empty", f"{path} contains no records")

    records = []
    segments = []
    for key in sorted(by_group):
        group = [by_group[key][t] for t in sorted(by_group[key])]
        records.extend(group)
        current = [group[0]]
        for ping in group[1:]:
            if ping.timestamp - current[-1].timestamp > max_gap_s:
                segments.append(Traversal(trip_id=key[0], vehicle_id=key[1], pings=tuple(current)))
                current = [ping]
            else:
                current.append(ping)
        segments.append(Traversal(trip_id=key[0], vehicle_id=key[1], pings=tuple(current)))
    return PingSeries(records=tuple(records), segments=tuple(segments), max_gap_s=max_gap_s)


def format_ping(p: Ping) -> str:
    return f"{p.trip_id},{p.vehicle_id},{p.timestamp},{p.lat!r},{p.lon!r}"


def write_pings(series: PingSeries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in series.records:
            fh.write(format_ping(p) + "\n")


# ---------------------------------------------------------------------------
# Weather
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeatherTable:
    entries: dict  # (date "YYYY-MM-DD", hour 0-23) -> condition label

    def condition(self, date: str, hour: int) -> str:
        key = (date, hour)
        if key not in self.entries:
            raise LookupError(f"no weather entry for {date} hour {hour}")
        return self.entries[key]


def load_weather(path) -> WeatherTable:
    """Load ``date,hour,condition`` rows; duplicate (date, hour) is an error."""
    entries = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("date,"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise IngestError("parse", f"weather:{lineno}: expected 3 fields")
            date, hour_s, condition = parts[0], parts[1], parts[2]
            try:
                hour = int(hour_s)
            except ValueError as exc:
                raise IngestError("parse", f"weather:{lineno}: bad hour {hour_s!r}") from exc
            if not 0 <= hour <= 23:
                raise IngestError("parse", f"weather:{lineno}: hour {hour} out of range")
            key = (date, hour)
            if key in entries:
                raise IngestError("duplicate", f"duplicate weather entry for {date} hour {hour}")
            entries[key] = condition
    return WeatherTable(entries=entries)


def rain_indicator(w: WeatherTable, t: float, tz_offset: float,
                   rain_labels=DEFAULT_RAIN_LABELS) -> int:
    """1 iff the local hour's condition is a precipitation label.

    Raises LookupError for hours absent from the table; missing weather is
    never silently treated as dry.
    """
    date, hour = local_date_hour(t, tz_offset)
    return 1 if w.condition(date, hour) in rain_labels else 0


# ---------------------------------------------------------------------------
# Intersections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntersectionSet:
    points: tuple  # ((intersection_id, lat, lon), ...)


def load_intersections(path) -> IntersectionSet:
    points = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("intersection_id,"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise IngestError("parse", f"intersections:{lineno}: expected 3 fields")
            xid = parts[0]
            if xid in seen:
                raise IngestError("duplicate", f"duplicate intersection id {xid}")
            seen.add(xid)
            try:
                points.append((xid, float(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise IngestError("parse", f"intersections:{lineno}: {exc}") from exc
    return IntersectionSet(points=tuple(points))
