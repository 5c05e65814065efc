import json
from pathlib import Path

import pytest

from buslink import synth
from buslink.geometry import build_route_model
from buslink.inference import observations_from_traversal
from buslink.ingest import (load_gtfs_static, load_intersections, load_pings,
                            load_weather)

# Five-link truth used by the end-to-end and acceptance tests. Chosen so that
# every covariate combination stays inside the kinematically realizable road
# time window (see synth.validate_truth).
TRUTH = {
    "route_id": "R1", "direction_id": 0, "n_days": 59, "slots_per_day": 60,
    "seed": 11,
    "links": [
        {"length": 700.0, "beta": [4.05, 0.05, 0.10, 0.04, 0.70],
         "gamma": [-4.4, 0.0, 0.2, 0.0, 0.9],
         "dwell_pool": [5.0, 5.0, 12.0, 20.0, 30.0], "intersections": []},
        {"length": 850.0, "beta": [4.20, 0.03, 0.07, 0.05, 0.68],
         "gamma": [-4.5, 0.15, 0.0, -0.2, 1.0],
         "dwell_pool": [5.0, 8.0, 15.0, 25.0],
         "intersections": [{"id": "X1", "offset": 425.0, "mu": 2.8, "sigma": 0.35}]},
        {"length": 600.0, "beta": [3.89, 0.06, 0.09, 0.03, 0.75],
         "gamma": [-4.3, 0.0, 0.15, 0.0, 0.8],
         "dwell_pool": [5.0, 10.0, 18.0], "intersections": []},
        {"length": 950.0, "beta": [4.33, 0.02, 0.06, 0.02, 0.66],
         "gamma": [-4.5, 0.0, 0.2, 0.0, 1.0],
         "dwell_pool": [5.0, 5.0, 9.0, 22.0, 35.0],
         "intersections": [{"id": "X2", "offset": 470.0, "mu": 2.6, "sigma": 0.4}]},
        {"length": 750.0, "beta": [4.12, 0.04, 0.08, 0.05, 0.72],
         "gamma": [-4.4, 0.2, 0.0, -0.15, 0.9],
         "dwell_pool": [5.0, 7.0, 14.0, 26.0], "intersections": []},
    ],
}

CUT_DATE = "2023-10-09"
TZ = -5.0

# Small two-link truth for fast CLI round trips.
SMALL_TRUTH = {
    "route_id": "R1", "direction_id": 0, "n_days": 6, "slots_per_day": 10,
    "seed": 3,
    "links": [
        {"length": 700.0, "beta": [4.05, 0.05, 0.10, 0.04, 0.70],
         "gamma": [-4.4, 0.0, 0.2, 0.0, 0.9],
         "dwell_pool": [5.0, 5.0, 12.0, 20.0, 30.0], "intersections": []},
        {"length": 850.0, "beta": [4.20, 0.03, 0.07, 0.05, 0.68],
         "gamma": [-4.5, 0.15, 0.0, -0.2, 1.0],
         "dwell_pool": [5.0, 8.0, 15.0, 25.0],
         "intersections": [{"id": "X1", "offset": 425.0, "mu": 2.8, "sigma": 0.35}]},
    ],
}


def write_truth(path: Path, truth: dict) -> Path:
    path.write_text(json.dumps(truth, indent=1), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Full synthetic corpus: paths plus loaded inputs and the route model."""
    root = tmp_path_factory.mktemp("corpus")
    spec = synth.load_truth(write_truth(root / "truth.json", TRUTH))
    paths = synth.generate_corpus(spec, root)
    net = load_gtfs_static(paths.gtfs_dir)
    xs = load_intersections(paths.intersections)
    weather = load_weather(paths.weather)
    series = load_pings(paths.pings)
    rm = build_route_model(net, xs, (TRUTH["route_id"], TRUTH["direction_id"]))
    return {"spec": spec, "paths": paths, "net": net, "xs": xs,
            "weather": weather, "series": series, "rm": rm}


@pytest.fixture(scope="session")
def corpus_observations(corpus):
    observations = []
    skipped = []
    for trav in corpus["series"].segments:
        obs, sk = observations_from_traversal(trav, corpus["rm"], corpus["weather"],
                                              tz_offset=TZ)
        observations.extend(obs)
        skipped.extend(sk)
    return observations, skipped


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("small_corpus")
    truth_path = write_truth(root / "truth.json", SMALL_TRUTH)
    spec = synth.load_truth(truth_path)
    paths = synth.generate_corpus(spec, root)
    return {"spec": spec, "paths": paths, "truth_path": truth_path}
