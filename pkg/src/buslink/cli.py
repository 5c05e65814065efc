"""Command-line surface: infer, fit, validate, predict, simulate, evaluate,
synth.

Exit codes: 0 success, 2 input error, 3 numerical failure. Errors print
as single machine-parseable lines prefixed ``error:``. Every command is
deterministic given its inputs, configuration, and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline, synth
from .errors import (ConfigError, FitError, GeometryError, IngestError,
                     MetricError, NumericalError, SimError)

INPUT_ERRORS = (IngestError, GeometryError, ConfigError, MetricError, SimError)
NUMERIC_ERRORS = (FitError, NumericalError)


def _fmt(v, digits: int = 3) -> str:
    if v is None:
        return "-"
    return f"{v:.{digits}f}"


def _shared_flags(sub):
    sub.add_argument("--config", help="key = value configuration file")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--json", action="store_true", help="JSON output instead of tables")


def _config_from(args, **extra) -> pipeline.RunConfig:
    overrides = {k: v for k, v in extra.items() if v is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    return pipeline.load_config(args.config, overrides)


def cmd_infer(args) -> int:
    cfg = _config_from(args, gtfs_dir=args.gtfs, pings=args.pings,
                       weather=args.weather, intersections=args.intersections)
    report = pipeline.run_infer(cfg)
    if args.json:
        print(json.dumps({
            "observations": report.observations_path,
            "traversals": report.n_traversals,
            "traversals_used": report.n_used,
            "observations_count": report.n_observations,
            "observations_with_interpolated_events": report.n_interpolated,
            "per_link": {f"{rk[0]}/{rk[1]}/{li}": c
                         for (rk, li), c in sorted(report.per_link_counts.items())},
            "skipped": len(report.skipped),
        }, indent=2, sort_keys=True))
    else:
        print(f"wrote {report.observations_path}")
        print(f"traversals {report.n_traversals} used {report.n_used} "
              f"observations {report.n_observations} "
              f"interpolated {report.n_interpolated} skipped {len(report.skipped)}")
        for (rk, li), c in sorted(report.per_link_counts.items()):
            print(f"{rk[0]}/{rk[1]} link {li}: {c}")
    return 0


def cmd_fit(args) -> int:
    cfg = _config_from(args, gtfs_dir=args.gtfs, intersections=args.intersections,
                       observations=args.observations, model_store=args.store)
    report = pipeline.run_fit(cfg)
    if args.json:
        print(json.dumps({
            "store": report.store_path,
            "fitted": [f"{rk[0]}/{rk[1]}/{li}" for (rk, li) in report.fitted_links],
            "failed": [[str(key), reason] for key, reason in report.failed_links],
        }, indent=2, sort_keys=True))
    else:
        print(f"wrote {report.store_path}")
        for (rk, li) in report.fitted_links:
            print(f"fitted {rk[0]}/{rk[1]} link {li}")
        for key, reason in report.failed_links:
            print(f"failed {key}: {reason}")
    if not report.fitted_links:
        print("error: no link could be fitted", file=sys.stderr)
        return 3
    return 0


def cmd_validate(args) -> int:
    cfg = _config_from(args, observations=args.observations)
    rows = pipeline.run_validate(cfg)
    if args.json:
        print(json.dumps([{
            "component": r.component, "test": r.test_name, "statistic": r.statistic,
            "p_value": r.p_value, "n": r.n, "note": r.note} for r in rows],
            indent=2, sort_keys=True))
    else:
        print("component,test,statistic,p_value,n,note")
        for r in rows:
            stat = "-" if r.statistic is None else repr(r.statistic)
            p = "-" if r.p_value is None else repr(r.p_value)
            print(f"{r.component},{r.test_name},{stat},{p},{r.n},{r.note}")
    return 0


def cmd_predict(args) -> int:
    cfg = _config_from(args, model_store=args.store)
    x = [args.rain, args.peak, args.weekday, args.traffic]
    point, bounds = pipeline.run_predict(cfg, args.route, args.direction,
                                         args.link, x, level=args.level)
    if args.json:
        print(json.dumps({"route_id": args.route, "direction_id": args.direction,
                          "link_index": args.link, "covariates": x, "point_s": point,
                          "lower_s": bounds.lower, "upper_s": bounds.upper,
                          "level": bounds.level}, indent=2, sort_keys=True))
    else:
        print("point_s,lower_s,upper_s,level")
        print(f"{point!r},{bounds.lower!r},{bounds.upper!r},{bounds.level!r}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_from(args, gtfs_dir=args.gtfs, pings=args.pings,
                       weather=args.weather, intersections=args.intersections,
                       model_store=args.store)
    batches = pipeline.run_simulate(cfg, args.trip, at=args.at, replay=args.replay)
    if args.json:
        payload = [{
            "timestamp": b.timestamp, "trip_id": b.trip_id,
            "origin": {"link_index": b.summary.origin_link,
                       "arc_pos_m": b.summary.origin_arc,
                       "timestamp": b.summary.origin_time},
            "runs": b.summary.runs,
            "stops": [{"stop_id": s.stop_id, "mean_s": s.mean_remaining,
                       "p2_5_s": s.p2_5, "p97_5_s": s.p97_5}
                      for s in b.summary.stops],
        } for b in batches]
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for b in batches:
            print(f"# t={int(b.timestamp)} trip={b.trip_id} link={b.summary.origin_link} "
                  f"arc={b.summary.origin_arc:.1f}")
            print("stop_id,mean_s,p2_5_s,p97_5_s")
            for s in b.summary.stops:
                print(f"{s.stop_id},{s.mean_remaining!r},{s.p2_5!r},{s.p97_5!r}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config_from(args, observations=args.observations, cut_date=args.cut)
    rows = pipeline.run_evaluate(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "evaluation.csv"
    header = ("route_id,direction_id,link_index,n_train,n_test,"
              "mae_ln,rmse_ln,bw_ln,mae_hm,rmse_hm,bw_hm,mae_lr,rmse_lr,bw_lr")
    lines = [header]
    for r in rows:
        cells = [r.route_key[0], str(r.route_key[1]), str(r.link_index),
                 str(r.n_train), str(r.n_test)]
        for v in (r.mae_ln, r.rmse_ln, r.bw_ln, r.mae_hm, r.rmse_hm, r.bw_hm,
                  r.mae_lr, r.rmse_lr, r.bw_lr):
            cells.append("" if v is None else repr(v))
        lines.append(",".join(cells))
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.json:
        print(json.dumps([{
            "route_id": r.route_key[0], "direction_id": r.route_key[1],
            "link_index": r.link_index, "n_train": r.n_train, "n_test": r.n_test,
            "mae_ln": r.mae_ln, "rmse_ln": r.rmse_ln, "bw_ln": r.bw_ln,
            "mae_hm": r.mae_hm, "rmse_hm": r.rmse_hm, "bw_hm": r.bw_hm,
            "mae_lr": r.mae_lr, "rmse_lr": r.rmse_lr, "bw_lr": r.bw_lr,
            "note": r.note} for r in rows], indent=2, sort_keys=True))
    else:
        print(f"wrote {csv_path}")
        hdr = (f"{'link':<14} {'MAE ln':>8} {'RMSE ln':>8} {'BW ln':>8} "
               f"{'MAE hm':>8} {'RMSE hm':>8} {'BW hm':>8} "
               f"{'MAE lr':>8} {'RMSE lr':>8} {'BW lr':>8}")
        print(hdr)
        for r in rows:
            label = f"{r.route_key[0]}/{r.route_key[1]}#{r.link_index}"
            print(f"{label:<14} {_fmt(r.mae_ln):>8} {_fmt(r.rmse_ln):>8} {_fmt(r.bw_ln):>8} "
                  f"{_fmt(r.mae_hm):>8} {_fmt(r.rmse_hm):>8} {_fmt(r.bw_hm):>8} "
                  f"{_fmt(r.mae_lr):>8} {_fmt(r.rmse_lr):>8} {_fmt(r.bw_lr):>8}")
    return 0


def cmd_synth(args) -> int:
    spec = synth.load_truth(args.truth)
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)
    out_dir = args.out or "."
    paths = synth.generate_corpus(spec, out_dir)
    if args.json:
        print(json.dumps({"root": str(paths.root), "gtfs": str(paths.gtfs_dir),
                          "pings": str(paths.pings), "weather": str(paths.weather),
                          "intersections": str(paths.intersections),
                          "truth_events": str(paths.truth_events),
                          "truth_links": str(paths.truth_links),
                          "traversals": paths.n_traversals,
                          "ping_count": paths.n_pings}, indent=2, sort_keys=True))
    else:
        print(f"wrote corpus under {paths.root}: {paths.n_traversals} traversals, "
              f"{paths.n_pings} pings")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buslink",
        description="Bus link travel-time inference, fitting, and prediction from GTFS data")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("infer", help="infer link observations from pings")
    _shared_flags(p)
    p.add_argument("--gtfs", help="GTFS static directory")
    p.add_argument("--pings", help="ping record file")
    p.add_argument("--weather", help="weather file")
    p.add_argument("--intersections", help="intersection file")
    p.set_defaults(func=cmd_infer)

    p = subs.add_parser("fit", help="fit per-link models from observations")
    _shared_flags(p)
    p.add_argument("--gtfs", help="GTFS static directory")
    p.add_argument("--intersections", help="intersection file")
    p.add_argument("--observations", help="observation file name")
    p.add_argument("--store", help="model store file name")
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("validate", help="statistical tests per link")
    _shared_flags(p)
    p.add_argument("--observations", help="observation file name")
    p.set_defaults(func=cmd_validate)

    p = subs.add_parser("predict", help="point + interval for one link")
    _shared_flags(p)
    p.add_argument("--store", help="model store file name")
    p.add_argument("--route", required=True)
    p.add_argument("--direction", type=int, default=0)
    p.add_argument("--link", type=int, required=True)
    p.add_argument("--rain", type=int, default=0, choices=(0, 1))
    p.add_argument("--peak", type=int, default=0, choices=(0, 1))
    p.add_argument("--weekday", type=int, default=0, choices=(0, 1))
    p.add_argument("--traffic", type=int, default=0, choices=(0, 1))
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_predict)

    p = subs.add_parser("simulate", help="remaining-time simulation for a trip")
    _shared_flags(p)
    p.add_argument("--gtfs", help="GTFS static directory")
    p.add_argument("--pings", help="ping record file")
    p.add_argument("--weather", help="weather file")
    p.add_argument("--intersections", help="intersection file")
    p.add_argument("--store", help="model store file name")
    p.add_argument("--trip", required=True)
    p.add_argument("--at", type=float, default=None, help="POSIX timestamp")
    p.add_argument("--replay", action="store_true",
                   help="emit a batch at start and at each traffic-indicator flip")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("evaluate", help="train/test comparison against baselines")
    _shared_flags(p)
    p.add_argument("--observations", help="observation file name")
    p.add_argument("--cut", help="test period start date YYYY-MM-DD")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("synth", help="generate a synthetic corpus from a truth spec")
    _shared_flags(p)
    p.add_argument("--truth", required=True, help="truth spec JSON")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LookupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
