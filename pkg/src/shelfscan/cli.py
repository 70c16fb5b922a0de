"""Command-line pipelines: detect, calibrate, evaluate, analyze, synth.

Every command reads plain files, writes fixed-name artifacts into --out,
and embeds its fully resolved configuration in the JSON reports it
produces, so a report is enough to rerun the experiment. Identical inputs
and seeds give byte-identical outputs except for the generated_at
metadata field. Flags override config-file values; numeric defaults live
in _DEFAULTS below.
"""

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import analytics, calibration, labeling, synth
from .detector import (
    StopParams,
    default_jobs,
    detect_many,
    detect_stops,
    read_stop_events,
    write_stop_events,
)
from .errors import ShelfScanError, UnknownTrajectory
from .kinematics import (
    DEFAULT_WINDOW,
    build_track,
    fit_window,
    read_trajectories,
    write_trajectories,
)
from .layout import load_layout, save_layout
from .oracle import brute_force_stops

_DEFAULTS = {
    "window": DEFAULT_WINDOW,
    "seed": 0,
    "repeats": 10,
    "t_b_range": [0.5, 4.0, 0.1],
    "delta_b_range": [0.3, 3.0, 0.05],
    "v_b_range": [0.1, 1.5, 0.01],
}


def _timestamp():
    return datetime.now(timezone.utc).isoformat()


def _load_config(args):
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return json.load(fh)
    return {}


def _opt(args, cfg, key, default=None):
    """Flag value if given, else config-file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in cfg:
        return cfg[key]
    return _DEFAULTS.get(key, default)


def _require_paths(*paths):
    for p in paths:
        if p is None:
            continue
        if not os.path.exists(p):
            print(f"error: path does not exist: {p}", file=sys.stderr)
            raise SystemExit(2)


def _grid_from(args, cfg) -> calibration.ParamGrid:
    def rng(key):
        v = _opt(args, cfg, key)
        return (float(v[0]), float(v[1]), float(v[2]))
    return calibration.ParamGrid(t_b=rng("t_b_range"), delta_b=rng("delta_b_range"), v_b=rng("v_b_range"))


def _params_from(args, cfg) -> StopParams:
    values = {key: _opt(args, cfg, key) for key in ("t_b", "delta_b", "v_b")}
    missing = [k for k, v in values.items() if v is None]
    if missing:
        print(f"error: missing detector parameters: {', '.join(missing)} "
              f"(pass --t-b/--delta-b/--v-b or a config file)", file=sys.stderr)
        raise SystemExit(2)
    return StopParams(t_b=float(values["t_b"]), delta_b=float(values["delta_b"]),
                      v_b=float(values["v_b"]))


def _write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_tracks(path, window):
    return [build_track(t, window) for t in read_trajectories(path)]


def _load_labeled_dataset(trajectories_path, labels_path, layout, window):
    """(track, visit matrix) pairs for every trajectory in the file.

    The labels manifest is expected next to the labels file with the
    .manifest.json suffix replacing .jsonl.
    """
    manifest_path = _manifest_path(labels_path)
    _require_paths(manifest_path)
    n_reviewers, _ = labeling.read_label_manifest(manifest_path)
    labels = labeling.read_labels(labels_path)
    by_traj = {}
    for lab in labels:
        by_traj.setdefault(lab.trajectory_id, []).append(lab)
    trajectories = read_trajectories(trajectories_path)
    known = {t.trajectory_id for t in trajectories}
    stray = set(by_traj) - known
    if stray:
        raise UnknownTrajectory(f"labels reference unknown trajectories: {sorted(stray)[:5]}")
    dataset = []
    for traj in trajectories:
        visits = labeling.majority_vote(by_traj.get(traj.trajectory_id, []), traj, layout, n_reviewers)
        dataset.append((build_track(traj, window), visits))
    return dataset


def _manifest_path(labels_path):
    base = str(labels_path)
    if base.endswith(".jsonl"):
        return base[:-len(".jsonl")] + ".manifest.json"
    return base + ".manifest.json"


def cmd_detect(args):
    cfg = _load_config(args)
    _require_paths(args.layout, args.trajectories)
    os.makedirs(args.out, exist_ok=True)
    layout = load_layout(args.layout)
    window = int(_opt(args, cfg, "window"))
    params = _params_from(args, cfg)
    jobs = int(_opt(args, cfg, "jobs") or default_jobs())
    tracks = _load_tracks(args.trajectories, window)
    per_track_events = detect_many(tracks, layout, params, jobs=jobs)

    all_events = [ev for events in per_track_events for ev in events]
    write_stop_events(all_events, os.path.join(args.out, "stops.jsonl"))
    # sparse long form: rows only where S = 1
    with open(os.path.join(args.out, "stop_matrix.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory_id", "shelf_id", "k", "t", "S"])
        for track, events in zip(tracks, per_track_events):
            times = track.times
            for ev in events:
                k_s = int(np.searchsorted(times, ev.t_s - 1e-9))
                k_f = int(np.searchsorted(times, ev.t_f - 1e-9))
                for k in range(k_s, k_f + 1):
                    writer.writerow([track.trajectory_id, ev.shelf_id, k, repr(float(times[k])), 1])
    print(f"detect: {len(all_events)} stop events over {len(tracks)} trajectories -> {args.out}")
    return 0


def cmd_calibrate(args):
    cfg = _load_config(args)
    _require_paths(args.layout, args.trajectories, args.labels)
    os.makedirs(args.out, exist_ok=True)
    layout = load_layout(args.layout)
    window = int(_opt(args, cfg, "window"))
    grid = _grid_from(args, cfg)
    dataset = _load_labeled_dataset(args.trajectories, args.labels, layout, window)
    result = calibration.calibrate(dataset, layout, grid, refine=bool(args.refine))
    report = {
        "best_params": {
            "t_b": result.best_params.t_b,
            "delta_b": result.best_params.delta_b,
            "v_b": result.best_params.v_b,
        },
        "best_f1": result.best_f1,
        "precision": result.metrics.precision,
        "recall": result.metrics.recall,
        "counts": {
            "tp": result.metrics.counts.tp,
            "fp": result.metrics.counts.fp,
            "fn": result.metrics.counts.fn,
        },
        "n_trajectories": len(dataset),
        "config": _resolved_config(args, cfg, ["window", "t_b_range", "delta_b_range", "v_b_range"]),
        "generated_at": _timestamp(),
    }
    _write_json(report, os.path.join(args.out, "calibration.json"))
    if args.dump_grid:
        with open(os.path.join(args.out, "grid.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_b", "delta_b", "v_b", "tp", "fp", "fn", "precision", "recall", "f1"])
            for row in result.score_rows():
                writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
    print(f"calibrate: best F1 {result.best_f1:.4f} at "
          f"(t_b={result.best_params.t_b:.3g}, delta_b={result.best_params.delta_b:.3g}, "
          f"v_b={result.best_params.v_b:.3g})")
    return 0


def _resolved_config(args, cfg, keys):
    out = {}
    for key in keys:
        out[key] = _opt(args, cfg, key)
    return out


def cmd_eval_same(args):
    cfg = _load_config(args)
    _require_paths(args.layout, args.trajectories, args.labels)
    os.makedirs(args.out, exist_ok=True)
    layout = load_layout(args.layout)
    window = int(_opt(args, cfg, "window"))
    grid = _grid_from(args, cfg)
    seed = int(_opt(args, cfg, "seed"))
    repeats = int(_opt(args, cfg, "repeats"))
    fractions = args.p if args.p else cfg.get("p", [0.5])
    if not isinstance(fractions, list):
        fractions = [fractions]
    dataset = _load_labeled_dataset(args.trajectories, args.labels, layout, window)

    reports = [
        calibration.same_store_eval(dataset, layout, grid, p=float(p), repeats=repeats, seed=seed)
        for p in fractions
    ]
    doc = {
        "reports": [r.to_dict() for r in reports],
        "config": _resolved_config(args, cfg, ["window", "seed", "repeats",
                                               "t_b_range", "delta_b_range", "v_b_range"]),
        "generated_at": _timestamp(),
    }
    _write_json(doc, os.path.join(args.out, "eval.json"))
    with open(os.path.join(args.out, "eval_repeats.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "repeat", "f1", "mean_f1", "stderr_f1"])
        for rep in reports:
            for i, score in enumerate(rep.scores):
                writer.writerow([repr(rep.p), i, repr(score), repr(rep.mean), repr(rep.stderr)])
    for rep in reports:
        print(f"eval-same: p={rep.p:g} mean F1 {rep.mean:.4f} +/- {rep.stderr:.4f} "
              f"over {rep.repeats} repeats")
    return 0


def cmd_eval_cross(args):
    cfg = _load_config(args)
    _require_paths(args.layout_a, args.trajectories_a, args.labels_a,
                   args.layout_b, args.trajectories_b, args.labels_b)
    os.makedirs(args.out, exist_ok=True)
    window = int(_opt(args, cfg, "window"))
    grid = _grid_from(args, cfg)
    seed = int(_opt(args, cfg, "seed"))
    layout_a = load_layout(args.layout_a)
    layout_b = load_layout(args.layout_b)
    dataset_a = _load_labeled_dataset(args.trajectories_a, args.labels_a, layout_a, window)
    dataset_b = _load_labeled_dataset(args.trajectories_b, args.labels_b, layout_b, window)
    report = calibration.cross_store_eval(
        dataset_a, layout_a, dataset_b, layout_b, grid,
        p=float(args.p if args.p is not None else cfg.get("p", 1.0)),
        seed=seed,
        repeats=int(_opt(args, cfg, "cross_repeats", 1)),
    )
    doc = {
        "report": report.to_dict(),
        "config": _resolved_config(args, cfg, ["window", "seed",
                                               "t_b_range", "delta_b_range", "v_b_range"]),
        "generated_at": _timestamp(),
    }
    _write_json(doc, os.path.join(args.out, "eval.json"))
    with open(os.path.join(args.out, "eval_repeats.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "repeat", "f1", "mean_f1", "stderr_f1"])
        for i, score in enumerate(report.scores):
            writer.writerow([repr(report.p), i, repr(score), repr(report.mean), repr(report.stderr)])
    print(f"eval-cross: {layout_a.store_id} -> {layout_b.store_id} mean F1 {report.mean:.4f}")
    return 0


def cmd_analyze(args):
    cfg = _load_config(args)
    _require_paths(args.layout, args.trajectories, args.stops, args.purchases)
    os.makedirs(args.out, exist_ok=True)
    layout = load_layout(args.layout)
    trajectories = read_trajectories(args.trajectories)
    events = read_stop_events(args.stops)
    by_traj = {t.trajectory_id: [] for t in trajectories}
    for ev in events:
        if ev.trajectory_id not in by_traj:
            raise UnknownTrajectory(f"stop event references unknown trajectory {ev.trajectory_id!r}")
        by_traj[ev.trajectory_id].append(ev)
    vectors = [
        analytics.visit_vector(evs, layout.n_shelves, trajectory_id=tid)
        for tid, evs in by_traj.items()
    ]
    stats = analytics.shelf_stats(vectors)
    with open(os.path.join(args.out, "shelf_stats.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shelf_id", "avg_visits_per_trip"])
        for j, avg in enumerate(stats.per_shelf, start=1):
            writer.writerow([j, repr(avg)])
    summary = {
        "n_trajectories": stats.n_trips,
        "n_shelves": layout.n_shelves,
        "overall_avg_visits_per_trip": stats.overall_avg_visits,
        "config": {
            "layout": str(args.layout),
            "trajectories": str(args.trajectories),
            "stops": str(args.stops),
            "purchases": None if args.purchases is None else str(args.purchases),
            "incidence": bool(args.incidence),
        },
        "generated_at": _timestamp(),
    }
    if args.purchases:
        purchases = analytics.read_purchases(args.purchases)
        conv = analytics.conversion_rates(stats, purchases, incidence=bool(args.incidence))
        with open(os.path.join(args.out, "conversion.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["shelf_id", "avg_visits_per_trip", "avg_purchases_per_trip",
                             "conversion_pct"])
            for j in range(layout.n_shelves):
                rate = conv.rates[j]
                writer.writerow([
                    j + 1,
                    repr(conv.visit_avg[j]),
                    repr(conv.purchase_avg[j]),
                    "" if rate is None else repr(rate * 100.0),
                ])
        summary["n_purchase_records"] = len(purchases)
    _write_json(summary, os.path.join(args.out, "summary.json"))
    print(f"analyze: {stats.n_trips} trips, "
          f"{stats.overall_avg_visits:.3f} average visits per trip")
    return 0


def cmd_synth(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    if args.spec:
        _require_paths(args.spec)
        spec = synth.read_scenario(args.spec)
    else:
        spec = synth.population_scenario(
            seed=int(_opt(args, cfg, "seed")),
            n_trajectories=int(args.population or cfg.get("population", 50)),
            n_shelves=int(args.shelves or cfg.get("shelves", 19)),
            noise=float(args.noise if args.noise is not None else cfg.get("noise", 0.0)),
        )
    trajectories, truth, layout = synth.generate(spec)
    save_layout(layout, os.path.join(args.out, "layout.json"))
    write_trajectories(trajectories, os.path.join(args.out, "trajectories.jsonl"))
    synth.write_ground_truth(truth, os.path.join(args.out, "ground_truth.json"))
    if args.plant:
        t_b, delta_b, v_b = (float(x) for x in args.plant.split(","))
        window = int(_opt(args, cfg, "window"))
        params = StopParams(t_b=t_b, delta_b=delta_b, v_b=v_b)
        labels = []
        for traj in trajectories:
            events, _ = detect_stops(build_track(traj, window), layout, params)
            labels.extend(labeling.labels_from_stop_events(events, reviewer_id="auto"))
        labels_path = os.path.join(args.out, "labels.jsonl")
        labeling.write_labels(labels, labels_path)
        labeling.write_label_manifest(1, ["auto"], _manifest_path(labels_path))
    print(f"synth: wrote {len(trajectories)} trajectories, "
          f"{layout.n_shelves}-shelf layout -> {args.out}")
    return 0


def cmd_oracle_check(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    seed = int(_opt(args, cfg, "seed"))
    scenarios = int(args.scenarios or cfg.get("scenarios", 100))
    max_len = int(args.max_len or cfg.get("max_len", 2000))
    window = int(_opt(args, cfg, "window"))
    checked = 0
    mismatch = None
    for i in range(scenarios):
        spec = synth.random_scenario(seed + i, max_len=max_len)
        trajectories, _, layout = synth.generate(spec)
        rng = np.random.default_rng(seed * 1_000_003 + i)
        params = StopParams(
            t_b=float(rng.uniform(0.3, 4.0)),
            delta_b=float(rng.uniform(0.3, 3.0)),
            v_b=float(rng.uniform(0.1, 1.5)),
        )
        for traj in trajectories:
            track = build_track(traj, fit_window(window, len(traj)))
            _, fast = detect_stops(track, layout, params)
            slow = brute_force_stops(track, layout, params)
            checked += 1
            if not np.array_equal(fast.values, slow.values):
                diff = np.argwhere(fast.values != slow.values)
                shelf0, k = (int(x) for x in diff[0])
                mismatch = {
                    "scenario_seed": seed + i,
                    "trajectory_id": traj.trajectory_id,
                    "shelf_id": shelf0 + 1,
                    "k": k,
                    "detector": bool(fast.values[shelf0, k]),
                    "oracle": bool(slow.values[shelf0, k]),
                    "params": {"t_b": params.t_b, "delta_b": params.delta_b, "v_b": params.v_b},
                }
                break
        if mismatch:
            break
    report = {
        "passed": mismatch is None,
        "scenarios": scenarios,
        "trajectories_checked": checked,
        "first_counterexample": mismatch,
        "config": {"seed": seed, "max_len": max_len, "window": window},
        "generated_at": _timestamp(),
    }
    _write_json(report, os.path.join(args.out, "oracle_check.json"))
    print(f"oracle-check: {'PASS' if mismatch is None else 'FAIL'} "
          f"({checked} trajectories over {scenarios} scenarios)")
    return 0 if mismatch is None else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shelfscan",
        description="Shelf-visit detection, calibration and analytics for shopper trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--window", type=int, help="odd smoothing window in samples (default 5)")

    p = sub.add_parser("detect", help="run the stop detector, write stops.jsonl + stop_matrix.csv")
    common(p)
    p.add_argument("--layout", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--t-b", dest="t_b", type=float, help="minimum browsing time, s")
    p.add_argument("--delta-b", dest="delta_b", type=float, help="maximum shelf distance, m")
    p.add_argument("--v-b", dest="v_b", type=float, help="maximum browsing speed, m/s")
    p.add_argument("--jobs", type=int, help="worker processes (default: SHELFSCAN_JOBS or cores)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("calibrate", help="grid-search thresholds against labels, write calibration.json")
    common(p)
    p.add_argument("--layout", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--labels", required=True, help="labels JSONL; manifest sits next to it")
    _grid_flags(p)
    p.add_argument("--refine", action="store_true", help="coarse-to-fine search instead of exhaustive")
    p.add_argument("--dump-grid", action="store_true", help="also write per-point scores to grid.csv")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval-same", help="held-out evaluation within one store, write eval.json + CSV")
    common(p)
    p.add_argument("--layout", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--p", type=float, nargs="+", help="calibration fraction(s) to sweep")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    _grid_flags(p)
    p.set_defaults(func=cmd_eval_same)

    p = sub.add_parser("eval-cross", help="calibrate on store A, evaluate on all of store B")
    common(p)
    p.add_argument("--layout-a", required=True)
    p.add_argument("--trajectories-a", required=True)
    p.add_argument("--labels-a", required=True)
    p.add_argument("--layout-b", required=True)
    p.add_argument("--trajectories-b", required=True)
    p.add_argument("--labels-b", required=True)
    p.add_argument("--p", type=float, help="fraction of store A used to calibrate (default 1.0)")
    p.add_argument("--seed", type=int)
    _grid_flags(p)
    p.set_defaults(func=cmd_eval_cross)

    p = sub.add_parser("analyze", help="visit statistics and purchase conversion from stop events")
    common(p)
    p.add_argument("--layout", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--stops", required=True, help="stops.jsonl from a detect run")
    p.add_argument("--purchases", help="CSV with trajectory_id, shelf_id, quantity")
    p.add_argument("--incidence", action="store_true",
                   help="count purchase incidence per trip instead of quantities")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic store, trajectories and ground truth")
    common(p)
    p.add_argument("--spec", help="scenario JSON; otherwise a random population is built")
    p.add_argument("--population", type=int, help="number of synthetic trips (no --spec)")
    p.add_argument("--shelves", type=int, help="shelf count (no --spec)")
    p.add_argument("--noise", type=float, help="position/heading jitter std (no --spec)")
    p.add_argument("--seed", type=int)
    p.add_argument("--plant", metavar="T,D,V",
                   help="also write labels produced by the detector at these thresholds")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("oracle-check", help="compare detector against the brute-force oracle")
    common(p)
    p.add_argument("--scenarios", type=int, help="number of random scenarios (default 100)")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-len", dest="max_len", type=int, help="max trajectory length in samples")
    p.set_defaults(func=cmd_oracle_check)

    return parser


def _grid_flags(p):
    p.add_argument("--t-b-range", dest="t_b_range", type=float, nargs=3,
                   metavar=("MIN", "MAX", "STEP"))
    p.add_argument("--delta-b-range", dest="delta_b_range", type=float, nargs=3,
                   metavar=("MIN", "MAX", "STEP"))
    p.add_argument("--v-b-range", dest="v_b_range", type=float, nargs=3,
                   metavar=("MIN", "MAX", "STEP"))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ShelfScanError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors and path checks
        return exc.code if exc.code is not None else 0


if __name__ == "__main__":
    raise SystemExit(main())
