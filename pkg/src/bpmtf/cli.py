"""Command line front end.

Thin wrappers over the library: every subcommand is config-driven and
deterministic, writing its outputs into --out. Exit codes: 0 success, 1
any check failure or runtime error, 2 configuration problems (message
carries the offending field path), 3 association non-convergence (message
carries the scan index). BPMTF_LOG selects the logging level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import config as cfgmod
from . import io as iomod
from .errors import BpmtfError, ConfigurationError, ConvergenceError
from .experiments import grid_accuracy_experiment
from .filter import initialize, step, step_member
from .metrics import summarize
from .sim import generate_scenario
from .verify import run_verification

log = logging.getLogger("bpmtf.cli")


def _setup_logging() -> None:
    name = os.environ.get("BPMTF_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _out_dir(args) -> Path:
    out = Path(args.out if args.out else "bpmtf-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg.setdefault("sim", {})["seed"] = args.seed
    return cfg


def _resolve_mode(cfg, mode_arg: str | None) -> str:
    if mode_arg == "member":
        return "bp-member"
    if mode_arg in ("lbp", "exact"):
        return "bpmtf"
    return cfgmod.filter_mode(cfg)


def _run_filter(cfg, mode: str | None, recorded_scans=None):
    model = cfgmod.build_model(cfg)
    params = cfgmod.build_params(cfg)
    variant = _resolve_mode(cfg, mode)
    if mode in ("lbp", "exact"):
        params.association = mode
    if recorded_scans is not None:
        truth, scans = None, recorded_scans
    else:
        sim = cfgmod.sim_settings(cfg)
        truth, scans = generate_scenario(
            model, sim["n_scans"], sim["seed"], sim["initial_targets"]
        )
    stepper = step_member if variant == "bp-member" else step
    state = initialize(model, params, cold_start=cfgmod.cold_start(cfg))
    records = []
    snapshots = []
    for z in scans:
        state, record = stepper(state, z)
        records.append(record)
        snapshots.append(list(state.tracks))
    return model, truth, scans, records, snapshots, variant


def cmd_simulate(args) -> int:
    cfg = _load(args)
    model = cfgmod.build_model(cfg)
    sim = cfgmod.sim_settings(cfg)
    truth, scans = generate_scenario(
        model, sim["n_scans"], sim["seed"], sim["initial_targets"]
    )
    out = _out_dir(args)
    iomod.write_json(out / "config.json", cfg)
    iomod.write_jsonl(out / "truth.jsonl", iomod.truth_dicts(truth))
    iomod.write_jsonl(out / "measurements.jsonl", iomod.measurement_dicts(scans))
    iomod.write_json(out / "summary.json", {
        "scans": truth.n_scans,
        "targets": len(truth.targets),
        "measurements": int(sum(z.shape[0] for z in scans)),
        "seed": sim["seed"],
    })
    print(f"simulated {truth.n_scans} scans, {len(truth.targets)} targets -> {out}")
    return 0


def cmd_track(args) -> int:
    cfg = _load(args)
    recorded = iomod.read_measurements(args.scans) if getattr(args, "scans", None) else None
    started = time.perf_counter()
    model, truth, scans, records, snapshots, variant = _run_filter(cfg, args.mode, recorded)
    elapsed = time.perf_counter() - started
    out = _out_dir(args)
    iomod.write_json(out / "config.json", cfg)
    iomod.write_jsonl(out / "records.jsonl", (iomod.scan_record_dict(r) for r in records))
    iomod.write_jsonl(out / "tracks.jsonl", (
        {
            "scan": k,
            "tracks": [
                {"trackId": t.track_id, "existence": float(t.existence)}
                for t in snap
            ],
        }
        for k, snap in enumerate(snapshots)
    ))
    worst_closure = max((abs(r.balance["closure"]) for r in records), default=0.0)
    iomod.write_json(out / "summary.json", {
        "scans": len(records),
        "mode": variant,
        "association": args.mode if args.mode in ("lbp", "exact") else "lbp",
        "finalTracks": records[-1].n_tracks if records else 0,
        "worstBalanceClosure": worst_closure,
        "maxIterations": max((r.iterations for r in records), default=0),
    })
    log.info("tracked %d scans in %.2fs", len(records), elapsed)
    print(f"tracked {len(records)} scans -> {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    model, truth, scans, records, snapshots, variant = _run_filter(cfg, args.mode)
    ev = cfgmod.eval_settings(cfg)
    summary = summarize(
        records, truth, model.position_dim,
        cutoff=ev["ospa_cutoff"], order=ev["ospa_order"],
        radius=ev["calibration_radius"],
    )
    summary["mode"] = variant
    out = _out_dir(args)
    iomod.write_json(out / "config.json", cfg)
    estimates = [r.estimates for r in records]
    iomod.write_csv(out / "ospa.csv",
                    ["scan", "nTrue", "nEstimated", "cardinalityError", "ospa",
                     "trackCount", "gridMass"],
                    [
                        (k, truth.cardinality(k), len(estimates[k]),
                         summary["cardinality_error"][k], summary["ospa"][k],
                         records[k].n_tracks, records[k].grid_mass)
                        for k in range(truth.n_scans)
                    ])
    iomod.write_csv(out / "calibration.csv",
                    ["binLow", "binHigh", "count", "meanExistence", "matchRate"],
                    [
                        (row["bin_low"], row["bin_high"], row["count"],
                         row["mean_existence"] if row["count"] else 0.0,
                         row["match_rate"] if row["count"] else 0.0)
                        for row in summary["calibration"]
                    ])
    iomod.write_json(out / "summary.json", summary)
    print(
        f"evaluated {truth.n_scans} scans: mean ospa {summary['mean_ospa']:.3f}, "
        f"mean cardinality error {summary['mean_cardinality_error']:.3f} -> {out}"
    )
    return 0


def cmd_verify(args) -> int:
    level = args.mode or "fast"
    results = run_verification(level)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.detail}")
    if args.out:
        out = _out_dir(args)
        iomod.write_json(out / "verify.json", [
            {"name": r.name, "ok": r.ok, "detail": r.detail} for r in results
        ])
    return 0 if all(r.ok for r in results) else 1


def cmd_experiment_grid(args) -> int:
    cells = grid_accuracy_experiment(
        n_trials=args.trials,
        seed=args.seed if args.seed is not None else 0,
        parallel=args.parallel,
    )
    out = _out_dir(args)
    iomod.write_csv(out / "accuracy.csv",
                    ["spacing", "detectionProb", "clutterRate", "trial",
                     "maxError", "meanError", "iterations"],
                    [
                        (c.spacing, c.detection_prob, c.clutter_rate, t.trial,
                         t.max_error, t.mean_error, t.iterations)
                        for c in cells for t in c.trials
                    ])
    iomod.write_csv(out / "cells.csv",
                    ["spacing", "detectionProb", "nTrials", "nSkipped",
                     "meanMaxError", "maxMaxError", "meanIterations"],
                    [
                        (c.spacing, c.detection_prob, c.n_trials, c.n_skipped,
                         c.mean_max_error, c.max_max_error, c.mean_iterations)
                        for c in cells
                    ])
    by_pd: dict[float, float] = {}
    for c in cells:
        by_pd[c.detection_prob] = max(by_pd.get(c.detection_prob, 0.0), c.mean_max_error)
    iomod.write_json(out / "summary.json", {
        "worstMeanMaxErrorByDetectionProb": {f"{k:g}": v for k, v in sorted(by_pd.items())},
        "cells": len(cells),
        "trialsPerCell": args.trials,
    })
    for pd_value, err in sorted(by_pd.items()):
        print(f"detectionProb {pd_value:g}: worst mean max error {err:.4f}")
    print(f"wrote {len(cells)} cells -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bpmtf",
        description="Hybrid intensity-plus-tracks multi-target filter toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate truth and measurements from a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None, help="override sim.seed")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_simulate)

    for name, func, help_text in (
        ("track", cmd_track, "run the filter on simulated or recorded scans"),
        ("eval", cmd_eval, "simulate, run the filter, score against truth"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None, help="override sim.seed")
        sp.add_argument("--mode", choices=["lbp", "exact", "member"], default=None)
        sp.add_argument("--out", default=None)
        if name == "track":
            sp.add_argument("--scans", default=None,
                            help="recorded measurements JSONL instead of simulating")
        sp.set_defaults(func=func)

    sp = sub.add_parser("verify", help="run the built-in cross-check battery")
    sp.add_argument("--mode", choices=["fast", "full"], default="fast")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("experiment-grid", help="association accuracy sweep")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--trials", type=int, default=60)
    sp.add_argument("--parallel", type=int, default=None, help="worker threads")
    sp.set_defaults(func=cmd_experiment_grid)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except ConvergenceError as e:
        print(f"convergence failure: {e}", file=sys.stderr)
        return 3
    except BpmtfError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
