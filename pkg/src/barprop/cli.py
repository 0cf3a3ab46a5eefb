"""Command-line entry point.

    barprop solve          --config cfg.yaml [--set solve.target=[12,30]]
    barprop experiment     --config cfg.yaml --out results/
    barprop sweep-noise    --out results/ --set experiment.runs=200
    barprop sweep-anchors  --out results/
    barprop ingest data.csv --config room.yaml --out results/
    barprop crlb           --set solve.target=[20,20]

Exit codes: 0 success, 2 bad invocation or config, 3 runtime abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .baselines import de_solve, lm_solve, rmsprop_solve
from .harness import (
    ALGORITHMS, LAYOUTS, ExperimentSpec, IngestError, RunAbort, anchor_count_sweep,
    ingest_measurements, noise_sweep, run_dataset, run_experiment, write_csv, write_json,
    write_timing_csv,
)
from .model import Measurement, SingularGeometryError, crlb, generate_rss
from .optim import NumericalAbort, solve

EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 2, 3, 4

SUBCOMMANDS = ("solve", "experiment", "sweep-noise", "sweep-anchors", "ingest", "crlb")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="barprop", description="BARProp RSS localization")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--out", help="output directory for CSV/JSON artifacts")
    common.add_argument("--seed", type=int, help="master seed (overrides experiment.master_seed)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo runs")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. barprop.learning_rate=0.05")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    sub.add_parser("solve", parents=[common], help="localize one target")
    sub.add_parser("experiment", parents=[common], help="Monte Carlo at one noise level")
    sub.add_parser("sweep-noise", parents=[common], help="Monte Carlo over experiment.noise_levels")
    sub.add_parser("sweep-anchors", parents=[common], help="Monte Carlo over experiment.anchor_counts")
    ing = sub.add_parser("ingest", parents=[common], help="localize recorded measurements from CSV")
    ing.add_argument("data", help="measurement CSV (x1,x2,rss_1..rss_N)")
    sub.add_parser("crlb", parents=[common], help="CRLB at solve.target")
    return parser


def _spec_from_doc(doc: dict, metadata: dict) -> ExperimentSpec:
    sc, ex = doc["scenario"], doc["experiment"]
    configs = cfgmod.build_configs(doc)
    if sc["anchors"] is not None:
        layout, anchors = "custom", tuple(map(tuple, sc["anchors"]))
    else:
        if sc["layout"] not in LAYOUTS:
            raise cfgmod.ConfigError(f"unknown layout {sc['layout']!r}")
        layout, anchors = sc["layout"], None
    try:
        return ExperimentSpec(
            layout=layout, anchors=anchors,
            target=None if ex["target"] is None else tuple(ex["target"]),
            noise_levels=(float(np.mean(sc["noise_std_db"])),),
            runs=int(ex["runs"]), algorithms=tuple(ex["algorithms"]),
            master_seed=int(ex["master_seed"]), noiseless=bool(ex["noiseless"]),
            anchors_per_run=bool(ex["anchors_per_run"]),
            tx_power_dbm=sc["tx_power_dbm"], path_loss_exponent=sc["path_loss_exponent"],
            region_min=tuple(sc["region_min"]), region_max=tuple(sc["region_max"]),
            metadata=metadata, **configs,
        )
    except (TypeError, ValueError) as exc:
        raise cfgmod.ConfigError(f"invalid experiment: {exc}") from exc


def _emit(reports, out, metadata) -> None:
    if not out:
        return
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(reports, out / "results.csv")
    write_timing_csv(reports, out / "timing.csv")
    write_json(reports, out / "report.json", metadata)


def _summary(reports) -> str:
    parts = []
    for rep in reports:
        vals = " ".join(f"{n}={r.rmse:.4f}" for n, r in rep.results.items())
        parts.append(f"{rep.sweep}={rep.sweep_value:g}: rmse {vals} crlb={rep.crlb_ref:.4f}")
    return " | ".join(parts)


def _cmd_solve(doc, args, metadata) -> str:
    scenario = cfgmod.scenario_from_dict(doc["scenario"])
    sv = doc["solve"]
    seed = doc["experiment"]["master_seed"]
    rng = np.random.default_rng(seed)
    target = None if sv["target"] is None else np.asarray(sv["target"], dtype=float)
    if sv["rss_dbm"] is not None:
        meas = Measurement(sv["rss_dbm"], scenario.noise_std_db)
    elif target is not None:
        meas = generate_rss(scenario, target, rng, noiseless=bool(sv["noiseless"]))
    else:
        raise cfgmod.ConfigError("solve needs solve.rss_dbm or solve.target")
    configs = cfgmod.build_configs(doc)
    algo = sv["algorithm"]
    if algo == "barprop":
        est = solve(scenario, meas, configs["barprop"], rng)
    elif algo == "rmsprop":
        est = rmsprop_solve(scenario, meas, configs["rmsprop"], rng)
    elif algo == "de":
        est = de_solve(scenario, meas, configs["de"], rng)
    elif algo == "lm":
        if target is None:
            raise cfgmod.ConfigError("lm needs solve.target as its start point")
        est = lm_solve(scenario, meas, target, configs["lm"])
    else:
        raise cfgmod.ConfigError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    result = {
        "algorithm": algo,
        "position": est.position.tolist(),
        "iterations": est.iterations,
        "reason": est.reason,
        "elapsed_ms": est.elapsed * 1e3,
        "rss_dbm": meas.rss_dbm.tolist(),
        "metadata": metadata,
    }
    if target is not None:
        result["error"] = float(np.linalg.norm(est.position - target))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "solve.json").write_text(json.dumps(result, indent=1))
    x1, x2 = est.position
    return f"position {x1:.6f} {x2:.6f} iterations {est.iterations} reason {est.reason}"


def _cmd_crlb(doc, args, metadata) -> str:
    scenario = cfgmod.scenario_from_dict(doc["scenario"])
    target = doc["solve"]["target"]
    if target is None:
        raise cfgmod.ConfigError("crlb needs solve.target")
    bound = crlb(scenario, target)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "crlb.json").write_text(json.dumps({"target": list(target), "crlb": bound, "metadata": metadata}))
    return f"crlb {bound:.6f}"


def _cmd_experiment(doc, args, metadata):
    spec = _spec_from_doc(doc, metadata)
    return [run_experiment(spec, args.workers)]


def _cmd_sweep_noise(doc, args, metadata):
    spec = _spec_from_doc(doc, metadata)
    levels = [float(s) for s in doc["experiment"]["noise_levels"]]
    return noise_sweep(spec, levels, args.workers)


def _cmd_sweep_anchors(doc, args, metadata):
    spec = _spec_from_doc(doc, metadata)
    counts = [int(n) for n in doc["experiment"]["anchor_counts"]]
    return anchor_count_sweep(spec, counts, args.workers)


def _cmd_ingest(doc, args, metadata):
    scenario = cfgmod.scenario_from_dict(doc["scenario"])
    try:
        records = ingest_measurements(args.data, scenario.noise_std_db, scenario.n_anchors)
    except IngestError as exc:
        raise cfgmod.ConfigError(str(exc)) from exc
    spec = _spec_from_doc(doc, metadata)
    return [run_dataset(spec, scenario, records, int(doc["experiment"]["trials"]), args.workers)]


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    metadata = {"command": args.command, "config": args.config, "overrides": list(args.overrides),
                "seed": args.seed}
    try:
        doc = cfgmod.apply_overrides(cfgmod.load_document(args.config), args.overrides)
        if args.seed is not None:
            doc["experiment"]["master_seed"] = args.seed
        if args.workers < 1:
            raise cfgmod.ConfigError("--workers must be >= 1")
        if args.command == "solve":
            print(_cmd_solve(doc, args, metadata))
            return 0
        if args.command == "crlb":
            print(_cmd_crlb(doc, args, metadata))
            return 0
        handler = {
            "experiment": _cmd_experiment,
            "sweep-noise": _cmd_sweep_noise,
            "sweep-anchors": _cmd_sweep_anchors,
            "ingest": _cmd_ingest,
        }[args.command]
        reports = handler(doc, args, metadata)
        _emit(reports, args.out, metadata)
        print(_summary(reports))
        return 0
    except cfgmod.ConfigError as exc:
        print(f"barprop: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunAbort, NumericalAbort, SingularGeometryError, ValueError, RuntimeError) as exc:
        print(f"barprop: aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"barprop: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())
