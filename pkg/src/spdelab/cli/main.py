"""Command line entry point: ``spdelab <experiment> --config <path> [--threads N] [--output-dir P]``.

Writes ``results.csv``, ``summary.json`` and ``manifest.json`` to the output
directory. Exit status: 0 when every verdict is PASS or POSITIVE, 2 when
some verdict is INCONCLUSIVE, 1 on any failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ConfigError
from .config import EXPERIMENTS, ExperimentConfig, config_hash, load, serialize
from .experiments import RUNNERS

CSV_SCHEMA_VERSION = 1
SEED_ENV = "SPDELAB_SEED"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _cell(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def overall_status(verdicts):
    vals = set(verdicts.values())
    if "FAIL" in vals:
        return "FAIL"
    if "INCONCLUSIVE" in vals:
        return "INCONCLUSIVE"
    return "PASS"


def run(cfg: ExperimentConfig, threads=1, output_dir=None, seed_override=None):
    """Run one experiment and write its outputs; returns the manifest dict."""
    if seed_override is not None:
        cfg = replace(cfg, master_seed=int(seed_override))
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    manifest = {
        "artifact_version": __version__, "csv_schema_version": CSV_SCHEMA_VERSION,
        "config_hash": config_hash(cfg), "config": serialize(cfg), "experiment": cfg.experiment,
        "master_seed": cfg.master_seed, "seed_override": seed_override is not None, "threads": threads,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    try:
        result = RUNNERS[cfg.experiment](cfg, threads=threads)
    except Exception as exc:  # recorded, then reported through the exit status
        manifest.update(status="FAILED", error=f"{type(exc).__name__}: {exc}", verdicts={},
                        wall_clock_seconds=time.perf_counter() - started)
        _write_json(out / "manifest.json", manifest)
        return manifest
    write_csv(out / "results.csv", result.columns, result.rows)
    for name, (cols, rows) in result.tables.items():
        write_csv(out / name, cols, rows)
    _write_json(out / "summary.json", {"experiment": cfg.experiment, **result.summary, "verdicts": result.verdicts})
    manifest.update(status=overall_status(result.verdicts), verdicts=result.verdicts, summary=result.summary,
                    wall_clock_seconds=time.perf_counter() - started)
    _write_json(out / "manifest.json", manifest)
    return manifest


def exit_code(manifest):
    status = manifest.get("status")
    if status == "PASS":
        return 0
    if status == "INCONCLUSIVE":
        return 2
    return 1


def build_parser():
    p = argparse.ArgumentParser(prog="spdelab", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="path to a JSON experiment configuration")
    p.add_argument("--threads", type=int, default=1, help="worker threads over path blocks (results do not depend on it)")
    p.add_argument("--output-dir", default=None, help="override the configured output directory")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        cfg = load(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    if cfg.experiment != args.experiment:
        print(f"error: config is for experiment {cfg.experiment!r}, not {args.experiment!r}", file=sys.stderr)
        return 1
    seed = os.environ.get(SEED_ENV)
    if seed is not None:
        try:
            seed = int(seed)
            if not 0 <= seed < 2**64:
                raise ValueError
        except ValueError:
            print(f"error: {SEED_ENV} must be a 64-bit unsigned integer", file=sys.stderr)
            return 1
    manifest = run(cfg, threads=args.threads, output_dir=args.output_dir, seed_override=seed)
    out = args.output_dir or cfg.output_dir
    print(f"{cfg.experiment}: {manifest['status']}  ({out})")
    for name, verdict in sorted(manifest.get("verdicts", {}).items()):
        print(f"  {name}: {verdict}")
    if manifest.get("error"):
        print(f"  error: {manifest['error']}", file=sys.stderr)
    return exit_code(manifest)


if __name__ == "__main__":
    sys.exit(main())
