"""Command-line entry point.

    selcon <experiment> [--config FILE] [--alpha A] ... --out DIR

A config file holds flat ``key = value`` lines with ``#`` comments; flags
given on the command line override it.  The effective configuration is
written to ``<out>/config.txt``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import datagen, runner
from .core import ContractError
from .metrics import Trace

TRACE_HEADER = list(Trace.COLUMNS)
SUMMARY_HEADER = ["rep", "seed", "final_fcp", "final_q", "selection_rate", "restarts", "t_converge"]


# --------------------------------------------------------------------------
# config files


def _field_types() -> dict[str, object]:
    return {f.name: f.type for f in dataclasses.fields(runner.ExperimentConfig)}


def _coerce(key: str, text: str):
    """Parse ``text`` according to the declared type of config field ``key``."""
    types = _field_types()
    if key not in types:
        raise ContractError(f"unknown config key {key!r}")
    t = str(types[key])
    text = text.strip()
    if text.lower() in ("none", "") and "None" in t:
        return None
    if t.startswith("tuple"):
        return tuple(p.strip() if key == "wirings" else float(p) for p in text.split(",") if p.strip())
    if t.startswith("bool"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ContractError(f"{key}: expected a boolean, got {text!r}")
    if t.startswith("int"):
        return int(text)
    if t.startswith("float"):
        return float(text)
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"config line {n}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def format_config(cfg: runner.ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.as_dict().items():
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# CSV output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return f"{v:.10g}"


def write_trace(path: Path, trace: Trace) -> None:
    cols = [getattr(trace, c) for c in TRACE_HEADER]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def write_summary(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in SUMMARY_HEADER])


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="selcon", description="Online selective conformal inference experiments.")
    p.add_argument("experiment", choices=runner.EXPERIMENTS)
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--alpha", type=float)
    p.add_argument("--q1", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--holdout", type=int)
    p.add_argument("--mode", choices=runner.MODES)
    p.add_argument("--baseline", action="store_true", default=None, help="also run decaying ACI with naive selection")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--ier-stride", dest="ier_stride", type=int, help="Monte-Carlo logging stride, 0 disables")
    p.add_argument("--mc-n", dest="mc_n", type=int)
    p.add_argument("--augment", choices=("all", "unselected"))
    p.add_argument("--restart-window", dest="restart_window", type=int)
    p.add_argument("--restart-level", dest="restart_level", type=float, help="freeze level, defaults to B")
    p.add_argument("--y0", type=float)
    p.add_argument("--selection", choices=("all", "region", "adaptive_mean"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", help="output directory")
    return p


def config_from_args(argv=None) -> runner.ExperimentConfig:
    args = build_parser().parse_args(argv)
    values: dict = {}
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    for key, val in vars(args).items():
        if key != "config" and val is not None:
            values[key] = val
    return runner.ExperimentConfig(**values).resolved()


# --------------------------------------------------------------------------
# execution


def _one_rep(args):
    cfg, rep, seed = args
    trace, base = runner.run_experiment(cfg, seed)
    return rep, seed, trace, base


def run(cfg: runner.ExperimentConfig) -> int:
    out = Path(cfg.out) if cfg.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(format_config(cfg))

    if cfg.experiment == "adversarial":
        report = runner.run_adversarial_suite(cfg)
        lines = [f"runs={report.runs} steps={report.steps} min_slack={report.max_slack:.6g}"]
        lines += [f"VIOLATION wiring={w} seed={s} t={t} kind={k}" for w, s, t, k in report.violations[:50]]
        lines.append("PASS" if report.ok else "FAIL")
        text = "\n".join(lines)
        print(text)
        if out is not None:
            (out / "adversarial_report.txt").write_text(text + "\n")
        return 0 if report.ok else 1

    seeds = datagen.replication_seeds(cfg.seed, cfg.reps)
    jobs = [(cfg, r, s) for r, s in enumerate(seeds)]
    if cfg.jobs > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            results = list(ex.map(_one_rep, jobs))
    else:
        results = [_one_rep(j) for j in jobs]

    rows, base_rows = [], []
    for rep, seed, trace, base in results:
        rows.append(runner.summary_row(rep, seed, trace, cfg))
        if base is not None:
            base_rows.append(runner.summary_row(rep, seed, base, dataclasses.replace(cfg, experiment="classify")))
        if out is not None:
            write_trace(out / f"trace_rep{rep:03d}.csv", trace)
            if base is not None:
                write_trace(out / f"baseline_trace_rep{rep:03d}.csv", base)
    if out is not None:
        write_summary(out / "summary.csv", rows)
        if base_rows:
            write_summary(out / "baseline_summary.csv", base_rows)
    mean_fcp = float(np.mean([r["final_fcp"] for r in rows]))
    mean_q = float(np.mean([r["final_q"] for r in rows]))
    print(f"{cfg.experiment}: reps={cfg.reps} mean_final_fcp={mean_fcp:.4f} mean_final_q={mean_q:.4f}")
    if base_rows:
        print(f"baseline: mean_final_fcp={np.mean([r['final_fcp'] for r in base_rows]):.4f}")
    return 0


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except (ContractError, ValueError) as exc:
        print(f"selcon: error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
