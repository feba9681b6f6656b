"""``vdsp`` command-line entry point.

Every subcommand reads an optional YAML config (``--config``), applies the
common overrides and writes its artifacts under ``--out``. Errors in the
config or missing data end the process with a nonzero status and a one-line
message.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ConfigError, ExperimentConfig, PROFILES, load_config
from .encoding import IdxError
from .network import SnapshotError, load_snapshot
from .theory import WindowParams, potentiation_halfwidth, window_scan, write_window_csv

log = logging.getLogger("vdsp")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _seeds(text: str) -> list[int]:
    """``0,1,2`` or ``0-4``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--profile", choices=sorted(PROFILES), help="start from a named profile")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seeds", type=_seeds, help="seed list, e.g. 0,1,2 or 0-4")
    p.add_argument("--threads", type=int, default=1, help="worker processes for independent runs")
    if data:
        p.add_argument("--dataset-dir", type=Path, help="directory with the MNIST IDX files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vdsp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-eval", help="train, label and evaluate for each seed")
    _common(p)

    p = sub.add_parser("freq-sweep", help="accuracy vs. input-current scale, VDSP and STDP")
    _common(p)
    p.add_argument("--scales", type=_floats, default=[0.5, 1.0, 2.0])
    p.add_argument("--max-spikes", type=int, default=10)

    p = sub.add_parser("sweep", help="accuracy over one hyperparameter axis")
    _common(p)
    p.add_argument("--axis", choices=ex.SWEEP_AXES, required=True)
    p.add_argument("--values", type=_floats, required=True)

    p = sub.add_parser("export-fields", help="write receptive fields from a snapshot as PGM images")
    p.add_argument("snapshot", type=Path)
    p.add_argument("--out", type=Path, default=Path("fields"))

    p = sub.add_parser("weight-stats", help="histogram and bimodality metrics of a snapshot")
    p.add_argument("snapshot", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("calibrate-gain", help="bisect the synaptic gain to a target output rate")
    _common(p)
    p.add_argument("--band", type=_floats, default=[1.0, 5.0], help="low,high spikes per sample")
    p.add_argument("--images", type=int, default=100)

    p = sub.add_parser("ablate", help="compare the default profile with one ablation")
    _common(p)
    p.add_argument("which", choices=ex.ABLATIONS)

    p = sub.add_parser("window-scan", help="tabulate the equivalent STDP window over potentials")
    p.add_argument("--current", type=float, default=1.5)
    p.add_argument("--tau-m", type=float, default=30.0)
    p.add_argument("--tau-plus", type=float, default=30.0)
    p.add_argument("--tau-minus", type=float, default=30.0)
    p.add_argument("--v-reset", type=float, default=-1.0)
    p.add_argument("--v-th", type=float, default=1.0)
    p.add_argument("--t-ref", type=float, default=0.0)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--out", type=Path, default=Path("window.csv"))
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config and args.profile:
        raise ConfigError("use either --config or --profile, not both")
    cfg = load_config(args.config) if args.config else PROFILES[args.profile or "default"]()
    if getattr(args, "dataset_dir", None):
        cfg = replace(cfg, dataset_dir=str(args.dataset_dir))
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=str(args.out))
    if getattr(args, "seeds", None):
        cfg = replace(cfg, training=replace(cfg.training, seeds=args.seeds))
    return cfg


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def run(args) -> int:
    cmd = args.command
    if cmd == "window-scan":
        p = WindowParams(args.current, args.tau_m, args.tau_plus, args.tau_minus, args.v_th, args.v_reset)
        grid = np.linspace(p.v_reset, p.v_th, args.points, endpoint=False)
        rows = window_scan(p, grid, t_ref=args.t_ref)
        path = write_window_csv(rows, args.out)
        _print({"csv": str(path), "rows": len(rows), "potentiation_halfwidth_ms": potentiation_halfwidth(rows)})
        return 0
    if cmd == "export-fields":
        paths = ex.export_fields(args.snapshot, args.out)
        _print({"fields": [str(p) for p in paths]})
        return 0
    if cmd == "weight-stats":
        weights, _ = load_snapshot(args.snapshot)
        stats = ex.weight_stats(weights)
        if args.out:
            ex.write_weight_stats(stats, args.out)
        _print({k: v for k, v in stats.items() if k not in ("bin_edges", "counts")})
        return 0

    cfg = resolve_config(args)
    out = Path(cfg.out_dir)
    if cmd == "train-eval":
        summary = ex.train_eval(cfg, cfg.training.seeds, out, args.threads)
        _print(summary.to_dict())
    elif cmd == "freq-sweep":
        rows = ex.frequency_sweep(cfg, args.scales, cfg.training.seeds, out, args.threads, args.max_spikes)
        _print({"rows": rows, "vdsp_range": ex.accuracy_range(rows, "vdsp"), "stdp_range": ex.accuracy_range(rows, "stdp")})
    elif cmd == "sweep":
        _print({"rows": ex.sweep(cfg, args.axis, args.values, cfg.training.seeds, out, args.threads)})
    elif cmd == "calibrate-gain":
        if len(args.band) != 2:
            raise ConfigError("--band takes two numbers: low,high")
        train, _, _ = ex.load_datasets(cfg)
        g, rate = ex.calibrate_gain(cfg, train.images[: args.images], tuple(args.band))
        _print({"g_syn": g, "mean_output_spikes": rate, "band": args.band})
    elif cmd == "ablate":
        result = ex.ablate(cfg, args.which, cfg.training.seeds, out, args.threads)
        _print(result["rows"])
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except (ConfigError, IdxError, SnapshotError, ex.CalibrationError, FileNotFoundError, ValueError) as exc:
        print(f"vdsp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
