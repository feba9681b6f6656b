"""Experiment drivers behind the command-line subcommands.

Each driver takes an :class:`ExperimentConfig`, runs one or more seeded
train/label/evaluate pipelines and writes plain files (JSON, CSV, PGM and
binary weight snapshots) into an output directory. Runs for different seeds
are independent jobs and may be spread over a process pool; results are
always merged in ``(point, seed)`` order so the outputs do not depend on
scheduling.
"""
from __future__ import annotations

import csv
import functools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ExperimentConfig, build_id, from_dict
from .encoding import Dataset, encode_sample, load_mnist
from .network import build_network, load_snapshot, present_sample, save_snapshot
from .neuron import time_to_spike
from .training import N_CLASSES, RunReport, Summary, run_seed, seed_streams

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("n_outputs", "epochs", "rule", "n_seeds", "accuracy_mean", "accuracy_sd")
FREQ_COLUMNS = ("scale", "rule", "n_seeds", "accuracy_mean", "accuracy_sd", "flagged", "mean_duration_ms")
SWEEP_COLUMNS = ("axis", "value", "n_seeds", "accuracy_mean", "accuracy_sd")
ABLATION_COLUMNS = ("variant", "n_seeds", "accuracy_mean", "accuracy_sd", "delta_vs_baseline")
HIST_COLUMNS = ("bin_lo", "bin_hi", "count")
ABLATIONS = ("zero_bias", "noise", "poisson", "additive")
SWEEP_AXES = ("lr", "n_outputs", "epochs")

# Column sum restored after every sample for the STDP baseline: a tenth of
# the maximum possible sum for 784 inputs.
STDP_NORM_TARGET = 78.4


class CalibrationError(RuntimeError):
    pass


# --- data -------------------------------------------------------------------


@functools.lru_cache(maxsize=4)
def _load_split(directory: str, split: str) -> Dataset:
    return load_mnist(directory, split)


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, Dataset]:
    """``(train, label, test)`` subsets according to the training budget."""
    b = cfg.training
    train = _load_split(str(cfg.dataset_dir), "train")
    test = _load_split(str(cfg.dataset_dir), "test")
    return train.subset(b.train_samples), train.subset(b.label_samples), test.subset(b.test_samples)


# --- single runs --------------------------------------------------------------


@dataclass
class SeedResult:
    report: RunReport
    weights: np.ndarray
    step_index: int


def run_one(cfg: ExperimentConfig, seed: int) -> SeedResult:
    """Full train, label and evaluate pipeline for one seed."""
    train, label, test = load_datasets(cfg)
    b = cfg.training
    report, state = run_seed(
        seed,
        cfg.network,
        train,
        test,
        epochs=b.epochs,
        enc=cfg.encoding,
        pres=cfg.presentation,
        label_set=label,
        aggregate=None if b.aggregate == "auto" else b.aggregate,
    )
    report.config = {"experiment": cfg.to_dict(), "build_id": build_id()}
    return SeedResult(report, state.weights.copy(), state.step_index)


def _job(payload: tuple[dict, int]) -> SeedResult:
    cfg_dict, seed = payload
    return run_one(from_dict(cfg_dict), seed)


def run_jobs(jobs: Sequence[tuple[ExperimentConfig, int]], threads: int = 1) -> list[SeedResult]:
    """Run ``(config, seed)`` jobs, in a process pool when ``threads > 1``; results keep job order."""
    if threads <= 1 or len(jobs) <= 1:
        return [run_one(cfg, seed) for cfg, seed in jobs]
    payloads = [(cfg.to_dict(), seed) for cfg, seed in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_job, payloads))


def report_json(report: RunReport) -> str:
    """Canonical report text; wall-clock time is kept out so reruns are byte-identical."""
    data = report.to_dict()
    data.pop("wall_clock_ms")
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _write_csv(path: Path, columns: Sequence[str], rows: list[dict]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in columns})
    return path


def write_seed_outputs(result: SeedResult, out_dir: Path, prefix: str = "") -> None:
    r = result.report
    stem = f"{prefix}seed{r.seed}"
    snap = save_snapshot(out_dir / f"{stem}_weights.vdsw", result.weights, result.step_index)
    r.snapshots = [snap.name]
    (out_dir / f"{stem}_report.json").write_text(report_json(r))
    np.savetxt(out_dir / f"{stem}_confusion.csv", r.confusion, fmt="%d", delimiter=",")


def _summary_row(cfg: ExperimentConfig, summary: Summary) -> dict:
    return {
        "n_outputs": cfg.network.n_outputs,
        "epochs": cfg.training.epochs,
        "rule": cfg.network.plasticity.rule,
        "n_seeds": len(summary.reports),
        "accuracy_mean": summary.mean,
        "accuracy_sd": summary.sd,
    }


def train_eval(
    cfg: ExperimentConfig, seeds: Sequence[int] | None = None, out_dir=None, threads: int = 1
) -> Summary:
    """Train/label/evaluate for each seed and write reports, snapshots and a summary row."""
    seeds = sorted(set(seeds if seeds is not None else cfg.training.seeds))
    if not seeds:
        raise ValueError("need at least one seed")
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_jobs([(cfg, s) for s in seeds], threads)
    for res in results:
        write_seed_outputs(res, out)
    summary = Summary([res.report for res in results])
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [_summary_row(cfg, summary)])
    _write_csv(
        out / "timing.csv",
        ("seed", "wall_clock_ms"),
        [{"seed": r.seed, "wall_clock_ms": r.wall_clock_ms} for r in summary.reports],
    )
    (out / "summary.json").write_text(
        json.dumps(
            {**summary.to_dict(), "config": cfg.to_dict(), "build_id": build_id()}, indent=2, sort_keys=True
        )
        + "\n"
    )
    return summary


# --- sweeps -------------------------------------------------------------------


def _grid(points: list[tuple[object, ExperimentConfig]], seeds: Sequence[int], threads: int) -> list[Summary]:
    jobs = [(cfg, s) for _, cfg in points for s in seeds]
    results = run_jobs(jobs, threads)
    n = len(seeds)
    return [Summary([r.report for r in results[i * n : (i + 1) * n]]) for i in range(len(points))]


def with_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "lr":
        return replace(cfg, network=replace(cfg.network, plasticity=replace(cfg.network.plasticity, lr=float(value))))
    if axis == "n_outputs":
        return replace(cfg, network=replace(cfg.network, n_outputs=int(value)))
    if axis == "epochs":
        return replace(cfg, training=replace(cfg.training, epochs=int(value)))
    raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def sweep(
    cfg: ExperimentConfig, axis: str, values: Sequence, seeds: Sequence[int] | None = None, out_dir=None, threads: int = 1
) -> list[dict]:
    """Mean and SD of accuracy at each value of one hyperparameter."""
    if not values:
        raise ValueError("need at least one sweep value")
    seeds = sorted(set(seeds if seeds is not None else cfg.training.seeds))
    points = [(v, with_axis(cfg, axis, v)) for v in values]
    rows = [
        {"axis": axis, "value": v, "n_seeds": len(s.reports), "accuracy_mean": s.mean, "accuracy_sd": s.sd}
        for (v, _), s in zip(points, _grid(points, seeds, threads))
    ]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / f"sweep_{axis}.csv", SWEEP_COLUMNS, rows)
    return rows


def stdp_baseline(cfg: ExperimentConfig) -> ExperimentConfig:
    """Same network with pair STDP plus per-sample column normalization."""
    plast = replace(cfg.network.plasticity, rule="stdp_pair", norm_target=STDP_NORM_TARGET)
    return replace(cfg, network=replace(cfg.network, plasticity=plast))


def frequency_point(cfg: ExperimentConfig, scale: float, max_spikes: int = 10) -> ExperimentConfig:
    """Adaptation off, pixel currents scaled, presentation time capped at ``max_spikes`` per pixel."""
    return replace(
        cfg,
        network=replace(cfg.network, adaptation_enabled=False),
        encoding=replace(cfg.encoding, current_scale=float(scale)),
        presentation=replace(cfg.presentation, dynamic_max_spikes=max_spikes),
    )


def subthreshold(cfg: ExperimentConfig) -> bool:
    """True when even a full-intensity pixel never drives an input neuron to threshold."""
    ip = cfg.network.input_params
    bias = ip.bias if cfg.encoding.bias_enabled else 0.0
    return math.isinf(time_to_spike(ip.v_reset, cfg.encoding.current_scale + bias, ip))


def frequency_sweep(
    cfg: ExperimentConfig,
    scales: Sequence[float],
    seeds: Sequence[int] | None = None,
    out_dir=None,
    threads: int = 1,
    max_spikes: int = 10,
) -> list[dict]:
    """Accuracy against input-current scale for VDSP and the STDP baseline.

    A scale too low for any input neuron to fire is not simulated: its rows
    are flagged and carry chance accuracy.
    """
    if any(not s > 0 for s in scales):
        raise ValueError("scales must be positive")
    seeds = sorted(set(seeds if seeds is not None else cfg.training.seeds))
    points, rows = [], []
    for scale in scales:
        for rule, base in (("vdsp", cfg), ("stdp", stdp_baseline(cfg))):
            points.append(((scale, rule), frequency_point(base, scale, max_spikes)))
    live = [p for p in points if not subthreshold(p[1])]
    summaries = dict(zip([k for k, _ in live], _grid(live, seeds, threads)))
    train, _, _ = load_datasets(cfg)
    for (scale, rule), pcfg in points:
        s = summaries.get((scale, rule))
        if s is None:
            rows.append(
                {"scale": scale, "rule": rule, "n_seeds": 0, "accuracy_mean": 1.0 / N_CLASSES,
                 "accuracy_sd": 0.0, "flagged": 1, "mean_duration_ms": 0.0}
            )
            continue
        durations = [pcfg.presentation.duration_for(img, pcfg.encoding, pcfg.network) for img in train.images[:1000]]
        durations = [d for d in durations if d is not None]
        rows.append(
            {"scale": scale, "rule": rule, "n_seeds": len(s.reports), "accuracy_mean": s.mean,
             "accuracy_sd": s.sd, "flagged": 0, "mean_duration_ms": float(np.mean(durations)) if durations else 0.0}
        )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "freq_sweep.csv", FREQ_COLUMNS, rows)
    return rows


def accuracy_range(rows: list[dict], rule: str) -> float:
    acc = [r["accuracy_mean"] for r in rows if r["rule"] == rule]
    return max(acc) - min(acc)


# --- ablations ----------------------------------------------------------------


def ablation_variant(cfg: ExperimentConfig, which: str) -> ExperimentConfig:
    net, enc = cfg.network, cfg.encoding
    if which == "zero_bias":
        return replace(cfg, encoding=replace(enc, bias_enabled=False))
    if which == "noise":
        sigma = enc.noise_sigma if enc.noise_sigma > 0 else 0.1
        return replace(cfg, encoding=replace(enc, mode="noisy", noise_sigma=sigma))
    if which == "poisson":
        return replace(cfg, encoding=replace(enc, mode="poisson"))
    if which == "additive":
        return replace(cfg, network=replace(net, plasticity=replace(net.plasticity, rule="vdsp_additive")))
    raise ValueError(f"ablation must be one of {ABLATIONS}, got {which!r}")


def ablate(
    cfg: ExperimentConfig, which: str, seeds: Sequence[int] | None = None, out_dir=None, threads: int = 1
) -> dict:
    """Paired comparison of the default profile against one ablated variant."""
    seeds = sorted(set(seeds if seeds is not None else cfg.training.seeds))
    variant = ablation_variant(cfg, which)
    base_s, var_s = _grid([("baseline", cfg), (which, variant)], seeds, threads)
    rows = [
        {"variant": "baseline", "n_seeds": len(seeds), "accuracy_mean": base_s.mean,
         "accuracy_sd": base_s.sd, "delta_vs_baseline": 0.0},
        {"variant": which, "n_seeds": len(seeds), "accuracy_mean": var_s.mean,
         "accuracy_sd": var_s.sd, "delta_vs_baseline": var_s.mean - base_s.mean},
    ]
    result = {"ablation": which, "baseline": base_s.to_dict(), "variant": var_s.to_dict(), "rows": rows}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / f"ablation_{which}.csv", ABLATION_COLUMNS, rows)
        for tag, summary in (("baseline", base_s), (which, var_s)):
            for r in summary.reports:
                (out / f"{tag}_seed{r.seed}_report.json").write_text(report_json(r))
    return result


# --- weight inspection ----------------------------------------------------------


def field_images(weights: np.ndarray, shape=(28, 28)) -> list[np.ndarray]:
    """One uint8 image per output neuron, mapping weights in [0, 1] linearly to [0, 255]."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != shape[0] * shape[1]:
        raise ValueError(f"weights of shape {weights.shape} cannot be shown as {shape} fields")
    pix = np.rint(np.clip(weights, 0.0, 1.0) * 255.0).astype(np.uint8)
    return [pix[:, j].reshape(shape) for j in range(weights.shape[1])]


def write_pgm(path, image: np.ndarray) -> Path:
    path = Path(path)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h).reshape(h, w)


def export_fields(snapshot, out_dir) -> list[Path]:
    weights, _ = load_snapshot(snapshot)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [write_pgm(out / f"field_{j:03d}.pgm", img) for j, img in enumerate(field_images(weights))]


def weight_stats(weights: np.ndarray, bins: int = 50) -> dict:
    """Histogram on [0, 1] plus tail and middle mass.

    Tail mass counts ``w <= 0.1`` or ``w >= 0.9``, middle mass ``0.3 < w < 0.7``
    and ``near_binary`` the share within 0.01 of either bound.
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    counts, edges = np.histogram(w, bins=bins, range=(0.0, 1.0))
    return {
        "n": int(w.size),
        "bin_edges": edges.tolist(),
        "counts": counts.tolist(),
        "tail_mass": float(np.mean((w <= 0.1) | (w >= 0.9))),
        "middle_mass": float(np.mean((w > 0.3) & (w < 0.7))),
        "near_binary": float(np.mean((w <= 0.01) | (w >= 0.99))),
        "mean": float(w.mean()),
    }


def write_weight_stats(stats: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    e, c = stats["bin_edges"], stats["counts"]
    _write_csv(out / "weight_hist.csv", HIST_COLUMNS,
               [{"bin_lo": e[i], "bin_hi": e[i + 1], "count": c[i]} for i in range(len(c))])
    path = out / "weight_stats.json"
    path.write_text(json.dumps({k: v for k, v in stats.items() if k not in ("bin_edges", "counts")}, indent=2) + "\n")
    return path


# --- gain calibration -------------------------------------------------------------


def mean_output_spikes(
    cfg: ExperimentConfig, g_syn: float, images: np.ndarray, weights: np.ndarray | None = None, seed: int = 0
) -> float:
    """Mean output spikes per sample for an untrained, frozen network at gain ``g_syn``."""
    net = replace(cfg.network, g_syn=g_syn, learning_enabled=False)
    if not cfg.encoding.bias_enabled:
        net = replace(net, input_params=replace(net.input_params, bias=0.0))
    rngs = seed_streams(seed)
    state = build_network(net, rngs["weights"])
    if weights is not None:
        state.synapses.weights = np.array(weights, dtype=np.float64)
    total = 0
    for image in images:
        duration = cfg.presentation.duration_for(image, cfg.encoding, net)
        if duration is None:
            continue
        sample = encode_sample(image, cfg.encoding, duration, net.dt, rngs["train"])
        total += int(present_sample(state, sample.drive, sample.n_steps, net).spike_counts.sum())
    return total / len(images)


def calibrate_gain(
    cfg: ExperimentConfig,
    images: np.ndarray,
    band: tuple[float, float] = (1.0, 5.0),
    lo: float = 1e-4,
    hi: float = 1.0,
    max_hi: float = 1e3,
    max_iter: int = 60,
    weights: np.ndarray | None = None,
    rate_fn: Callable[[float], float] | None = None,
) -> tuple[float, float]:
    """Bisect ``g_syn`` until the mean output spike count per sample falls in ``band``.

    Returns ``(g_syn, rate)``. The upper bracket doubles up to ``max_hi``
    if needed; a band that cannot be reached raises ``CalibrationError``.
    """
    lo_band, hi_band = band
    if not lo_band <= hi_band:
        raise ValueError("band must be (low, high) with low <= high")
    rate = rate_fn or (lambda g: mean_output_spikes(cfg, g, images, weights, cfg.network.seed))
    r_lo = rate(lo)
    if lo_band <= r_lo <= hi_band:
        return lo, r_lo
    if r_lo > hi_band:
        raise CalibrationError(f"already {r_lo:.3g} spikes/sample at g_syn={lo}, above band {band}")
    r_hi = rate(hi)
    while r_hi < lo_band and hi < max_hi:
        lo, hi = hi, hi * 2.0
        r_hi = rate(hi)
    if r_hi < lo_band:
        raise CalibrationError(f"only {r_hi:.3g} spikes/sample at g_syn={hi}, band {band} unreachable")
    if r_hi <= hi_band:
        return hi, r_hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = rate(mid)
        if r < lo_band:
            lo = mid
        elif r > hi_band:
            hi = mid
        else:
            return mid, r
    raise CalibrationError(f"bisection did not land in band {band} between g_syn={lo:.6g} and {hi:.6g}")
