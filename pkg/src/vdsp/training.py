"""Unsupervised training, post-hoc neuron labeling, prediction and evaluation."""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .encoding import Dataset, EncodingConfig, dynamic_duration, encode_sample, n_steps_for
from .network import NetworkConfig, NetworkState, build_network, present_sample, reset_dynamics

log = logging.getLogger(__name__)

UNASSIGNED = -1
N_CLASSES = 10
AGGREGATES = ("winner_neuron", "class_sum")


@dataclass
class Presentation:
    """How samples are shown: fixed duration, or dynamic with a per-pixel spike cap."""

    duration_ms: float = 350.0
    dynamic_max_spikes: int | None = None
    shuffle: bool = False

    def duration_for(self, image, enc: EncodingConfig, net: NetworkConfig) -> float | None:
        if self.dynamic_max_spikes is None:
            return self.duration_ms
        try:
            return dynamic_duration(image, enc, self.dynamic_max_spikes, net.input_params, net.dt)
        except ValueError:
            return None


@dataclass
class LabelMap:
    labels: np.ndarray
    tallies: np.ndarray

    @property
    def assigned(self) -> np.ndarray:
        return self.labels != UNASSIGNED

    @classmethod
    def from_tallies(cls, tallies) -> "LabelMap":
        """Label each neuron with the class it fired most for; ties go to the lowest class id."""
        tallies = np.asarray(tallies)
        labels = np.argmax(tallies, axis=1)
        labels[tallies.sum(axis=1) == 0] = UNASSIGNED
        return cls(labels.astype(np.int64), tallies)


@dataclass
class RunReport:
    seed: int
    accuracy: float
    confusion: np.ndarray
    labels: list[int]
    potentiation_count: int = 0
    depression_count: int = 0
    update_events: int = 0
    wall_clock_ms: float = 0.0
    config: dict = field(default_factory=dict)
    snapshots: list[str] = field(default_factory=list)
    weights_sha256: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "labels": list(self.labels),
            "potentiation_count": self.potentiation_count,
            "depression_count": self.depression_count,
            "update_events": self.update_events,
            "wall_clock_ms": self.wall_clock_ms,
            "weights_sha256": self.weights_sha256,
            "snapshots": list(self.snapshots),
            "extra": self.extra,
            "config": self.config,
        }


def weights_digest(weights: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(weights, dtype="<f8").tobytes()).hexdigest()


def _order(n: int, shuffle: bool, rng: np.random.Generator | None) -> np.ndarray:
    if shuffle:
        if rng is None:
            raise ValueError("shuffling needs an rng")
        return rng.permutation(n)
    return np.arange(n)


def run_pass(
    state: NetworkState,
    dataset: Dataset,
    net: NetworkConfig,
    enc: EncodingConfig,
    pres: Presentation,
    rng: np.random.Generator | None = None,
    order: np.ndarray | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Present every sample once; returns per-sample output spike counts ``(n_samples, n_outputs)``.

    Samples skipped by dynamic presentation (blank or subthreshold images)
    get an all-zero row.
    """
    if order is None:
        order = np.arange(len(dataset))
    if not enc.bias_enabled:
        net = replace(net, input_params=replace(net.input_params, bias=0.0))
    counts = np.zeros((len(dataset), net.n_outputs), dtype=np.int64)
    for k, idx in enumerate(order):
        image = dataset.images[idx]
        duration = pres.duration_for(image, enc, net)
        if duration is None:
            continue
        sample = encode_sample(image, enc, duration, net.dt, rng)
        counts[idx] = present_sample(state, sample.drive, sample.n_steps, net).spike_counts
        if callback is not None:
            callback(k, counts[idx])
    return counts


def train(
    state: NetworkState,
    dataset: Dataset,
    epochs: int,
    net: NetworkConfig,
    enc: EncodingConfig | None = None,
    pres: Presentation | None = None,
    rng: np.random.Generator | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> NetworkState:
    """Present the training set ``epochs`` times with plasticity on.

    Dynamics are reset at the start of each epoch, not between samples.
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    if not net.learning_enabled:
        raise ValueError("train() needs learning_enabled=True")
    enc = enc or EncodingConfig()
    pres = pres or Presentation()
    for epoch in range(epochs):
        reset_dynamics(state, net)
        order = _order(len(dataset), pres.shuffle, rng)
        log.info("epoch %d/%d", epoch + 1, epochs)
        run_pass(state, dataset, net, enc, pres, rng, order, callback)
    return state


def _frozen(net: NetworkConfig) -> NetworkConfig:
    return replace(net, learning_enabled=False)


def assign_labels(
    state: NetworkState,
    dataset: Dataset,
    net: NetworkConfig,
    enc: EncodingConfig | None = None,
    pres: Presentation | None = None,
    rng: np.random.Generator | None = None,
) -> LabelMap:
    """Tally each neuron's spikes per true class with weights frozen and label by argmax."""
    enc = enc or EncodingConfig()
    pres = pres or Presentation()
    reset_dynamics(state, net)
    counts = run_pass(state, dataset, _frozen(net), enc, pres, rng)
    tallies = np.zeros((net.n_outputs, N_CLASSES), dtype=np.int64)
    np.add.at(tallies.T, dataset.labels.astype(np.int64), counts)
    return LabelMap.from_tallies(tallies)


def predict(spike_counts, labels: LabelMap, aggregate: str = "winner_neuron") -> int | None:
    """Class for one sample's output spike counts, or ``None`` if nothing labeled fired."""
    counts = np.asarray(spike_counts)
    mask = labels.assigned
    if not mask.any() or counts[mask].max() <= 0:
        return None
    if aggregate == "winner_neuron":
        masked = np.where(mask, counts, -1)
        return int(labels.labels[int(np.argmax(masked))])
    if aggregate == "class_sum":
        sums = np.zeros(N_CLASSES, dtype=np.int64)
        np.add.at(sums, labels.labels[mask], counts[mask])
        return int(np.argmax(sums))
    raise ValueError(f"unknown aggregate {aggregate!r}")


def predict_batch(counts: np.ndarray, labels: LabelMap, aggregate: str) -> np.ndarray:
    """Vectorized ``predict``; ``-1`` stands for no prediction."""
    mask = labels.assigned
    masked = np.where(mask[None, :], counts, 0)
    silent = masked.max(axis=1) <= 0
    if aggregate == "winner_neuron":
        pred = labels.labels[np.argmax(np.where(mask[None, :], counts, -1), axis=1)]
    elif aggregate == "class_sum":
        onehot = np.zeros((len(mask), N_CLASSES), dtype=np.int64)
        onehot[np.flatnonzero(mask), labels.labels[mask]] = 1
        pred = np.argmax(masked @ onehot, axis=1)
    else:
        raise ValueError(f"unknown aggregate {aggregate!r}")
    return np.where(silent, -1, pred)


def confusion_matrix(true: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """10x10 counts; a missing prediction (-1) lands in no column but still counts as an error."""
    conf = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    ok = pred >= 0
    np.add.at(conf, (true[ok].astype(np.int64), pred[ok]), 1)
    return conf


def evaluate(
    state: NetworkState,
    labels: LabelMap,
    dataset: Dataset,
    net: NetworkConfig,
    enc: EncodingConfig | None = None,
    pres: Presentation | None = None,
    rng: np.random.Generator | None = None,
    aggregate: str = "winner_neuron",
    seed: int = 0,
) -> RunReport:
    enc = enc or EncodingConfig()
    pres = pres or Presentation()
    reset_dynamics(state, net)
    counts = run_pass(state, dataset, _frozen(net), enc, pres, rng)
    pred = predict_batch(counts, labels, aggregate)
    conf = confusion_matrix(dataset.labels, pred)
    syn = state.synapses
    return RunReport(
        seed=seed,
        # unanswered samples are errors, so divide by the full test set
        accuracy=float(np.trace(conf)) / len(dataset),
        confusion=conf,
        labels=[int(x) for x in labels.labels],
        potentiation_count=syn.potentiation_count,
        depression_count=syn.depression_count,
        update_events=syn.update_events,
        weights_sha256=weights_digest(syn.weights),
        extra={
            "no_prediction": int(np.count_nonzero(pred < 0)),
            "accuracy_by_aggregate": {
                agg: float(np.mean(predict_batch(counts, labels, agg) == dataset.labels)) for agg in AGGREGATES
            },
        },
    )


def default_aggregate(n_outputs: int) -> str:
    return "winner_neuron" if n_outputs <= N_CLASSES else "class_sum"


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for weight init, training, labeling and test passes."""
    names = ("weights", "train", "label", "test")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def run_seed(
    seed: int,
    net: NetworkConfig,
    train_set: Dataset,
    test_set: Dataset,
    epochs: int = 1,
    enc: EncodingConfig | None = None,
    pres: Presentation | None = None,
    label_set: Dataset | None = None,
    aggregate: str | None = None,
    on_trained: Callable[[NetworkState], None] | None = None,
) -> tuple[RunReport, NetworkState]:
    """Train, label and evaluate one network; the whole run is a function of ``seed``."""
    enc = enc or EncodingConfig()
    pres = pres or Presentation()
    aggregate = aggregate or default_aggregate(net.n_outputs)
    net = replace(net, seed=seed)
    rngs = seed_streams(seed)
    t0 = time.perf_counter()
    state = build_network(net, rngs["weights"])
    if epochs > 0:
        train(state, train_set, epochs, net, enc, pres, rngs["train"])
    if on_trained is not None:
        on_trained(state)
    labels = assign_labels(state, label_set if label_set is not None else train_set, net, enc, pres, rngs["label"])
    report = evaluate(state, labels, test_set, net, enc, pres, rngs["test"], aggregate, seed)
    report.wall_clock_ms = (time.perf_counter() - t0) * 1000.0
    report.extra["aggregate"] = aggregate
    report.extra["n_labeled_classes"] = len(set(int(x) for x in labels.labels if x >= 0))
    return report, state


@dataclass
class Summary:
    reports: list[RunReport]

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.reports])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def sd(self) -> float:
        # sample SD across seeds; a single seed has SD 0
        acc = self.accuracies
        return float(acc.std(ddof=1)) if acc.size > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "seeds": [r.seed for r in self.reports],
            "accuracy_mean": self.mean,
            "accuracy_sd": self.sd,
            "accuracies": self.accuracies.tolist(),
        }


def multi_seed(run: Callable[[int], RunReport], seeds: Iterable[int]) -> Summary:
    """Run ``run(seed)`` for each seed, ordering reports by seed."""
    seeds = sorted(set(seeds))
    if not seeds:
        raise ValueError("need at least one seed")
    return Summary([run(s) for s in seeds])
