"""Voltage-dependent synaptic plasticity and a pair-based STDP baseline.

The VDSP update fires only on a postsynaptic spike and reads the membrane
potential of every presynaptic neuron:

* ``v_pre < 0`` (pre fired recently): ``dw = (w_max - w) * (exp(-v_pre) - 1) * lr``
* ``v_pre > 0`` (pre about to fire):  ``dw = -w * (exp(v_pre) - 1) * lr``

The multiplicative form needs no clipping as long as
``lr * (exp(max(|v_reset|, v_th)) - 1) <= 1``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

RULES = ("vdsp_multiplicative", "vdsp_additive", "stdp_pair")


@dataclass
class StdpParams:
    a_plus: float | None = None
    a_minus: float | None = None
    tau_plus: float = 20.0
    tau_minus: float = 20.0


@dataclass
class PlasticityConfig:
    """Rule selector and scalar parameters.

    For ``stdp_pair`` the amplitudes default to ``a_plus = lr`` and
    ``a_minus = 1.05 * lr``; ``norm_target`` is the per-column weight sum
    restored after every sample (``None`` disables normalization).
    """

    rule: str = "vdsp_multiplicative"
    # tuned for ten outputs, one epoch, impulse synapses at the default gain
    lr: float = 0.001
    w_max: float = 1.0
    stdp: StdpParams = field(default_factory=StdpParams)
    norm_target: float | None = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown plasticity rule {self.rule!r}; expected one of {RULES}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if isinstance(self.stdp, dict):
            self.stdp = StdpParams(**self.stdp)

    @property
    def a_plus(self) -> float:
        return self.lr if self.stdp.a_plus is None else self.stdp.a_plus

    @property
    def a_minus(self) -> float:
        return 1.05 * self.lr if self.stdp.a_minus is None else self.stdp.a_minus

    def bounded(self, v_reset: float, v_th: float) -> bool:
        """True when the multiplicative rule provably keeps weights in [0, w_max]."""
        return self.lr * (np.exp(max(abs(v_reset), v_th)) - 1.0) <= 1.0


@dataclass
class SynapseMatrix:
    """Dense weights (rows: presynaptic, columns: postsynaptic) plus counters.

    ``update_events`` counts individual synapse updates; potentiation and
    depression counters only count updates with a nonzero sign.
    """

    weights: np.ndarray
    potentiation_count: int = 0
    depression_count: int = 0
    update_events: int = 0
    trace_pre: np.ndarray | None = None
    trace_post: np.ndarray | None = None
    degenerate_columns: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n_pre, n_post = self.weights.shape
        if self.trace_pre is None:
            self.trace_pre = np.zeros(n_pre)
        if self.trace_post is None:
            self.trace_post = np.zeros(n_post)

    def copy(self) -> "SynapseMatrix":
        return SynapseMatrix(
            self.weights.copy(),
            self.potentiation_count,
            self.depression_count,
            self.update_events,
            self.trace_pre.copy(),
            self.trace_post.copy(),
            self.degenerate_columns,
        )


def vdsp_delta(w, v_pre, lr: float, w_max: float = 1.0):
    """Multiplicative VDSP weight change for weight ``w`` and presynaptic potential ``v_pre``."""
    w = np.asarray(w, dtype=float)
    v_pre = np.asarray(v_pre, dtype=float)
    pot = (w_max - w) * np.expm1(-v_pre) * lr
    dep = -w * np.expm1(v_pre) * lr
    dw = np.where(v_pre < 0, pot, np.where(v_pre > 0, dep, 0.0))
    return dw.item() if dw.ndim == 0 else dw


def vdsp_additive_delta(w, v_pre, lr: float):
    """Weight-independent VDSP change; ``w`` is accepted for signature symmetry and ignored."""
    v_pre = np.asarray(v_pre, dtype=float)
    dw = np.where(v_pre < 0, np.expm1(-v_pre), np.where(v_pre > 0, -np.expm1(v_pre), 0.0)) * lr
    if np.ndim(w) and dw.ndim == 0:
        dw = np.broadcast_to(dw, np.shape(w))
    return dw.item() if dw.ndim == 0 else dw


def apply_post_spike(
    syn: SynapseMatrix, post_index: int, pre_potentials, cfg: PlasticityConfig
) -> SynapseMatrix:
    """Update column ``post_index`` in place from presynaptic potentials.

    Potentials must already be clamped to ``[v_reset, v_th]``. The additive
    variant clips into ``[0, w_max]``; the multiplicative one never needs to.
    """
    n_post = syn.weights.shape[1]
    if not 0 <= post_index < n_post:
        raise IndexError(f"post_index {post_index} out of range for {n_post} outputs")
    col = syn.weights[:, post_index]
    if cfg.rule == "vdsp_multiplicative":
        dw = vdsp_delta(col, pre_potentials, cfg.lr, cfg.w_max)
        syn.weights[:, post_index] = col + dw
    elif cfg.rule == "vdsp_additive":
        dw = vdsp_additive_delta(col, pre_potentials, cfg.lr)
        syn.weights[:, post_index] = np.clip(col + dw, 0.0, cfg.w_max)
    else:
        raise ValueError(f"apply_post_spike does not handle rule {cfg.rule!r}")
    syn.potentiation_count += int(np.count_nonzero(dw > 0))
    syn.depression_count += int(np.count_nonzero(dw < 0))
    syn.update_events += col.size
    return syn


def stdp_pair_step(
    syn: SynapseMatrix, pre_spikes, post_spikes, cfg: PlasticityConfig, dt: float
) -> SynapseMatrix:
    """One clock step of trace-based pair STDP, in place.

    Traces decay first. A presynaptic spike depresses its row by
    ``a_minus * trace_post`` and then bumps its trace; a postsynaptic spike
    potentiates its column by ``a_plus * trace_pre`` (which already includes
    this step's presynaptic spikes) and then bumps its trace.
    """
    pre = np.flatnonzero(pre_spikes)
    post = np.flatnonzero(post_spikes)
    syn.trace_pre *= np.exp(-dt / cfg.stdp.tau_plus)
    syn.trace_post *= np.exp(-dt / cfg.stdp.tau_minus)
    w = syn.weights
    n_pre, n_post = w.shape
    if pre.size:
        dw = -cfg.a_minus * syn.trace_post
        w[pre, :] = np.clip(w[pre, :] + dw, 0.0, cfg.w_max)
        syn.depression_count += pre.size * int(np.count_nonzero(dw))
        syn.update_events += pre.size * n_post
        syn.trace_pre[pre] += 1.0
    if post.size:
        dw = cfg.a_plus * syn.trace_pre
        w[:, post] = np.clip(w[:, post] + dw[:, None], 0.0, cfg.w_max)
        syn.potentiation_count += post.size * int(np.count_nonzero(dw))
        syn.update_events += post.size * n_pre
        syn.trace_post[post] += 1.0
    return syn


def normalize_columns(syn: SynapseMatrix, target_sum: float) -> SynapseMatrix:
    """Rescale every column to sum to ``target_sum``; all-zero columns are left alone."""
    if not target_sum > 0:
        raise ValueError("target_sum must be positive")
    sums = syn.weights.sum(axis=0)
    zero = sums == 0
    if zero.any():
        syn.degenerate_columns = True
        warnings.warn(f"{int(zero.sum())} all-zero column(s) skipped during normalization")
    scale = np.where(zero, 1.0, target_sum / np.where(zero, 1.0, sums))
    syn.weights *= scale
    return syn
