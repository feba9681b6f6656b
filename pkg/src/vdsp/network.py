"""Two-layer winner-take-all network: LIF inputs fully connected to ALIF outputs.

Each input spike injects ``g_syn * w`` into every output for exactly one step
(an instantaneous synapse). When an output fires, every other output is
clamped to ``v = 0`` for ``wta_clamp_ms``. Plasticity runs in the same step as
the postsynaptic spike and reads input potentials after that step's resets.

``step`` is the readable numpy reference; ``present_sample`` runs the same
dynamics through a compiled kernel and is what training uses.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .neuron import (
    INPUT_PARAMS,
    OUTPUT_PARAMS,
    AlifState,
    LifState,
    NeuronParams,
    alif_init,
    alif_step,
    lif_init,
    lif_step,
)
from .plasticity import PlasticityConfig, SynapseMatrix, apply_post_spike, normalize_columns, stdp_pair_step

_EPS = 1e-6
WTA_TIEBREAKS = ("max_potential", "all")

_RULE_CODES = {
    "vdsp_multiplicative": _kernels.RULE_VDSP_MULT,
    "vdsp_additive": _kernels.RULE_VDSP_ADD,
    "stdp_pair": _kernels.RULE_STDP,
}


@dataclass
class NetworkConfig:
    n_inputs: int = 784
    n_outputs: int = 10
    input_params: NeuronParams = INPUT_PARAMS
    output_params: NeuronParams = OUTPUT_PARAMS
    plasticity: PlasticityConfig = field(default_factory=PlasticityConfig)
    wta_clamp_ms: float = 10.0
    # "max_potential": of several outputs crossing threshold in one step only
    # the most depolarized fires; "all": every crosser fires
    wta_tiebreak: str = "max_potential"
    # each presynaptic spike adds g_syn * w to the postsynaptic drive for one step
    g_syn: float = 0.5
    dt: float = 5.0
    learning_enabled: bool = True
    adaptation_enabled: bool = True
    # adaptation carries over between samples unless this is set
    reset_adaptation_per_sample: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.g_syn > 0:
            raise ValueError("g_syn must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.wta_tiebreak not in WTA_TIEBREAKS:
            raise ValueError(f"wta_tiebreak must be one of {WTA_TIEBREAKS}")
        steps = self.wta_clamp_ms / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("wta_clamp_ms must be a multiple of dt")


@dataclass
class NetworkState:
    inputs: LifState
    outputs: AlifState
    clamp_remaining: np.ndarray
    synapses: SynapseMatrix
    step_index: int = 0

    @property
    def weights(self) -> np.ndarray:
        return self.synapses.weights


@dataclass
class StepResult:
    input_spikes: np.ndarray
    output_spikes: np.ndarray


@dataclass
class SampleResult:
    spike_counts: np.ndarray
    input_raster: np.ndarray | None = None
    output_raster: np.ndarray | None = None


def build_network(cfg: NetworkConfig, rng: np.random.Generator | None = None) -> NetworkState:
    """Fresh network with ``Uniform[0, 1)`` weights drawn from ``rng`` (or ``cfg.seed``)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    weights = rng.uniform(0.0, 1.0, size=(cfg.n_inputs, cfg.n_outputs))
    return NetworkState(
        inputs=lif_init(cfg.n_inputs, cfg.input_params),
        outputs=alif_init(cfg.n_outputs, cfg.output_params),
        clamp_remaining=np.zeros(cfg.n_outputs),
        synapses=SynapseMatrix(weights),
    )


def reset_dynamics(state: NetworkState, cfg: NetworkConfig) -> NetworkState:
    """Return membrane, refractory, clamp and adaptation state to rest; weights untouched."""
    state.inputs = lif_init(cfg.n_inputs, cfg.input_params)
    state.outputs = alif_init(cfg.n_outputs, cfg.output_params)
    state.clamp_remaining = np.zeros(cfg.n_outputs)
    return state


def step(state: NetworkState, input_drive, cfg: NetworkConfig) -> tuple[NetworkState, StepResult]:
    """Advance the network by one ``dt`` (reference implementation).

    Mutates ``state.synapses`` in place when learning is enabled.
    """
    dt = cfg.dt
    drive = np.asarray(input_drive, dtype=float)
    inputs, in_spk = lif_step(state.inputs, cfg.input_params, drive, dt)

    w = state.synapses.weights
    current = cfg.g_syn * w[np.flatnonzero(in_spk)].sum(axis=0)

    op = cfg.output_params
    outputs = state.outputs
    if not cfg.adaptation_enabled:
        op = replace(op, inc_n=0.0)
        outputs = replace(outputs, n=np.zeros(cfg.n_outputs))
    clamped = state.clamp_remaining > _EPS * dt
    stepped, out_spk = alif_step(outputs, op, current, dt)
    n_decayed = np.asarray(outputs.n) * math.exp(-dt / op.tau_n)
    refrac_held = np.maximum(np.asarray(outputs.refrac_remaining) - dt, 0.0)
    out_spk = np.asarray(out_spk) & ~clamped
    v_out = np.where(clamped, 0.0, stepped.v)
    refrac_out = np.where(clamped, refrac_held, stepped.refrac_remaining)
    n_out = np.where(clamped, n_decayed, stepped.n)
    if cfg.wta_tiebreak == "max_potential" and np.count_nonzero(out_spk) > 1:
        # re-derive the pre-reset potentials to pick the most depolarized crosser
        u = current - n_decayed
        raw = u + (np.asarray(outputs.v) - u) * math.exp(-dt / op.tau_m)
        cand = np.flatnonzero(out_spk)
        winner = cand[np.argmax(raw[cand])]
        losers = out_spk.copy()
        losers[winner] = False
        out_spk[:] = False
        out_spk[winner] = True
        v_out = np.where(losers, 0.0, v_out)
        refrac_out = np.where(losers, 0.0, refrac_out)
        n_out = np.where(losers, n_decayed, n_out)
    outputs = AlifState(v=v_out, refrac_remaining=refrac_out, n=n_out)
    clamp = np.where(clamped, np.maximum(state.clamp_remaining - dt, 0.0), state.clamp_remaining)
    if out_spk.any():
        # each spiker clamps every other output, so only a lone spiker escapes
        spikers = np.flatnonzero(out_spk)
        others = np.ones(cfg.n_outputs, dtype=bool)
        if spikers.size == 1:
            others[spikers[0]] = False
        clamp = np.where(others, cfg.wta_clamp_ms, clamp)

    if cfg.learning_enabled:
        pcfg = cfg.plasticity
        if pcfg.rule == "stdp_pair":
            stdp_pair_step(state.synapses, in_spk, out_spk, pcfg, dt)
        else:
            ip = cfg.input_params
            v_pre = np.clip(inputs.v, ip.v_reset, ip.v_th)
            for j in np.flatnonzero(out_spk):
                apply_post_spike(state.synapses, int(j), v_pre, pcfg)

    state.inputs = inputs
    state.outputs = outputs
    state.clamp_remaining = clamp
    state.step_index += 1
    return state, StepResult(np.asarray(in_spk, dtype=bool), out_spk)


def present_sample(
    state: NetworkState, drive: np.ndarray, n_steps: int, cfg: NetworkConfig, record: bool = False
) -> SampleResult:
    """Run ``n_steps`` with the compiled kernel; state carries over, nothing is reset.

    ``drive`` has shape ``(n_steps, n_inputs)`` or ``(1, n_inputs)`` for a
    drive held constant over the whole presentation.
    """
    drive = np.ascontiguousarray(drive, dtype=np.float64)
    if drive.ndim != 2 or drive.shape[1] != cfg.n_inputs or drive.shape[0] not in (1, n_steps):
        raise ValueError(f"drive shape {drive.shape} incompatible with {n_steps} steps")
    if not np.isfinite(drive).all():
        raise ValueError("non-finite input drive")
    if cfg.reset_adaptation_per_sample:
        state.outputs = replace(state.outputs, n=np.zeros(cfg.n_outputs))
    ip, op, pcfg = cfg.input_params, cfg.output_params, cfg.plasticity
    syn = state.synapses
    ins, outs = state.inputs, state.outputs
    # the kernel writes in place; make sure every buffer is an owned float array
    in_v = np.array(ins.v, dtype=np.float64)
    in_ref = np.array(ins.refrac_remaining, dtype=np.float64)
    out_v = np.array(outs.v, dtype=np.float64)
    out_ref = np.array(outs.refrac_remaining, dtype=np.float64)
    out_n = np.array(outs.n, dtype=np.float64)
    clamp = np.array(state.clamp_remaining, dtype=np.float64)
    counters = np.array([syn.potentiation_count, syn.depression_count, syn.update_events], dtype=np.int64)
    counts = np.zeros(cfg.n_outputs, dtype=np.int64)
    if record:
        rec_in = np.zeros((n_steps, cfg.n_inputs), dtype=np.bool_)
        rec_out = np.zeros((n_steps, cfg.n_outputs), dtype=np.bool_)
    else:
        rec_in = np.zeros((1, 1), dtype=np.bool_)
        rec_out = np.zeros((1, 1), dtype=np.bool_)
    if not syn.weights.flags.c_contiguous:
        syn.weights = np.ascontiguousarray(syn.weights)
    _kernels.run_sample(
        drive, n_steps, cfg.dt,
        in_v, in_ref, out_v, out_ref, out_n, clamp,
        syn.weights, syn.trace_pre, syn.trace_post, counters, counts,
        math.exp(-cfg.dt / ip.tau_m), ip.bias, ip.v_reset, ip.v_th, ip.t_ref,
        math.exp(-cfg.dt / op.tau_m), op.v_reset, op.v_th, op.t_ref,
        math.exp(-cfg.dt / op.tau_n), op.inc_n,
        cfg.g_syn, cfg.wta_clamp_ms, cfg.wta_tiebreak == "max_potential", cfg.adaptation_enabled, cfg.learning_enabled,
        _RULE_CODES[pcfg.rule], pcfg.lr, pcfg.w_max,
        pcfg.a_plus, pcfg.a_minus,
        math.exp(-cfg.dt / pcfg.stdp.tau_plus), math.exp(-cfg.dt / pcfg.stdp.tau_minus),
        rec_in, rec_out, record,
    )
    state.inputs = LifState(v=in_v, refrac_remaining=in_ref)
    state.outputs = AlifState(v=out_v, refrac_remaining=out_ref, n=out_n)
    state.clamp_remaining = clamp
    syn.potentiation_count, syn.depression_count, syn.update_events = (int(c) for c in counters)
    state.step_index += n_steps
    if cfg.learning_enabled and pcfg.rule == "stdp_pair" and pcfg.norm_target is not None:
        normalize_columns(syn, pcfg.norm_target)
        np.clip(syn.weights, 0.0, pcfg.w_max, out=syn.weights)
    return SampleResult(counts, rec_in if record else None, rec_out if record else None)


def present_sample_reference(
    state: NetworkState, drive: np.ndarray, n_steps: int, cfg: NetworkConfig
) -> SampleResult:
    """Same contract as ``present_sample`` but stepping through ``step``."""
    drive = np.asarray(drive, dtype=float)
    if cfg.reset_adaptation_per_sample:
        state.outputs = replace(state.outputs, n=np.zeros(cfg.n_outputs))
    counts = np.zeros(cfg.n_outputs, dtype=np.int64)
    rec_in = np.zeros((n_steps, cfg.n_inputs), dtype=bool)
    rec_out = np.zeros((n_steps, cfg.n_outputs), dtype=bool)
    for t in range(n_steps):
        row = drive[t] if drive.shape[0] > 1 else drive[0]
        state, res = step(state, row, cfg)
        counts += res.output_spikes
        rec_in[t] = res.input_spikes
        rec_out[t] = res.output_spikes
    pcfg = cfg.plasticity
    if cfg.learning_enabled and pcfg.rule == "stdp_pair" and pcfg.norm_target is not None:
        normalize_columns(state.synapses, pcfg.norm_target)
        np.clip(state.synapses.weights, 0.0, pcfg.w_max, out=state.synapses.weights)
    return SampleResult(counts, rec_in, rec_out)


# --- weight snapshots --------------------------------------------------------

SNAPSHOT_MAGIC = b"VDSW"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


class SnapshotError(ValueError):
    pass


def save_snapshot(path, weights: np.ndarray, step_index: int = 0) -> Path:
    """Write ``weights`` as a versioned header followed by row-major little-endian float64."""
    path = Path(path)
    weights = np.ascontiguousarray(weights, dtype="<f8")
    n_in, n_out = weights.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n_in, n_out, int(step_index)))
        fh.write(weights.tobytes(order="C"))
    return path


def load_snapshot(path) -> tuple[np.ndarray, int]:
    """Read a snapshot written by ``save_snapshot``; returns ``(weights, step_index)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, n_in, n_out, step_index = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version}")
    expected = _HEADER.size + 8 * n_in * n_out
    if len(data) != expected:
        raise SnapshotError(f"{path}: expected {expected} bytes, found {len(data)}")
    weights = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n_in, n_out).copy()
    return weights, step_index
