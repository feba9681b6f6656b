"""Leaky integrate-and-fire (LIF) and adaptive LIF neuron populations.

Integration is exact per step under a zero-order hold on the drive::

    v' = u + (v - u) * exp(-dt / tau_m),    u = I + b (- n for ALIF)

Step order: decay adaptation, integrate (or hold if refractory), threshold
test, then on spike reset ``v``, start the refractory clock and bump ``n``.
All functions accept scalars or numpy arrays for the state fields, so a whole
population advances in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Refractory clocks are compared against this fraction of dt so that float
# countdowns like 2.0 - 200 * 0.01 do not leave a phantom extra step.
_REFRAC_EPS = 1e-6


@dataclass(frozen=True)
class NeuronParams:
    """Parameters shared by a neuron population.

    Potentials are dimensionless (the "volts" of the rate-free model), times
    are in ms. ``tau_n`` and ``inc_n`` only matter for ALIF populations.
    """

    tau_m: float = 30.0
    v_rest: float = 0.0
    v_reset: float = -1.0
    v_th: float = 1.0
    t_ref: float = 5.0
    bias: float = 0.0
    tau_n: float = 1000.0
    inc_n: float = 0.0

    def __post_init__(self):
        if not self.v_reset <= self.v_rest < self.v_th:
            raise ValueError(
                f"need v_reset <= v_rest < v_th, got {self.v_reset}, {self.v_rest}, {self.v_th}"
            )
        if self.tau_m <= 0:
            raise ValueError("tau_m must be positive")
        if self.t_ref < 0:
            raise ValueError("t_ref must be non-negative")
        if self.tau_n <= 0:
            raise ValueError("tau_n must be positive")


# Default populations: biased LIF inputs, adaptive outputs.
INPUT_PARAMS = NeuronParams(tau_m=30.0, v_rest=0.0, v_reset=-1.0, v_th=1.0, t_ref=5.0, bias=0.5)
OUTPUT_PARAMS = NeuronParams(
    tau_m=30.0, v_rest=0.0, v_reset=0.0, v_th=1.0, t_ref=5.0, bias=0.0, tau_n=1000.0, inc_n=0.01
)


@dataclass(frozen=True)
class LifState:
    v: np.ndarray | float
    refrac_remaining: np.ndarray | float = 0.0


@dataclass(frozen=True)
class AlifState(LifState):
    n: np.ndarray | float = 0.0


def lif_init(size: int, params: NeuronParams) -> LifState:
    return LifState(v=np.full(size, params.v_rest), refrac_remaining=np.zeros(size))


def alif_init(size: int, params: NeuronParams) -> AlifState:
    return AlifState(v=np.full(size, params.v_rest), refrac_remaining=np.zeros(size), n=np.zeros(size))


def _integrate(v, refrac, u, params: NeuronParams, dt: float):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite input current")
    v = np.asarray(v, dtype=float)
    refrac = np.asarray(refrac, dtype=float)
    refractory = refrac > _REFRAC_EPS * dt
    v_new = u + (v - u) * math.exp(-dt / params.tau_m)
    spiked = ~refractory & (v_new >= params.v_th)
    v_new = np.where(refractory | spiked, params.v_reset, v_new)
    refrac_new = np.where(refractory, np.maximum(refrac - dt, 0.0), 0.0)
    refrac_new = np.where(spiked, params.t_ref, refrac_new)
    return _unwrap(v_new), _unwrap(refrac_new), _unwrap(spiked)


def _unwrap(x):
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


def lif_step(state: LifState, params: NeuronParams, input_current, dt: float):
    """Advance a LIF population by one step of ``dt`` ms.

    Returns ``(new_state, spiked)``. Raises ``ValueError`` on non-finite input,
    which almost always means the encoder produced garbage.
    """
    u = np.asarray(input_current, dtype=float) + params.bias
    v, refrac, spiked = _integrate(state.v, state.refrac_remaining, u, params, dt)
    return LifState(v=v, refrac_remaining=refrac), spiked


def alif_step(state: AlifState, params: NeuronParams, input_current, dt: float):
    """Advance an adaptive LIF population by one step.

    The adaptation variable first decays by ``exp(-dt/tau_n)``, is subtracted
    from the drive, and is incremented by ``inc_n`` after a spike.
    """
    n = np.asarray(state.n, dtype=float) * math.exp(-dt / params.tau_n)
    u = np.asarray(input_current, dtype=float) + params.bias - n
    v, refrac, spiked = _integrate(state.v, state.refrac_remaining, u, params, dt)
    n = _unwrap(n + params.inc_n * np.asarray(spiked))
    return AlifState(v=v, refrac_remaining=refrac, n=n), spiked


def hold(state: LifState, v: float, dt: float) -> LifState:
    """Pin the potential to ``v`` for one step while refractory time elapses."""
    refrac = np.maximum(np.asarray(state.refrac_remaining, dtype=float) - dt, 0.0)
    return replace(state, v=_unwrap(np.full_like(refrac, v)), refrac_remaining=_unwrap(refrac))


def time_to_spike(v0: float, u: float, params: NeuronParams) -> float:
    """Continuous-time first threshold crossing from ``v0`` under constant drive ``u``.

    Returns ``math.inf`` when ``u`` cannot reach threshold. The refractory
    period is not included.
    """
    if u <= params.v_th:
        return math.inf
    if v0 >= params.v_th:
        return 0.0
    return params.tau_m * math.log((u - v0) / (u - params.v_th))
