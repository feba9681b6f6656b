"""Closed-form link between presynaptic membrane potential and spike timing.

For a LIF neuron driven by a constant current ``I > v_th`` (no bias), the
potential at any moment pins down how long ago the neuron last fired and how
long until it fires next. Reading the potential at a postsynaptic spike is
therefore enough to evaluate an exponential STDP window, which is what these
functions compute. They double as oracles for the simulator.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RESET = "reset"  # presynaptic neuron fired recently: potentiation side
THRESHOLD = "threshold"  # presynaptic neuron about to fire: depression side

CSV_COLUMNS = ("v", "abs_dt_ms", "branch", "delta_w", "refractory_flag")


@dataclass(frozen=True)
class WindowParams:
    i_drive: float = 1.5
    tau_m: float = 30.0
    tau_plus: float = 30.0
    tau_minus: float = 30.0
    v_th: float = 1.0
    v_reset: float = -1.0

    def __post_init__(self):
        if not self.i_drive > self.v_th:
            raise ValueError("i_drive must exceed v_th for the presynaptic neuron to fire")
        if not self.v_reset < self.v_th:
            raise ValueError("v_reset must lie below v_th")


def membrane_closed_form(v0, i_drive: float, tau_m: float, t):
    """Subthreshold potential ``I + (v0 - I) * exp(-t / tau_m)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    out = i_drive + (np.asarray(v0, dtype=float) - i_drive) * np.exp(-t / tau_m)
    return out.item() if out.ndim == 0 else out


def interspike_interval(v_at_pre: float, v_at_post: float, p: WindowParams) -> float:
    """Signed ``t_post - t_pre`` given the potentials at the two spike times."""
    ratio = (v_at_pre - p.i_drive) / (v_at_post - p.i_drive)
    if not ratio > 0:
        raise ValueError(f"inconsistent potentials {v_at_pre}, {v_at_post} for drive {p.i_drive}")
    return p.tau_m * math.log(ratio)


def _branch_logs(v, p: WindowParams):
    v = np.asarray(v, dtype=float)
    if np.any(v < p.v_reset) or np.any(v >= p.v_th):
        raise ValueError(f"potential outside [{p.v_reset}, {p.v_th})")
    log_th = np.abs(np.log((p.v_th - p.i_drive) / (v - p.i_drive)))
    log_reset = np.abs(np.log((p.v_reset - p.i_drive) / (v - p.i_drive)))
    return log_th, log_reset


def abs_delta_t(v_post_time, p: WindowParams):
    """Distance in ms to the nearest presynaptic spike, past or future."""
    log_th, log_reset = _branch_logs(v_post_time, p)
    out = p.tau_m * np.minimum(log_th, log_reset)
    return out.item() if out.ndim == 0 else out


def signed_delta_t(v_post_time, p: WindowParams):
    """``abs_delta_t`` with a sign: positive on the reset branch, negative on the threshold branch.

    On an exact tie the threshold branch wins.
    """
    log_th, log_reset = _branch_logs(v_post_time, p)
    out = np.where(log_th <= log_reset, -p.tau_m * log_th, p.tau_m * log_reset)
    return out.item() if out.ndim == 0 else out


def branch_boundary(p: WindowParams) -> float:
    """Potential where both branches are equally close: ``I - sqrt((I - v_reset)(I - v_th))``."""
    return p.i_drive - math.sqrt((p.i_drive - p.v_reset) * (p.i_drive - p.v_th))


def stdp_window(delta_t, a_plus: float = 1.0, a_minus: float = 1.0, tau_plus: float = 20.0, tau_minus: float = 20.0):
    """Exponential pair window; ``delta_t = t_post - t_pre``.

    Non-negative ``delta_t`` (pre at or before post) potentiates, so a
    presynaptic spike coincident with the postsynaptic one sits at the peak.
    """
    dt = np.asarray(delta_t, dtype=float)
    out = np.where(dt >= 0, a_plus * np.exp(-dt / tau_plus), -a_minus * np.exp(dt / tau_minus))
    return out.item() if out.ndim == 0 else out


def vdsp_equivalent_window(v_post_time, p: WindowParams):
    """STDP window value as a direct function of the presynaptic potential (``v_th=1, v_reset=-1``).

    Potentiation ``((v - I) / (-1 - I)) ** (tau_m / tau_plus)`` below
    ``I - sqrt(I**2 - 1)``, depression ``-((1 - I) / (v - I)) ** (tau_m / tau_minus)``
    otherwise. Unit amplitudes.
    """
    v = np.asarray(v_post_time, dtype=float)
    i = p.i_drive
    if not i > 1:
        raise ValueError("closed form requires I > 1")
    if np.any(v < -1) or np.any(v >= 1):
        raise ValueError("potential outside [-1, 1)")
    pot = ((v - i) / (-1.0 - i)) ** (p.tau_m / p.tau_plus)
    dep = -(((1.0 - i) / (v - i)) ** (p.tau_m / p.tau_minus))
    out = np.where(i - math.sqrt(i * i - 1.0) > v, pot, dep)
    return out.item() if out.ndim == 0 else out


def potential_at(delta_t, p: WindowParams):
    """Inverse of ``signed_delta_t``: the potential seen at a given signed spike-time difference."""
    dt = np.asarray(delta_t, dtype=float)
    out = np.where(
        dt > 0,
        p.i_drive + (p.v_reset - p.i_drive) * np.exp(-dt / p.tau_m),
        p.i_drive + (p.v_th - p.i_drive) * np.exp(-dt / p.tau_m),
    )
    return out.item() if out.ndim == 0 else out


def window_scan(p: WindowParams, grid, t_ref: float = 0.0, grid_kind: str = "v") -> list[dict]:
    """Plot-ready rows ``(v, abs_dt_ms, branch, delta_w, refractory_flag)``.

    ``grid`` holds potentials (``grid_kind="v"``) or signed spike-time
    differences in ms (``grid_kind="dt"``). ``delta_w`` uses unit amplitudes
    and works for any ``v_th``/``v_reset``. Rows within ``t_ref`` of a past
    presynaptic spike are flagged: a simulated neuron would still sit at
    ``v_reset`` there, flattening the window into a plateau.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty grid")
    if grid_kind == "dt":
        v = potential_at(grid, p)
        valid = (v >= p.v_reset) & (v < p.v_th)
        v = np.atleast_1d(v)[np.atleast_1d(valid)]
    elif grid_kind == "v":
        v = grid
    else:
        raise ValueError(f"grid_kind must be 'v' or 'dt', got {grid_kind!r}")
    log_th, log_reset = _branch_logs(v, p)
    on_reset = np.atleast_1d(log_reset < log_th)
    sdt = np.atleast_1d(signed_delta_t(v, p))
    # dt == 0 on the reset branch is the peak of the potentiation side
    dw = np.where(on_reset, np.exp(-np.abs(sdt) / p.tau_plus), -np.exp(-np.abs(sdt) / p.tau_minus))
    rows = []
    for vi, s, w, r in zip(v, sdt, dw, on_reset):
        branch = RESET if r else THRESHOLD
        rows.append(
            {
                "v": float(vi),
                "abs_dt_ms": abs(float(s)),
                "branch": branch,
                "delta_w": float(w),
                "refractory_flag": bool(branch == RESET and abs(s) < t_ref),
            }
        )
    return rows


def potentiation_halfwidth(rows: list[dict], frac: float = 0.01) -> float:
    """Largest ``|dt|`` on the potentiation side where the window is still above ``frac`` of its peak."""
    pot = [r for r in rows if r["branch"] == RESET and r["delta_w"] > 0]
    if not pot:
        return 0.0
    peak = max(r["delta_w"] for r in pot)
    return max(r["abs_dt_ms"] for r in pot if r["delta_w"] >= frac * peak)


def write_window_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({**r, "refractory_flag": int(r["refractory_flag"])})
    return path
