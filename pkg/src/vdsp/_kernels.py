"""Compiled inner loop for presenting one sample to the network.

Mirrors ``network.step`` operation for operation (same decay constants, same
summation order) so the two paths agree to the last bit on spike trains.
"""
import math

import numpy as np
from numba import njit

RULE_VDSP_MULT = 0
RULE_VDSP_ADD = 1
RULE_STDP = 2

# counters layout
POT, DEP, EVENTS = 0, 1, 2

_EPS = 1e-6


@njit(cache=True)
def run_sample(
    drive, n_steps, dt,
    in_v, in_ref, out_v, out_ref, out_n, clamp,
    W, trace_pre, trace_post, counters, out_counts,
    in_decay, in_bias, in_vreset, in_vth, in_tref,
    out_decay, out_vreset, out_vth, out_tref, n_decay, inc_n,
    g_syn, clamp_ms, single_winner, adapt, learn, rule, lr, w_max,
    a_plus, a_minus, pre_decay, post_decay,
    rec_in, rec_out, record,
):
    n_in, n_out = W.shape
    spk_idx = np.empty(n_in, np.int64)
    cur = np.empty(n_out)
    out_spk = np.zeros(n_out, np.bool_)
    ref_eps = _EPS * dt
    per_step = drive.shape[0] > 1
    for t in range(n_steps):
        row = t if per_step else 0
        # (1) input LIF population
        n_spk = 0
        for i in range(n_in):
            if in_ref[i] > ref_eps:
                in_v[i] = in_vreset
                r = in_ref[i] - dt
                in_ref[i] = r if r > 0.0 else 0.0
            else:
                u = drive[row, i] + in_bias
                v = u + (in_v[i] - u) * in_decay
                if v >= in_vth:
                    in_v[i] = in_vreset
                    in_ref[i] = in_tref
                    spk_idx[n_spk] = i
                    n_spk += 1
                    if record:
                        rec_in[t, i] = True
                else:
                    in_v[i] = v
                    in_ref[i] = 0.0
        # (2) impulse synaptic current, fixed summation order
        for j in range(n_out):
            cur[j] = 0.0
        for k in range(n_spk):
            i = spk_idx[k]
            for j in range(n_out):
                cur[j] += W[i, j]
        # (3) output ALIF population with WTA clamp
        any_out = False
        best = -1
        for j in range(n_out):
            out_spk[j] = False
            n = out_n[j] * n_decay if adapt else 0.0
            out_n[j] = n
            if clamp[j] > ref_eps:
                out_v[j] = 0.0
                c = clamp[j] - dt
                clamp[j] = c if c > 0.0 else 0.0
                r = out_ref[j] - dt
                out_ref[j] = r if r > 0.0 else 0.0
            elif out_ref[j] > ref_eps:
                out_v[j] = out_vreset
                r = out_ref[j] - dt
                out_ref[j] = r if r > 0.0 else 0.0
            else:
                u = g_syn * cur[j] - n
                v = u + (out_v[j] - u) * out_decay
                out_v[j] = v
                out_ref[j] = 0.0
                if v >= out_vth:
                    out_spk[j] = True
                    any_out = True
                    if best < 0 or v > out_v[best]:
                        best = j
        if any_out:
            for j in range(n_out):
                if not out_spk[j]:
                    continue
                if single_winner and j != best:
                    # losing crossers are inhibited in the same step
                    out_spk[j] = False
                    out_v[j] = 0.0
                    continue
                out_v[j] = out_vreset
                out_ref[j] = out_tref
                out_counts[j] += 1
                if adapt:
                    out_n[j] += inc_n
                if record:
                    rec_out[t, j] = True
        # (4) lateral inhibition
        if any_out:
            for j in range(n_out):
                if out_spk[j]:
                    for k in range(n_out):
                        if k != j:
                            clamp[k] = clamp_ms
        if not learn:
            continue
        # (5) plasticity
        if rule == RULE_STDP:
            for i in range(n_in):
                trace_pre[i] *= pre_decay
            for j in range(n_out):
                trace_post[j] *= post_decay
            for k in range(n_spk):
                i = spk_idx[k]
                for j in range(n_out):
                    dw = -a_minus * trace_post[j]
                    if dw != 0.0:
                        counters[DEP] += 1
                    w = W[i, j] + dw
                    W[i, j] = min(max(w, 0.0), w_max)
                counters[EVENTS] += n_out
                trace_pre[i] += 1.0
            if any_out:
                for j in range(n_out):
                    if out_spk[j]:
                        for i in range(n_in):
                            dw = a_plus * trace_pre[i]
                            if dw != 0.0:
                                counters[POT] += 1
                            w = W[i, j] + dw
                            W[i, j] = min(max(w, 0.0), w_max)
                        counters[EVENTS] += n_in
                        trace_post[j] += 1.0
        elif any_out:
            for j in range(n_out):
                if not out_spk[j]:
                    continue
                for i in range(n_in):
                    v = min(max(in_v[i], in_vreset), in_vth)
                    w = W[i, j]
                    if v < 0.0:
                        if rule == RULE_VDSP_MULT:
                            dw = (w_max - w) * math.expm1(-v) * lr
                        else:
                            dw = math.expm1(-v) * lr
                    elif v > 0.0:
                        if rule == RULE_VDSP_MULT:
                            dw = -w * math.expm1(v) * lr
                        else:
                            dw = -math.expm1(v) * lr
                    else:
                        dw = 0.0
                    if dw > 0.0:
                        counters[POT] += 1
                    elif dw < 0.0:
                        counters[DEP] += 1
                    if rule == RULE_VDSP_MULT:
                        W[i, j] = w + dw
                    else:
                        W[i, j] = min(max(w + dw, 0.0), w_max)
                counters[EVENTS] += n_in
