from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vdsp.encoding import EncodingConfig, encode_sample
from vdsp.network import (
    NetworkConfig,
    SnapshotError,
    build_network,
    load_snapshot,
    present_sample,
    present_sample_reference,
    reset_dynamics,
    save_snapshot,
    step,
)
from vdsp.plasticity import PlasticityConfig


def digit(seed=0):
    """Blob-like synthetic image: a bright bar on black."""
    rng = np.random.default_rng(seed)
    img = np.zeros((28, 28), dtype=np.uint8)
    r = rng.integers(4, 20)
    img[r : r + 6, 8:20] = rng.integers(150, 256, size=(6, 12))
    return img


def test_build_network():
    cfg = NetworkConfig()
    a = build_network(cfg, np.random.default_rng(7))
    b = build_network(cfg, np.random.default_rng(7))
    assert a.weights.shape == (784, 10)
    assert a.weights.min() >= 0 and a.weights.max() <= 1
    assert 0.48 <= a.weights.mean() <= 0.52
    np.testing.assert_array_equal(a.weights, b.weights)
    assert np.all(a.inputs.v == 0) and np.all(a.outputs.v == 0)


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(g_syn=0)
    with pytest.raises(ValueError):
        NetworkConfig(wta_clamp_ms=7)
    with pytest.raises(ValueError):
        NetworkConfig(wta_tiebreak="random")


def test_zero_drive_zero_weights_silent():
    cfg = NetworkConfig(input_params=replace(NetworkConfig().input_params, bias=0.0))
    st_ = build_network(cfg)
    st_.synapses.weights[:] = 0
    for _ in range(20):
        st_, res = step(st_, np.zeros(784), cfg)
        assert not res.input_spikes.any() and not res.output_spikes.any()


def _force_output_spike(cfg):
    state = build_network(cfg, np.random.default_rng(0))
    state.synapses.weights[:] = 0.0
    state.synapses.weights[0, 3] = 1.0
    drive = np.zeros(784)
    drive[0] = 50.0
    return state, drive


def test_wta_clamp_two_steps():
    cfg = NetworkConfig(g_syn=100.0, learning_enabled=False)
    state, drive = _force_output_spike(cfg)
    state.outputs = replace(state.outputs, v=np.full(10, 0.4))
    state, res = step(state, drive, cfg)
    assert res.input_spikes[0] and res.output_spikes[3]
    assert res.output_spikes.sum() == 1
    others = np.arange(10) != 3
    quiet = np.zeros(784)
    for _ in range(2):
        state, res = step(state, quiet, cfg)
        assert np.all(state.outputs.v[others] == 0.0)
    assert np.all(state.clamp_remaining == 0)


def test_single_post_spike_update():
    cfg = NetworkConfig(g_syn=100.0, plasticity=PlasticityConfig(lr=0.01))
    state, drive = _force_output_spike(cfg)
    state.synapses.weights[:, 3] = 0.5
    state.inputs = replace(state.inputs, v=np.full(784, -1.0), refrac_remaining=np.full(784, 5.0))
    state.inputs.refrac_remaining[0] = 0.0
    state, res = step(state, drive, cfg)
    assert res.output_spikes[3]
    np.testing.assert_allclose(state.synapses.weights[:, 3], 0.5085914091422952, atol=1e-15)


def test_black_image_background_potential():
    cfg = NetworkConfig(learning_enabled=False)
    state = build_network(cfg, np.random.default_rng(0))
    res = present_sample_reference(state, np.zeros((1, 784)), 70, cfg)
    assert not res.input_raster.any()
    assert np.all(np.abs(state.inputs.v - 0.5) < 0.05)


def test_white_pixel_spike_count():
    cfg = NetworkConfig(learning_enabled=False)
    state = build_network(cfg, np.random.default_rng(0))
    drive = np.zeros((1, 784))
    drive[0, 100] = 1.0
    res = present_sample_reference(state, drive, 70, cfg)
    assert res.input_raster.shape == (70, 784)
    assert abs(int(res.input_raster[:, 100].sum()) - 6) <= 1


def test_present_sample_step_count():
    cfg = NetworkConfig()
    state = build_network(cfg)
    present_sample(state, encode_sample(digit(), EncodingConfig(), 350, 5).drive, 70, cfg)
    assert state.step_index == 70


@pytest.mark.parametrize("rule", ["vdsp_multiplicative", "vdsp_additive", "stdp_pair"])
@pytest.mark.parametrize("tiebreak", ["max_potential", "all"])
def test_kernel_matches_reference(rule, tiebreak):
    norm = 78.4 if rule == "stdp_pair" else None
    cfg = NetworkConfig(
        g_syn=0.5,
        wta_tiebreak=tiebreak,
        plasticity=PlasticityConfig(rule=rule, lr=0.01, norm_target=norm),
    )
    a = build_network(cfg, np.random.default_rng(1))
    b = build_network(cfg, np.random.default_rng(1))
    rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
    enc = EncodingConfig(mode="noisy", noise_sigma=0.1)
    fired = 0
    for k in range(6):
        sa = encode_sample(digit(k), enc, 350, 5, rng_a)
        sb = encode_sample(digit(k), enc, 350, 5, rng_b)
        ra = present_sample(a, sa.drive, sa.n_steps, cfg, record=True)
        rb = present_sample_reference(b, sb.drive, sb.n_steps, cfg)
        np.testing.assert_array_equal(ra.output_raster, rb.output_raster)
        np.testing.assert_array_equal(ra.input_raster, rb.input_raster)
        fired += int(ra.spike_counts.sum())
    assert fired > 0
    np.testing.assert_allclose(a.weights, b.weights, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.outputs.v, b.outputs.v, atol=1e-12)
    np.testing.assert_allclose(a.outputs.n, b.outputs.n, atol=1e-12)
    assert a.synapses.update_events == b.synapses.update_events
    assert a.synapses.potentiation_count == b.synapses.potentiation_count


def test_kernel_learns_something():
    cfg = NetworkConfig(g_syn=0.5, plasticity=PlasticityConfig(lr=0.01))
    state = build_network(cfg, np.random.default_rng(1))
    w0 = state.weights.copy()
    total = 0
    for k in range(5):
        s = encode_sample(digit(k), EncodingConfig(), 350, 5)
        total += present_sample(state, s.drive, s.n_steps, cfg).spike_counts.sum()
    assert total > 0
    assert not np.array_equal(w0, state.weights)
    assert state.synapses.update_events == 784 * total


def test_adaptation_off_keeps_n_zero():
    cfg = NetworkConfig(g_syn=0.5, adaptation_enabled=False)
    state = build_network(cfg, np.random.default_rng(1))
    s = encode_sample(digit(), EncodingConfig(), 350, 5)
    present_sample(state, s.drive, s.n_steps, cfg)
    assert np.all(state.outputs.n == 0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), g=st.floats(0.2, 3.0))
def test_wta_exclusivity(seed, g):
    cfg = NetworkConfig(g_syn=g, wta_tiebreak="all", learning_enabled=False)
    state = build_network(cfg, np.random.default_rng(seed))
    drive = encode_sample(digit(seed), EncodingConfig(), 350, 5).drive
    window = int(cfg.wta_clamp_ms / cfg.dt)
    since = np.full(10, 10**6)
    for _ in range(70):
        state, res = step(state, drive[0], cfg)
        spikers = np.flatnonzero(res.output_spikes)
        for j in range(10):
            # some *other* output spiked within the window
            recent = [k for k in range(10) if k != j and since[k] < window]
            if recent and not res.output_spikes[j]:
                assert state.outputs.v[j] == 0.0
        since += 1
        since[spikers] = 0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_weights_stay_bounded(seed):
    cfg = NetworkConfig(g_syn=1.0, plasticity=PlasticityConfig(lr=0.05))
    state = build_network(cfg, np.random.default_rng(seed))
    for k in range(3):
        s = encode_sample(digit(seed + k), EncodingConfig(), 350, 5)
        present_sample(state, s.drive, s.n_steps, cfg)
    assert state.weights.min() >= 0 and state.weights.max() <= 1


def test_update_count_accounting():
    """Same spike trains under both rules; VDSP touches a column per post spike, STDP adds a row per pre spike."""
    img = digit(3)
    counts = {}
    for rule in ("vdsp_multiplicative", "stdp_pair"):
        cfg = NetworkConfig(g_syn=0.5, plasticity=PlasticityConfig(rule=rule, lr=1e-12))
        state = build_network(cfg, np.random.default_rng(2))
        s = encode_sample(img, EncodingConfig(), 350, 5)
        r = present_sample(state, s.drive, s.n_steps, cfg, record=True)
        counts[rule] = (state.synapses.update_events, r.output_raster.copy(), r.input_raster.sum())
    vdsp, stdp = counts["vdsp_multiplicative"], counts["stdp_pair"]
    np.testing.assert_array_equal(vdsp[1], stdp[1])
    n_post = vdsp[1].sum()
    assert n_post > 0
    assert vdsp[0] == 784 * n_post
    assert stdp[0] == 784 * n_post + 10 * stdp[2]


def test_reset_dynamics_keeps_weights():
    cfg = NetworkConfig(g_syn=0.5)
    state = build_network(cfg, np.random.default_rng(0))
    s = encode_sample(digit(), EncodingConfig(), 350, 5)
    present_sample(state, s.drive, s.n_steps, cfg)
    w = state.weights.copy()
    reset_dynamics(state, cfg)
    np.testing.assert_array_equal(state.weights, w)
    assert np.all(state.inputs.v == 0) and np.all(state.outputs.n == 0)


def test_snapshot_roundtrip(tmp_path):
    w = np.random.default_rng(0).uniform(size=(784, 10))
    path = save_snapshot(tmp_path / "w.vdsw", w, 4_200_000)
    w2, idx = load_snapshot(path)
    assert idx == 4_200_000
    assert w2.tobytes() == w.tobytes()
    assert path.stat().st_size == 24 + 784 * 10 * 8


def test_snapshot_errors(tmp_path):
    path = save_snapshot(tmp_path / "w.vdsw", np.zeros((4, 2)))
    data = path.read_bytes()
    (tmp_path / "bad").write_bytes(b"XXXX" + data[4:])
    (tmp_path / "short").write_bytes(data[:-3])
    (tmp_path / "tiny").write_bytes(data[:5])
    for name in ("bad", "short", "tiny"):
        with pytest.raises(SnapshotError):
            load_snapshot(tmp_path / name)


def test_drive_shape_checked():
    cfg = NetworkConfig()
    with pytest.raises(ValueError):
        present_sample(build_network(cfg), np.zeros((3, 784)), 70, cfg)
    with pytest.raises(ValueError):
        present_sample(build_network(cfg), np.full((1, 784), np.nan), 70, cfg)
