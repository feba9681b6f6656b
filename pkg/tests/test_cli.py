import json
import struct

import numpy as np
import pytest
import yaml

from vdsp import experiments as ex
from vdsp.cli import main
from vdsp.config import ConfigError, ExperimentConfig, default_profile, extended_profile, from_dict, load_config
from vdsp.network import load_snapshot, save_snapshot


def write_idx(directory, n_train=40, n_test=20, seed=0):
    """Tiny MNIST lookalike: each class lights its own horizontal band."""
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    for prefix, n in (("train", n_train), ("t10k", n_test)):
        labels = (np.arange(n) % 10).astype(np.uint8)
        images = np.zeros((n, 28, 28), dtype=np.uint8)
        for k, c in enumerate(labels):
            images[k, 2 + 2 * c : 4 + 2 * c, 4:24] = rng.integers(200, 256, size=(2, 20))
        (directory / f"{prefix}-images-idx3-ubyte").write_bytes(
            struct.pack(">IIII", 0x803, n, 28, 28) + images.tobytes()
        )
        (directory / f"{prefix}-labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels.tobytes())
    return directory


@pytest.fixture
def tiny(tmp_path):
    data = write_idx(tmp_path / "mnist")
    cfg = from_dict(
        {
            "dataset_dir": str(data),
            "out_dir": str(tmp_path / "out"),
            "training": {"seeds": [0, 1]},
        }
    )
    path = cfg.dump(tmp_path / "cfg.yaml")
    return tmp_path, path, cfg


# --- config -----------------------------------------------------------------------


def test_default_profile_values():
    cfg = default_profile()
    net = cfg.network
    assert net.n_inputs == 784 and net.n_outputs == 10 and net.dt == 5 and net.wta_clamp_ms == 10
    assert net.input_params.bias == 0.5 and net.input_params.v_reset == -1
    assert net.output_params.inc_n == 0.01 and net.output_params.tau_n == 1000
    assert cfg.presentation.duration_ms == 350
    assert cfg.training.epochs == 1 and cfg.training.seeds == [0, 1, 2, 3, 4]
    ext = extended_profile()
    assert ext.network.n_outputs == 100 and ext.training.epochs == 3


def test_unknown_keys_rejected(tmp_path):
    for bad in (
        {"netwrok": {}},
        {"network": {"g_sin": 1.0}},
        {"network": {"plasticity": {"learning_rate": 0.1}}},
        {"network": {"output_params": {"inc": 0.1}}},
    ):
        with pytest.raises(ConfigError, match="unknown key"):
            from_dict(bad)


def test_type_and_value_errors():
    with pytest.raises(ConfigError):
        from_dict({"network": {"g_syn": "big"}})
    with pytest.raises(ConfigError):
        from_dict({"network": {"learning_enabled": 1}})
    with pytest.raises(ConfigError):
        from_dict({"network": {"g_syn": -1.0}})
    with pytest.raises(ConfigError):
        from_dict({"network": {"output_params": {"v_th": -5.0}}})


def test_config_roundtrip(tmp_path):
    cfg = from_dict({"network": {"n_outputs": 50, "plasticity": {"lr": 0.002}}, "encoding": {"mode": "poisson"}})
    back = load_config(cfg.dump(tmp_path / "c.yaml"))
    assert back == cfg
    assert back.network.plasticity.lr == 0.002


def test_profile_key(tmp_path):
    (tmp_path / "c.yaml").write_text(yaml.safe_dump({"profile": "extended", "training": {"epochs": 2}}))
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.network.n_outputs == 100 and cfg.training.epochs == 2


def test_bad_yaml(tmp_path):
    (tmp_path / "c.yaml").write_text("network: [unclosed")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.yaml")


# --- subcommands ----------------------------------------------------------------------


def test_train_eval_outputs_and_determinism(tiny, capsys):
    tmp, cfg_path, _ = tiny
    names = ("seed0_report.json", "seed1_report.json", "seed0_weights.vdsw", "summary.csv")
    assert main(["train-eval", "--config", str(cfg_path), "--out", str(tmp / "a")]) == 0
    first = {n: (tmp / "a" / n).read_bytes() for n in names}
    assert main(["train-eval", "--config", str(cfg_path), "--out", str(tmp / "a")]) == 0
    for n in names:
        assert (tmp / "a" / n).read_bytes() == first[n]
    report = json.loads((tmp / "a" / "seed0_report.json").read_text())
    assert report["config"]["experiment"]["network"]["n_outputs"] == 10
    assert report["config"]["build_id"]
    conf = np.loadtxt(tmp / "a" / "seed0_confusion.csv", delimiter=",")
    assert conf.shape == (10, 10)
    assert report["accuracy"] == pytest.approx(np.trace(conf) / 20)
    header = (tmp / "a" / "summary.csv").read_text().splitlines()[0]
    assert header == ",".join(ex.SUMMARY_COLUMNS)
    w, steps = load_snapshot(tmp / "a" / "seed0_weights.vdsw")
    assert w.shape == (784, 10) and steps == 40 * 70 + 40 * 70 + 20 * 70


def test_rerun_from_emitted_config(tiny):
    tmp, cfg_path, _ = tiny
    main(["train-eval", "--config", str(cfg_path), "--seeds", "0", "--out", str(tmp / "a")])
    first = (tmp / "a" / "seed0_report.json").read_bytes()
    emitted = json.loads(first)["config"]["experiment"]
    (tmp / "again.yaml").write_text(yaml.safe_dump(emitted))
    assert main(["train-eval", "--config", str(tmp / "again.yaml")]) == 0
    assert (tmp / "a" / "seed0_report.json").read_bytes() == first


def test_epochs_zero_control(tiny):
    tmp, _, cfg = tiny
    cfg = from_dict({"training": {"epochs": 0}}, cfg)
    s = ex.train_eval(cfg, [0], tmp / "z")
    assert s.reports[0].potentiation_count == 0


def test_missing_dataset_exits_nonzero(tmp_path, capsys):
    rc = main(["train-eval", "--dataset-dir", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")])
    assert rc != 0
    assert "error" in capsys.readouterr().err


def test_invalid_config_exits_nonzero(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("network:\n  g_syn_typo: 1\n")
    assert main(["train-eval", "--config", str(tmp_path / "c.yaml")]) != 0
    assert "unknown key" in capsys.readouterr().err


def test_sweep_single_value(tiny):
    tmp, _, cfg = tiny
    rows = ex.sweep(cfg, "lr", [0.01], [0], tmp / "s")
    assert len(rows) == 1 and rows[0]["value"] == 0.01
    assert (tmp / "s" / "sweep_lr.csv").read_text().splitlines()[0] == ",".join(ex.SWEEP_COLUMNS)
    with pytest.raises(ValueError):
        ex.sweep(cfg, "lr", [], [0])
    with pytest.raises(ValueError):
        ex.with_axis(cfg, "tau", 1)


def test_freq_sweep_rows_and_flag(tiny):
    tmp, _, cfg = tiny
    rows = ex.frequency_sweep(cfg, [1.0, 0.4], [0], tmp / "f")
    assert [(r["scale"], r["rule"]) for r in rows] == [(1.0, "vdsp"), (1.0, "stdp"), (0.4, "vdsp"), (0.4, "stdp")]
    assert [r["flagged"] for r in rows] == [0, 0, 1, 1]
    assert rows[2]["accuracy_mean"] == pytest.approx(0.1)
    assert rows[0]["mean_duration_ms"] >= 535.0
    with pytest.raises(ValueError):
        ex.frequency_sweep(cfg, [0.0], [0])


def test_frequency_point_settings():
    p = ex.frequency_point(ExperimentConfig(), 2.0)
    assert not p.network.adaptation_enabled
    assert p.encoding.current_scale == 2.0 and p.presentation.dynamic_max_spikes == 10
    s = ex.stdp_baseline(ExperimentConfig())
    assert s.network.plasticity.rule == "stdp_pair" and s.network.plasticity.norm_target > 0


def test_ablate_noise_zero_sigma_matches_baseline(tiny):
    tmp, _, cfg = tiny
    noisy = from_dict({"encoding": {"mode": "noisy", "noise_sigma": 0.0}}, cfg)
    a = ex.run_one(cfg, 0)
    b = ex.run_one(noisy, 0)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.report.accuracy == b.report.accuracy


def test_ablation_variants():
    cfg = ExperimentConfig()
    assert ex.ablation_variant(cfg, "zero_bias").encoding.bias_enabled is False
    assert ex.ablation_variant(cfg, "noise").encoding.noise_sigma == 0.1
    assert ex.ablation_variant(cfg, "poisson").encoding.mode == "poisson"
    assert ex.ablation_variant(cfg, "additive").network.plasticity.rule == "vdsp_additive"
    with pytest.raises(ValueError):
        ex.ablation_variant(cfg, "dropout")


def test_ablate_cli(tiny, capsys):
    tmp, cfg_path, _ = tiny
    assert main(["ablate", "additive", "--config", str(cfg_path), "--seeds", "0", "--out", str(tmp / "ab")]) == 0
    lines = (tmp / "ab" / "ablation_additive.csv").read_text().splitlines()
    assert lines[0] == ",".join(ex.ABLATION_COLUMNS) and len(lines) == 3


def test_export_fields(tmp_path, capsys):
    snap = save_snapshot(tmp_path / "w.vdsw", np.full((784, 10), 0.5))
    assert main(["export-fields", str(snap), "--out", str(tmp_path / "f")]) == 0
    files = sorted((tmp_path / "f").glob("*.pgm"))
    assert len(files) == 10
    img = ex.read_pgm(files[0])
    assert img.shape == (28, 28)
    assert np.all(img == img[0, 0]) and abs(int(img[0, 0]) - 128) <= 1
    assert files[0].read_bytes().startswith(b"P5\n28 28\n255\n")


def test_export_fields_bad_snapshot(tmp_path, capsys):
    (tmp_path / "bad.vdsw").write_bytes(b"nope")
    assert main(["export-fields", str(tmp_path / "bad.vdsw"), "--out", str(tmp_path / "f")]) != 0


def test_field_mapping():
    w = np.zeros((784, 2))
    w[:, 1] = 1.0
    imgs = ex.field_images(w)
    assert imgs[0].max() == 0 and imgs[1].min() == 255


def test_weight_stats_uniform_and_binary(tmp_path, capsys):
    u = np.random.default_rng(0).uniform(size=(784, 10))
    stats = ex.weight_stats(u)
    counts = np.array(stats["counts"])
    assert len(counts) == 50 and counts.sum() == 7840
    assert counts.std() / counts.mean() < 0.2
    assert stats["tail_mass"] < stats["middle_mass"]
    b = np.random.default_rng(0).integers(0, 2, size=(784, 10)).astype(float)
    assert ex.weight_stats(b)["near_binary"] == 1.0
    snap = save_snapshot(tmp_path / "w.vdsw", u)
    assert main(["weight-stats", str(snap), "--out", str(tmp_path / "ws")]) == 0
    assert (tmp_path / "ws" / "weight_hist.csv").exists()
    assert json.loads(capsys.readouterr().out)["n"] == 7840


def test_calibrate_gain_bisection_oracle():
    # a monotone synthetic rate curve: rate = 10 * g
    g, r = ex.calibrate_gain(ExperimentConfig(), None, (1.0, 5.0), rate_fn=lambda g: 10 * g)
    assert 0.1 <= g <= 0.5 and 1.0 <= r <= 5.0
    g0, _ = ex.calibrate_gain(ExperimentConfig(), None, (0.0, float("inf")), lo=1e-4, rate_fn=lambda g: 10 * g)
    assert g0 == 1e-4
    with pytest.raises(ex.CalibrationError):
        ex.calibrate_gain(ExperimentConfig(), None, (1.0, 5.0), rate_fn=lambda g: 0.0)


def test_calibrate_gain_zero_weights(tmp_path):
    data = write_idx(tmp_path / "m", n_train=5, n_test=5)
    cfg = from_dict({"dataset_dir": str(data)})
    train, _, _ = ex.load_datasets(cfg)
    with pytest.raises(ex.CalibrationError):
        ex.calibrate_gain(cfg, train.images, (1.0, 5.0), weights=np.zeros((784, 10)), max_hi=8.0)


def test_calibrate_gain_default_profile(mnist_path, capsys):
    rc = main(["calibrate-gain", "--dataset-dir", str(mnist_path)])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert 0 < out["g_syn"] < 1
    assert 1.0 <= out["mean_output_spikes"] <= 5.0


def test_window_scan_cli(tmp_path, capsys):
    assert main(["window-scan", "--points", "100", "--t-ref", "2", "--out", str(tmp_path / "w.csv")]) == 0
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert len(lines) == 101 and lines[0] == "v,abs_dt_ms,branch,delta_w,refractory_flag"
    assert json.loads(capsys.readouterr().out)["rows"] == 100


def test_seed_parsing():
    from vdsp.cli import _seeds

    assert _seeds("0-4") == [0, 1, 2, 3, 4]
    assert _seeds("3,1") == [3, 1]


def test_parallel_jobs_match_serial(tiny):
    tmp, _, cfg = tiny
    serial = ex.run_jobs([(cfg, 0), (cfg, 1)], threads=1)
    pooled = ex.run_jobs([(cfg, 0), (cfg, 1)], threads=2)
    for a, b in zip(serial, pooled):
        assert a.weights.tobytes() == b.weights.tobytes()
        assert ex.report_json(a.report) == ex.report_json(b.report)
