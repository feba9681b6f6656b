"""Experiment configuration files.

An experiment is described by a YAML document whose sections mirror the
dataclasses used by the library: ``network`` (a :class:`NetworkConfig`,
including neuron and plasticity parameters), ``encoding``, ``presentation``
and ``training``. Any key not known to the corresponding dataclass is an
error, so a typo in a hyperparameter name cannot silently fall back to a
default.
"""
from __future__ import annotations

import dataclasses
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .encoding import EncodingConfig
from .network import NetworkConfig
from .training import AGGREGATES, Presentation


class ConfigError(ValueError):
    pass


@dataclass
class TrainingBudget:
    """How much data each run sees and how it is read out.

    ``None`` sample counts mean the full split. ``label_samples`` selects
    how many training images feed the labeling pass.
    """

    epochs: int = 1
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    train_samples: int | None = None
    label_samples: int | None = None
    test_samples: int | None = None
    aggregate: str = "auto"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.aggregate not in AGGREGATES + ("auto",):
            raise ConfigError(f"aggregate must be one of {AGGREGATES + ('auto',)}")
        self.seeds = [int(s) for s in self.seeds]


@dataclass
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    presentation: Presentation = field(default_factory=Presentation)
    training: TrainingBudget = field(default_factory=TrainingBudget)
    dataset_dir: str = "data/mnist"
    out_dir: str = "runs"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self, path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


def _check_type(default, value, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
    elif isinstance(default, (int, float)) and not isinstance(value, bool):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
    elif isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")


def _merge(base, data, where: str):
    """Overlay ``data`` onto dataclass instance ``base``, recursing into nested dataclasses."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(base)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(map(str, unknown))}")
    updates = {}
    for key, value in data.items():
        path = f"{where}.{key}" if where else key
        current = getattr(base, key)
        if dataclasses.is_dataclass(current):
            updates[key] = _merge(current, value, path)
        else:
            if current is not None and value is not None:
                _check_type(current, value, path)
            updates[key] = value
    try:
        return dataclasses.replace(base, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def from_dict(data: dict | None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return _merge(base or ExperimentConfig(), data or {}, "")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    profile = (data or {}).pop("profile", None) if isinstance(data, dict) else None
    return from_dict(data, PROFILES[profile]() if profile else None)


def default_profile() -> ExperimentConfig:
    """Ten output neurons, one epoch, five seeds."""
    return ExperimentConfig()


def extended_profile() -> ExperimentConfig:
    """A hundred output neurons trained for three epochs; expensive."""
    cfg = ExperimentConfig()
    return from_dict({"network": {"n_outputs": 100}, "training": {"epochs": 3}}, cfg)


PROFILES = {"default": default_profile, "extended": extended_profile}


def build_id() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__
