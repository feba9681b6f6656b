"""MNIST ingestion and conversion of images into per-step input drive."""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .neuron import INPUT_PARAMS, NeuronParams, time_to_spike

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MODES = ("constant_current", "poisson", "noisy")

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxError(ValueError):
    """Base class for malformed IDX containers."""

    code = "idx_error"


class IdxMagicError(IdxError):
    code = "bad_magic"


class IdxTruncatedError(IdxError):
    code = "truncated"


class IdxShapeError(IdxError):
    code = "bad_shape"


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx_images(path, shape=(28, 28)) -> np.ndarray:
    """Parse a big-endian IDX3 image file into a ``(count, rows, cols)`` uint8 array."""
    data = _read_bytes(path)
    if len(data) < 16:
        raise IdxTruncatedError(f"{path}: header shorter than 16 bytes")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise IdxMagicError(f"{path}: magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")
    if shape is not None and (rows, cols) != tuple(shape):
        raise IdxShapeError(f"{path}: images are {rows}x{cols}, expected {shape[0]}x{shape[1]}")
    expected = count * rows * cols
    if len(data) - 16 < expected:
        raise IdxTruncatedError(f"{path}: header claims {count} images, payload holds {(len(data) - 16) // max(rows * cols, 1)}")
    return np.frombuffer(data, dtype=np.uint8, count=expected, offset=16).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    """Parse a big-endian IDX1 label file into a uint8 vector."""
    data = _read_bytes(path)
    if len(data) < 8:
        raise IdxTruncatedError(f"{path}: header shorter than 8 bytes")
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABEL_MAGIC:
        raise IdxMagicError(f"{path}: magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")
    if len(data) - 8 < count:
        raise IdxTruncatedError(f"{path}: header claims {count} labels, payload holds {len(data) - 8}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8).copy()


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxShapeError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int | None) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n], self.split)


def _find(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / (name + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no {name}[.gz] in {directory}")


def load_mnist(directory, split: str = "train") -> Dataset:
    """Load one MNIST split from a directory holding the canonical IDX files (optionally gzipped)."""
    directory = Path(directory)
    image_name, label_name = SPLIT_FILES[split]
    images = load_idx_images(_find(directory, image_name))
    labels = load_idx_labels(_find(directory, label_name))
    return Dataset(images, labels, split)


@dataclass
class EncodingConfig:
    mode: str = "constant_current"
    current_scale: float = 1.0
    noise_sigma: float = 0.0
    poisson_rate_max: float = 26.0  # Hz for a full-intensity pixel
    # large enough that nearly every event makes its input neuron fire
    poisson_impulse: float = 7.0
    # False removes the input-neuron bias for every pass that uses this encoding
    bias_enabled: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown encoding mode {self.mode!r}; expected one of {MODES}")
        if not self.current_scale > 0:
            raise ValueError("current_scale must be positive")
        if self.noise_sigma < 0 or self.poisson_rate_max < 0:
            raise ValueError("noise_sigma and poisson_rate_max must be non-negative")


def pixel_to_current(pixel, scale: float = 1.0):
    """Map a byte pixel to a dimensionless current, ``scale * pixel / 255``."""
    return scale * (np.asarray(pixel, dtype=np.float64) / 255.0)


@dataclass
class EncodedSample:
    """Drive for one presentation.

    ``drive`` is ``(1, n_inputs)`` when constant over the presentation,
    otherwise ``(n_steps, n_inputs)``.
    """

    drive: np.ndarray
    n_steps: int
    dt: float

    def at(self, t: int) -> np.ndarray:
        return self.drive[t] if self.drive.shape[0] > 1 else self.drive[0]

    def dense(self) -> np.ndarray:
        return np.broadcast_to(self.drive, (self.n_steps, self.drive.shape[1]))


def n_steps_for(duration: float, dt: float) -> int:
    steps = duration / dt
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError(f"duration {duration} ms is not a multiple of dt={dt} ms")
    return int(round(steps))


def encode_sample(
    image, cfg: EncodingConfig, duration: float, dt: float, rng: np.random.Generator | None = None
) -> EncodedSample:
    """Per-step input currents for one image.

    Bias is not added here; it belongs to the input neurons.
    """
    n_steps = n_steps_for(duration, dt)
    current = pixel_to_current(np.asarray(image).reshape(-1), cfg.current_scale)
    if cfg.mode == "constant_current":
        return EncodedSample(current[None, :], n_steps, dt)
    if rng is None:
        raise ValueError(f"{cfg.mode} encoding needs an rng")
    if cfg.mode == "noisy":
        if cfg.noise_sigma == 0:
            return EncodedSample(current[None, :], n_steps, dt)
        noise = rng.normal(0.0, cfg.noise_sigma, size=(n_steps, current.size))
        return EncodedSample(current[None, :] + noise, n_steps, dt)
    # poisson: per-step Bernoulli events at rate * dt, rate scaled by pixel intensity
    rate = cfg.poisson_rate_max * (np.asarray(image, dtype=np.float64).reshape(-1) / 255.0)
    p = np.clip(rate * dt / 1000.0, 0.0, 1.0)
    events = rng.random((n_steps, current.size)) < p
    return EncodedSample(events * cfg.poisson_impulse, n_steps, dt)


def dynamic_duration(
    image,
    cfg: EncodingConfig,
    max_spikes_per_pixel: int,
    params: NeuronParams = INPUT_PARAMS,
    dt: float = 5.0,
) -> float:
    """Presentation time allowing at most ``max_spikes_per_pixel`` spikes from the brightest pixel.

    The period is ``t_ref + time_to_spike(v_reset, I_max + bias)``; the total
    is rounded up to the simulation grid. Raises ``ValueError`` for a blank
    image or a brightest pixel too dim to ever fire.
    """
    peak = int(np.max(image))
    if peak == 0:
        raise ValueError("image has no nonzero pixel")
    bias = params.bias if cfg.bias_enabled else 0.0
    u = float(pixel_to_current(peak, cfg.current_scale)) + bias
    period = params.t_ref + time_to_spike(params.v_reset, u, params)
    if math.isinf(period):
        raise ValueError(f"brightest pixel drive {u:.3f} never reaches threshold")
    total = max_spikes_per_pixel * period
    return math.ceil(total / dt - 1e-9) * dt
