"""Synthetic generators and binary readers for the image datasets."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedFileError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.X) != len(self.Y):
            raise ValueError(f"X has {len(self.X)} rows but Y has {len(self.Y)}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self) -> int:
        return len(self.X)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], dict(self.meta))


def split(ds: Dataset, n_train: int, seed: int, n_test: int | None = None) -> tuple[Dataset, Dataset]:
    """Random train/test split (test gets the remainder unless ``n_test`` is given)."""
    if n_test is None:
        n_test = len(ds) - n_train
    if n_train < 1 or n_test < 0 or n_train + n_test > len(ds):
        raise ValueError(f"cannot split {len(ds)} samples into {n_train} + {n_test}")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(perm[:n_train]), ds.subset(perm[n_train:n_train + n_test])


def gen_sine(n: int, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.random.default_rng(seed).uniform(0.0, np.pi, size=n)
    return Dataset(x[:, None], np.sin(x)[:, None], {"name": "sine", "normalization": "none", "seed": seed})


def gen_circle(n: int, seed: int, evenly_spaced: bool = False) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    if evenly_spaced:
        gamma = np.linspace(-np.pi, np.pi, n)
    else:
        gamma = np.random.default_rng(seed).uniform(-np.pi, np.pi, size=n)
    return circle_points(gamma, seed)


def circle_points(gamma, seed=None) -> Dataset:
    gamma = np.asarray(gamma, dtype=np.float64)
    X = np.stack([np.cos(gamma), np.sin(gamma)], axis=1)
    Y = (np.cos(gamma) * np.sin(gamma))[:, None]
    return Dataset(X, Y, {"name": "circle", "normalization": "none", "seed": seed, "gamma": gamma})


def gen_wellscaled(n: int, d: int, label_kind: str = "standard_normal", variant: str = "gaussian", seed: int = 0) -> Dataset:
    """Gaussian N(0, I_d) inputs (norm ~ sqrt(d)) or uniform points on the unit sphere."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    if variant == "sphere":
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    elif variant != "gaussian":
        raise ValueError(f"unknown variant {variant!r}")
    if label_kind == "standard_normal":
        Y = rng.standard_normal((n, 1))
    elif label_kind == "none":
        Y = np.zeros((n, 0))
    else:
        raise ValueError(f"unknown label kind {label_kind!r}")
    return Dataset(X, Y, {"name": f"wellscaled-{variant}", "normalization": "none", "seed": seed})


def one_hot(labels, n_classes: int = 10) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, path) -> np.ndarray:
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) < header + count:
        raise TruncatedFileError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    """IDX image/label pair (MNIST layout); plain or gzip-compressed files."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    X = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(X, one_hot(labels, 10), {"name": Path(images_path).name, "normalization": "scale-01", "seed": None})


def load_cifar10(batch_paths, limit: int | None = None) -> Dataset:
    if isinstance(batch_paths, (str, Path)):
        batch_paths = [batch_paths]
    Xs, ys = [], []
    for path in batch_paths:
        raw = _read_bytes(path)
        if len(raw) % CIFAR_RECORD:
            raise FormatError(f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        ys.append(rec[:, 0])
        Xs.append(rec[:, 1:])
    X = np.concatenate(Xs) if Xs else np.zeros((0, CIFAR_RECORD - 1), np.uint8)
    y = np.concatenate(ys) if ys else np.zeros(0, np.uint8)
    if limit is not None:
        X, y = X[:limit], y[:limit]
    if y.size and y.max() > 9:
        raise FormatError(f"label byte {int(y.max())} out of range")
    return Dataset(X.astype(np.float64) / 255.0, one_hot(y, 10), {"name": "cifar10", "normalization": "scale-01", "seed": None})


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array in IDX format (magic 0x08 type byte, ndim in the low byte)."""
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def write_cifar10(path, images: np.ndarray, labels) -> None:
    images = np.asarray(images, dtype=np.uint8).reshape(len(images), -1)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(np.concatenate([labels[:, None], images], axis=1).tobytes())
