"""Dataset loading: CIFAR binary files and a synthetic fallback.

CIFAR binaries are fixed-size records: one label byte (CIFAR-10) or a
coarse+fine label pair (CIFAR-100) followed by 3072 channel-major
pixel bytes (32x32, R then G then B, row-major inside each channel).
Images load as float arrays in [0, 1]; labels as int64 (the fine label
for CIFAR-100).

The synthetic task places a high-frequency checkerboard patch in one
image quadrant; the class index encodes both the quadrant (class mod 4)
and the checker cell size (1 + class div 4), so it is separable by
local convolutions and by spectral filters alike. Generation is a pure
function of (seed, n, classes).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

CIFAR_IMAGE_BYTES = 3072
CIFAR_SIDE = 32

DATASET_NAMES = ("cifar10", "cifar100", "synthetic")


@dataclass
class Dataset:
    """Train and test splits plus label metadata; images are (n, 3, s, s)."""

    name: str
    classes: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    norm_mean: np.ndarray = field(default=None)
    norm_std: np.ndarray = field(default=None)


def read_cifar_binary(path, label_bytes: int):
    """Parse one CIFAR binary file into (labels, images) uint8 arrays.

    ``labels`` is (n, label_bytes); ``images`` is (n, 3, 32, 32).
    """
    if not os.path.isfile(path):
        raise DataError(f"dataset file not found: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    rec = label_bytes + CIFAR_IMAGE_BYTES
    if raw.size == 0 or raw.size % rec != 0:
        raise DataError(
            f"{path}: size {raw.size} is not a positive multiple of the {rec}-byte record; "
            f"partial record starts at byte {raw.size - raw.size % rec}"
        )
    n = raw.size // rec
    records = raw.reshape(n, rec)
    labels = records[:, :label_bytes]
    images = records[:, label_bytes:].reshape(n, 3, CIFAR_SIDE, CIFAR_SIDE)
    return labels, images


def write_cifar_binary(path, images: np.ndarray, labels: np.ndarray):
    """Inverse of :func:`read_cifar_binary` for uint8 inputs."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim == 1:
        labels = labels[:, None]
    n = images.shape[0]
    if images.shape != (n, 3, CIFAR_SIDE, CIFAR_SIDE) or labels.shape[0] != n:
        raise DataError(
            f"writer expects images (n, 3, {CIFAR_SIDE}, {CIFAR_SIDE}) with matching labels, "
            f"got {images.shape} and {labels.shape}"
        )
    records = np.concatenate([labels, images.reshape(n, CIFAR_IMAGE_BYTES)], axis=1)
    records.tofile(path)


def _check_labels(labels, classes, path):
    if labels.size and int(labels.max()) >= classes:
        bad = int(np.argmax(labels >= classes))
        raise DataError(
            f"{path}: label {int(labels[bad])} out of range [0, {classes}) in record {bad}"
        )


def _cifar_dir(root, subdir):
    cand = os.path.join(root, subdir)
    return cand if os.path.isdir(cand) else root


def load_cifar10(root) -> Dataset:
    base = _cifar_dir(root, "cifar-10-batches-bin")
    train_parts = [os.path.join(base, f"data_batch_{i}.bin") for i in range(1, 6)]
    test_path = os.path.join(base, "test_batch.bin")
    labels, images = [], []
    for p in train_parts:
        lab, img = read_cifar_binary(p, 1)
        labels.append(lab[:, 0])
        images.append(img)
    train_y = np.concatenate(labels).astype(np.int64)
    train_x = np.concatenate(images)
    lab, test_x = read_cifar_binary(test_path, 1)
    test_y = lab[:, 0].astype(np.int64)
    _check_labels(train_y, 10, base)
    _check_labels(test_y, 10, test_path)
    return Dataset("cifar10", 10, train_x / np.float64(255.0), train_y,
                   test_x / np.float64(255.0), test_y)


def load_cifar100(root) -> Dataset:
    base = _cifar_dir(root, "cifar-100-binary")
    lab, train_x = read_cifar_binary(os.path.join(base, "train.bin"), 2)
    train_y = lab[:, 1].astype(np.int64)  # fine label; byte 0 is the coarse label
    lab, test_x = read_cifar_binary(os.path.join(base, "test.bin"), 2)
    test_y = lab[:, 1].astype(np.int64)
    _check_labels(train_y, 100, base)
    _check_labels(test_y, 100, base)
    return Dataset("cifar100", 100, train_x / np.float64(255.0), train_y,
                   test_x / np.float64(255.0), test_y)


def synthetic_classification(n: int, classes: int = 10, size: int = CIFAR_SIDE,
                             seed: int = 0) -> tuple:
    """Checkerboard-in-quadrant images; returns (images, labels)."""
    if classes < 2 or classes > 4 * (size // 2):
        raise ConfigError(f"synthetic classes must be in [2, {4 * (size // 2)}], got {classes}")
    rng = np.random.default_rng([seed, n, classes])
    # Round-robin labels give exactly uniform class counts whenever
    # classes divides n; the permutation only shuffles order.
    labels = np.tile(np.arange(classes, dtype=np.int64), n // classes + 1)[:n]
    labels = rng.permutation(labels)
    images = 0.35 + 0.08 * rng.standard_normal((n, 3, size, size))
    half = size // 2
    ii, jj = np.meshgrid(np.arange(half), np.arange(half), indexing="ij")
    for k in range(classes):
        sel = np.where(labels == k)[0]
        if sel.size == 0:
            continue
        cell = 1 + k // 4
        checker = ((ii // cell + jj // cell) % 2).astype(np.float64) - 0.5
        r0 = 0 if k % 4 < 2 else half
        c0 = 0 if k % 2 == 0 else half
        images[sel, :, r0:r0 + half, c0:c0 + half] += 0.6 * checker
    return np.clip(images, 0.0, 1.0), labels


def load_synthetic(seed: int, train_n: int = 2048, test_n: int = 512,
                   classes: int = 10, size: int = CIFAR_SIDE) -> Dataset:
    train_x, train_y = synthetic_classification(train_n, classes, size, seed=seed)
    test_x, test_y = synthetic_classification(test_n, classes, size, seed=seed + 1)
    return Dataset("synthetic", classes, train_x, train_y, test_x, test_y)


def load_dataset(name: str, root=None, seed: int = 0, subset=None,
                 synthetic_train: int = 2048, synthetic_test: int = 512,
                 classes: int = 10, image_size: int = CIFAR_SIDE) -> Dataset:
    """Load a dataset by name, optionally shrinking it deterministically.

    ``subset=n`` keeps n training samples and max(n // 5, 1) test samples,
    drawn by a seeded permutation so the choice is a pure function of
    ``seed``. ``classes`` and ``image_size`` apply to the synthetic
    dataset only; the synthetic splits grow as needed to satisfy a
    large ``subset``.
    """
    if name == "cifar10":
        if root is None:
            raise ConfigError("cifar10 requires a data root directory")
        ds = load_cifar10(root)
    elif name == "cifar100":
        if root is None:
            raise ConfigError("cifar100 requires a data root directory")
        ds = load_cifar100(root)
    elif name == "synthetic":
        train_n = max(synthetic_train, subset or 0)
        test_n = max(synthetic_test, (subset or 0) // 5)
        ds = load_synthetic(seed, train_n=train_n, test_n=test_n,
                            classes=classes, size=image_size)
    else:
        raise ConfigError(f"unknown dataset {name!r}; expected one of {DATASET_NAMES}")

    if subset is not None:
        if subset < 1 or subset > ds.train_x.shape[0]:
            raise ConfigError(
                f"subset {subset} out of range [1, {ds.train_x.shape[0]}]"
            )
        tr = np.random.default_rng([seed, 1]).permutation(ds.train_x.shape[0])[:subset]
        nt = min(ds.test_x.shape[0], max(subset // 5, 1))
        te = np.random.default_rng([seed, 2]).permutation(ds.test_x.shape[0])[:nt]
        ds = Dataset(ds.name, ds.classes, ds.train_x[tr], ds.train_y[tr],
                     ds.test_x[te], ds.test_y[te])
    return ds


def normalize_(ds: Dataset) -> Dataset:
    """Standardize per channel with statistics from the train split only."""
    mean = ds.train_x.mean(axis=(0, 2, 3), keepdims=True)
    std = ds.train_x.std(axis=(0, 2, 3), keepdims=True)
    std = np.where(std < 1e-8, 1.0, std)
    ds.train_x = (ds.train_x - mean) / std
    ds.test_x = (ds.test_x - mean) / std
    ds.norm_mean = mean[0, :, 0, 0].copy()
    ds.norm_std = std[0, :, 0, 0].copy()
    return ds


def augment_batch(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Pad-4 random crop plus per-image horizontal flip (exploratory only)."""
    n, c, h, w = x.shape
    pad = 4
    padded = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    padded[:, :, pad:pad + h, pad:pad + w] = x
    rows = rng.integers(0, 2 * pad + 1, size=n)
    cols = rng.integers(0, 2 * pad + 1, size=n)
    flips = rng.random(n) < 0.5
    out = np.empty_like(x)
    for i in range(n):
        img = padded[i, :, rows[i]:rows[i] + h, cols[i]:cols[i] + w]
        out[i] = img[:, :, ::-1] if flips[i] else img
    return out


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Training-example order for an epoch; pure in (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)
