"""Dataset ingestion: IDX-format MNIST, sequential/permuted encodings, and a
synthetic resonance-classification task for desk-scale verification.

All loaders are deterministic and side-effect-free given (path, seed);
returned datasets are immutable in spirit and safe to share across threads.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

DEFAULT_PERMUTATION_SEED = 42  # the fixed, documented permuted-MNIST seed

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


class DataFormatError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


@dataclass
class SequenceDataset:
    """A batch-ready set of equal-length sequences with integer labels."""

    sequences: np.ndarray   # (N, T, n_in) float64
    labels: np.ndarray      # (N,) int64
    n_classes: int
    split: str = ""

    def __post_init__(self):
        self.sequences = np.asarray(self.sequences, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.sequences.ndim != 3:
            raise ValueError("sequences must be (N, T, n_in)")
        if len(self.labels) != len(self.sequences):
            raise DataFormatError(
                f"{len(self.sequences)} sequences but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0
                                 or self.labels.max() >= self.n_classes):
            raise DataFormatError("labels out of [0, n_classes) range")

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def n_steps(self) -> int:
        return self.sequences.shape[1]

    @property
    def n_in(self) -> int:
        return self.sequences.shape[2]

    def subset(self, indices, split: str | None = None) -> "SequenceDataset":
        return SequenceDataset(self.sequences[indices], self.labels[indices],
                               self.n_classes,
                               self.split if split is None else split)


def _open_maybe_gzip(path):
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_header(f, path, expected_magic, n_dims):
    header = f.read(4 * (1 + n_dims))
    if len(header) < 4 * (1 + n_dims):
        raise DataFormatError(f"{path}: truncated IDX header")
    fields = struct.unpack(f">{1 + n_dims}i", header)
    if fields[0] != expected_magic:
        raise DataFormatError(
            f"{path}: bad IDX magic 0x{fields[0]:08x} "
            f"(expected 0x{expected_magic:08x})")
    return fields[1:]


def load_idx_images(path) -> np.ndarray:
    """Read an IDX3 image file (big-endian, magic 0x00000803) as uint8."""
    with _open_maybe_gzip(path) as f:
        count, rows, cols = _read_header(f, path, IMAGE_MAGIC, 3)
        raw = f.read(count * rows * cols)
        if len(raw) < count * rows * cols:
            raise DataFormatError(f"{path}: truncated image data "
                                  f"({len(raw)} of {count * rows * cols} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    """Read an IDX1 label file (big-endian, magic 0x00000801) as uint8."""
    with _open_maybe_gzip(path) as f:
        (count,) = _read_header(f, path, LABEL_MAGIC, 1)
        raw = f.read(count)
        if len(raw) < count:
            raise DataFormatError(f"{path}: truncated label data "
                                  f"({len(raw)} of {count} bytes)")
    return np.frombuffer(raw, dtype=np.uint8)


def load_mnist_idx(images_path, labels_path):
    """Load one IDX image/label pair; images scaled into [0, 1].

    Returns (images (N, 784) float64, labels (N,) int64) and checks the
    image/label counts agree.
    """
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DataFormatError(
            f"image/label count mismatch: {len(images)} images vs "
            f"{len(labels)} labels")
    flat = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return flat, labels.astype(np.int64)


def _find_file(root, name):
    from pathlib import Path
    root = Path(root)
    for candidate in (root / name, root / (name + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(
        f"{name}[.gz] not found under {root}")


def load_mnist(root, split: str = "train"):
    """Load a standard-named MNIST split from a directory (gzip accepted)."""
    if split == "train":
        images, labels = TRAIN_IMAGES, TRAIN_LABELS
    elif split == "test":
        images, labels = TEST_IMAGES, TEST_LABELS
    else:
        raise ValueError(f"unknown split {split!r}")
    return load_mnist_idx(_find_file(root, images), _find_file(root, labels))


def to_sequential(images: np.ndarray, labels: np.ndarray,
                  split: str = "") -> SequenceDataset:
    """Stream each image pixel-by-pixel in row-major order: T=784, n_in=1."""
    images = np.asarray(images, dtype=np.float64)
    flat = images.reshape(len(images), -1)
    if flat.shape[1] != 784:
        raise ValueError(f"expected 784-pixel images, got {flat.shape[1]}")
    return SequenceDataset(flat[:, :, None], labels, n_classes=10, split=split)


@dataclass(frozen=True)
class PermutationSpec:
    """A seeded bijection on timestep indices."""

    seed: int
    permutation: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.permutation)
        if not np.array_equal(np.sort(perm), np.arange(len(perm))):
            raise ValueError("permutation must be a bijection on 0..T-1")
        object.__setattr__(self, "permutation", perm)

    @classmethod
    def from_seed(cls, seed: int = DEFAULT_PERMUTATION_SEED,
                  length: int = 784) -> "PermutationSpec":
        rng = np.random.default_rng(seed)
        return cls(seed=seed, permutation=rng.permutation(length))

    def inverse(self) -> "PermutationSpec":
        return PermutationSpec(seed=self.seed,
                               permutation=np.argsort(self.permutation))


def permute(dataset: SequenceDataset, spec: PermutationSpec) -> SequenceDataset:
    """Reorder timesteps by the spec's permutation (same order every sample)."""
    if len(spec.permutation) != dataset.n_steps:
        raise ValueError(
            f"permutation length {len(spec.permutation)} != sequence length "
            f"{dataset.n_steps}")
    return SequenceDataset(dataset.sequences[:, spec.permutation],
                           dataset.labels, dataset.n_classes, dataset.split)


def synthetic_resonance_task(seed: int, n_classes: int = 4, n_steps: int = 100,
                             noise_level: float = 0.05, n_samples: int = 512,
                             delta: float = 0.01,
                             omega_range: tuple = (5.0, 10.0),
                             split: str = "") -> SequenceDataset:
    """Sinusoid classification: class k is a fixed angular frequency.

    Class frequencies sit strictly inside ``omega_range`` so matched
    resonators can lock onto them. Each sample gets a random phase plus
    Gaussian noise. Balanced classes; deterministic given seed.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if n_steps < 50:
        raise ValueError("need at least 50 timesteps")
    rng = np.random.default_rng(seed)
    lo, hi = omega_range
    omegas = lo + (np.arange(n_classes) + 0.5) * (hi - lo) / n_classes
    t = np.arange(n_steps) * delta
    labels = np.arange(n_samples) % n_classes
    phases = rng.uniform(0.0, 2.0 * np.pi, n_samples)
    clean = np.sin(omegas[labels][:, None] * t[None, :] + phases[:, None])
    noise = rng.normal(0.0, 1.0, (n_samples, n_steps)) if noise_level > 0 else 0.0
    sequences = (clean + noise_level * noise)[:, :, None]
    return SequenceDataset(sequences, labels, n_classes, split=split)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images as an IDX3 file (test fixture / tooling helper)."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">4i", IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    """Write uint8 labels as an IDX1 file (test fixture / tooling helper)."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">2i", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())
