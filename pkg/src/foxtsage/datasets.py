"""Labeled datasets: MNIST IDX files, numeric CSV, and synthetic blobs."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import BoundsError, Rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    """Malformed input file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class LabelRangeError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.features.ndim != 2:
            raise FormatError(f"features must be 2-D, got shape {self.features.shape}")
        if len(self.labels) != self.features.shape[0]:
            raise FormatError(
                f"{self.features.shape[0]} feature rows but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelRangeError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, name: str | None = None) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(
            self.features[idx], self.labels[idx], self.num_classes, name or self.name
        )


@dataclass(frozen=True)
class Split:
    train: LabeledDataset
    test: LabeledDataset
    fraction: float
    train_index: np.ndarray | None = None
    test_index: np.ndarray | None = None


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as f:
        return f.read()


def parse_idx_images(buf: bytes) -> np.ndarray:
    """Decode an IDX3 image buffer into a ``(N, rows, cols)`` uint8 array."""
    if len(buf) < 16:
        raise FormatError("image header truncated", offset=len(buf))
    magic, n, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"bad image magic 0x{magic:08x}", offset=0)
    need = 16 + n * rows * cols
    if len(buf) < need:
        raise FormatError(f"image payload truncated: need {need} bytes, have {len(buf)}", offset=len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(n, rows, cols)


def parse_idx_labels(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise FormatError("label header truncated", offset=len(buf))
    magic, n = struct.unpack(">II", buf[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"bad label magic 0x{magic:08x}", offset=0)
    if len(buf) < 8 + n:
        raise FormatError(f"label payload truncated: need {8 + n} bytes, have {len(buf)}", offset=len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8)


def encode_idx_images(images: np.ndarray) -> bytes:
    images = np.asarray(images)
    if images.ndim != 3:
        raise FormatError(f"images must be (N, rows, cols), got {images.shape}")
    if images.dtype != np.uint8:
        raise FormatError(f"images must be uint8, got {images.dtype}")
    n, rows, cols = images.shape
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise FormatError("IDX labels must fit in one unsigned byte")
    return struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.astype(np.uint8).tobytes()


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path, compress: bool = False):
    opener = gzip.open if compress else open
    with opener(images_path, "wb") as f:
        f.write(encode_idx_images(images))
    with opener(labels_path, "wb") as f:
        f.write(encode_idx_labels(labels))


def dataset_from_idx_bytes(image_buf: bytes, label_buf: bytes, name: str = "mnist") -> LabeledDataset:
    images = parse_idx_images(image_buf)
    labels = parse_idx_labels(label_buf)
    if images.shape[0] != labels.shape[0]:
        # the label count sits at bytes 4..8 of the label header
        raise FormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}", offset=4
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    num_classes = max(10, int(labels.max(initial=0)) + 1)
    return LabeledDataset(features, labels, num_classes, name)


def load_mnist_idx(images_path, labels_path, name: str = "mnist") -> LabeledDataset:
    """Read an IDX image/label file pair (plain or gzip) into a dataset.

    Pixels are scaled to [0, 1] by dividing by 255 and flattened row-major.
    """
    return dataset_from_idx_bytes(_read_bytes(images_path), _read_bytes(labels_path), name)


def features_to_uint8_images(ds: LabeledDataset, rows: int, cols: int) -> np.ndarray:
    """Inverse of the IDX loader's scaling, for writing a dataset back out."""
    px = np.rint(ds.features * 255.0)
    if np.any(px < 0) or np.any(px > 255):
        raise FormatError("features outside [0, 1] cannot be stored as IDX pixels")
    return px.astype(np.uint8).reshape(len(ds), rows, cols)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def find_idx_file(directory, stem: str) -> Path:
    directory = Path(directory)
    for cand in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        p = directory / cand
        if p.exists():
            return p
    raise FileNotFoundError(f"no IDX file '{stem}[.gz]' in {directory}")


def load_mnist_dir(directory, part: str) -> LabeledDataset:
    img, lab = MNIST_FILES[part]
    return load_mnist_idx(find_idx_file(directory, img), find_idx_file(directory, lab), f"mnist-{part}")


def load_csv(path, header: bool | None = None, name: str | None = None) -> LabeledDataset:
    """Load numeric features with an integer label in the last column.

    ``header=None`` sniffs: a first row that does not parse as numbers is
    treated as a header.
    """
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader):
            if not row:
                continue
            if lineno == 0 and header is not False:
                try:
                    [float(v) for v in row]
                except ValueError:
                    continue
                if header:
                    continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"line {lineno + 1}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: ragged rows")
    arr = np.asarray(rows, dtype=np.float64)
    labels_f = arr[:, -1]
    labels = labels_f.astype(np.int64)
    if np.any(labels != labels_f) or labels.min() < 0:
        raise FormatError(f"{path}: last column must hold non-negative integer labels")
    features = arr[:, :-1]
    if not np.all(np.isfinite(features)):
        raise FormatError(f"{path}: non-finite feature values")
    return LabeledDataset(features, labels, int(labels.max()) + 1 if len(labels) else 0, name or Path(path).stem)


def split_train_test(ds: LabeledDataset, fraction: float, rng: Rng) -> Split:
    if not 0.0 < fraction < 1.0:
        raise BoundsError(f"split fraction must lie in (0, 1), got {fraction}")
    n = len(ds)
    perm = rng.permutation(n)
    n_train = int(np.floor(fraction * n))
    tr, te = perm[:n_train], perm[n_train:]
    return Split(ds.subset(tr, ds.name + "-train"), ds.subset(te, ds.name + "-test"), fraction, tr, te)


def concat(a: LabeledDataset, b: LabeledDataset, name: str | None = None) -> LabeledDataset:
    return LabeledDataset(
        np.vstack([a.features, b.features]),
        np.concatenate([a.labels, b.labels]),
        max(a.num_classes, b.num_classes),
        name or a.name,
    )


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise LabelRangeError(f"label {bad} outside [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def synth_binary(n: int, d: int, separation: float, rng: Rng, name: str = "synth") -> LabeledDataset:
    """Two isotropic unit-variance Gaussian clusters.

    Class means sit at ``-separation/2`` and ``+separation/2`` along a random
    unit direction, so their distance is exactly ``separation``. Labels are
    balanced: ``n // 2`` of class 0, the rest class 1, in shuffled order.
    """
    if n < 2 or d < 1:
        raise BoundsError("synth_binary needs n >= 2 and d >= 1")
    direction = rng.gaussian_array(d)
    direction /= np.linalg.norm(direction)
    labels = np.zeros(n, dtype=np.int64)
    labels[n // 2:] = 1
    labels = labels[rng.permutation(n)]
    centers = np.where(labels[:, None] == 1, 0.5, -0.5) * separation * direction[None, :]
    features = centers + rng.gaussian_array((n, d))
    return LabeledDataset(features, labels, 2, name)
