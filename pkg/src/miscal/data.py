"""Dataset ingestion and synthesis.

Features are float32 values in [0, 1]. Pixel formats are scaled by 1/255
with no mean/std standardization, so perturbation budgets stay in raw
intensity units. Datasets are immutable once constructed.

Dataset spec strings, accepted everywhere a dataset is named:

    synth:K=10,n=200,dim=32,spread=0.05,seed=7
    idx:images=train-images.idx,labels=train-labels.idx,k=10
    cifar:file=data_batch_1.bin,k=10
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidConfigError, InvalidInputError
from .rand import stream

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
CIFAR_PIXELS = 3072
CIFAR_RECORD = CIFAR_PIXELS + 1

FORMATS = ("idx", "cifar_bin")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d) float32, every value in [0, 1]
    labels: np.ndarray  # (n,) int64, every label < num_classes
    num_classes: int
    name: str

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labs = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise InvalidInputError(f"features must be 2-D, got {feats.ndim}-D")
        if labs.shape != (feats.shape[0],):
            raise InvalidInputError(
                f"{feats.shape[0]} feature rows but {labs.shape} labels"
            )
        if self.num_classes < 2:
            raise InvalidInputError("datasets need at least two classes")
        if feats.size and (not np.all(np.isfinite(feats)) or feats.min() < 0 or feats.max() > 1):
            raise InvalidInputError("features must be finite values in [0, 1]")
        if labs.size and (labs.min() < 0 or labs.max() >= self.num_classes):
            raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")
        feats.flags.writeable = False
        labs.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, n: int) -> "Dataset":
        """First n examples, in stored order."""
        return self.subset(np.arange(min(n, len(self))))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes, self.name)


def _read_be32(data: bytes, offset: int, what: str) -> int:
    if offset + 4 > len(data):
        raise FormatError(f"file truncated while reading {what}", offset=offset)
    return struct.unpack_from(">i", data, offset)[0]


def _load_idx_images(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = _read_be32(data, 0, "image magic")
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"bad image magic {magic}, expected {IDX_IMAGES_MAGIC}", offset=0)
    count = _read_be32(data, 4, "image count")
    rows = _read_be32(data, 8, "row count")
    cols = _read_be32(data, 12, "column count")
    if min(count, rows, cols) < 0:
        raise FormatError("negative dimension in image header", offset=4)
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise FormatError(
            f"image payload holds {len(data) - 16} bytes, expected {count * rows * cols}",
            offset=min(len(data), expected),
        )
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows * cols).astype(np.float32) / 255.0


def _load_idx_labels(path, num_classes: int) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = _read_be32(data, 0, "label magic")
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"bad label magic {magic}, expected {IDX_LABELS_MAGIC}", offset=0)
    count = _read_be32(data, 4, "label count")
    if count < 0:
        raise FormatError("negative label count", offset=4)
    if len(data) != 8 + count:
        raise FormatError(
            f"label payload holds {len(data) - 8} bytes, expected {count}",
            offset=min(len(data), 8 + count),
        )
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    bad = np.nonzero(labels >= num_classes)[0]
    if bad.size:
        raise FormatError(
            f"label {labels[bad[0]]} out of range [0, {num_classes})", offset=8 + int(bad[0])
        )
    return labels.astype(np.int64)


def _load_cifar_bin(path, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) % CIFAR_RECORD != 0:
        raise FormatError(
            f"file length {len(data)} is not a multiple of the {CIFAR_RECORD}-byte record",
            offset=len(data) - len(data) % CIFAR_RECORD,
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = raw[:, 0]
    bad = np.nonzero(labels >= num_classes)[0]
    if bad.size:
        raise FormatError(
            f"label {labels[bad[0]]} out of range [0, {num_classes})",
            offset=int(bad[0]) * CIFAR_RECORD,
        )
    features = raw[:, 1:].astype(np.float32) / 255.0
    return features, labels.astype(np.int64)


def load_dataset(path, format: str, *, labels_path=None, num_classes: int = 10,
                 name: str | None = None) -> Dataset:
    """Parse a dataset file.

    "idx" pairs a big-endian image file (`path`) with a label file
    (`labels_path`); "cifar_bin" reads fixed records of one label byte plus
    3072 pixel bytes from a single file. Malformed content raises
    FormatError naming the byte offset; nothing partial is ever returned.
    """
    if format == "idx":
        if labels_path is None:
            raise InvalidConfigError("idx datasets need labels_path alongside the image path")
        features = _load_idx_images(path)
        labels = _load_idx_labels(labels_path, num_classes)
        if features.shape[0] != labels.shape[0]:
            raise FormatError(
                f"{features.shape[0]} images but {labels.shape[0]} labels", offset=4
            )
        return Dataset(features, labels, num_classes, name or str(path))
    if format == "cifar_bin":
        features, labels = _load_cifar_bin(path, num_classes)
        return Dataset(features, labels, num_classes, name or str(path))
    raise InvalidConfigError(f"unknown dataset format {format!r}; choose from {FORMATS}")


def save_cifar_bin(dataset: Dataset, path) -> None:
    """Write a dataset back out as fixed label+pixels records.

    Inverse of the cifar_bin loader: /255 scaling is undone by rounding, so
    a parsed file round-trips to its exact original bytes.
    """
    if dataset.dim != CIFAR_PIXELS:
        raise InvalidConfigError(
            f"record format needs {CIFAR_PIXELS} features per example, got {dataset.dim}"
        )
    pixels = np.rint(dataset.features * 255.0).astype(np.uint8)
    records = np.empty((len(dataset), CIFAR_RECORD), dtype=np.uint8)
    records[:, 0] = dataset.labels
    records[:, 1:] = pixels
    Path(path).write_bytes(records.tobytes())


def synth_blobs(num_classes: int, n_per_class: int, dim: int, spread: float,
                seed: int) -> Dataset:
    """Gaussian class blobs around uniform-random centers in [0.2, 0.8]^dim.

    Points are center + normal(0, spread), clipped to [0, 1], then shuffled
    so any prefix of the dataset mixes all classes. One seeded stream drives
    centers, noise, and the shuffle, in that order.
    """
    if num_classes < 2:
        raise InvalidConfigError(f"need at least two classes, got {num_classes}")
    if dim < 2:
        raise InvalidConfigError(f"need at least two dimensions, got {dim}")
    if n_per_class < 1:
        raise InvalidConfigError(f"need at least one point per class, got {n_per_class}")
    if not np.isfinite(spread) or spread < 0:
        raise InvalidConfigError(f"spread must be finite and >= 0, got {spread}")
    rng = stream(seed)
    centers = rng.uniform(0.2, 0.8, (num_classes, dim))
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), n_per_class)
    points = centers[labels] + rng.normal(0.0, spread, (labels.size, dim))
    order = rng.permutation(labels.size)
    name = (
        f"synth:K={num_classes},n={n_per_class},dim={dim},"
        f"spread={spread:g},seed={seed}"
    )
    return Dataset(np.clip(points, 0.0, 1.0)[order], labels[order], num_classes, name)


def split_dataset(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded-permutation split; the first round(n * fraction) shuffled
    examples become the training half."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    order = stream(seed).permutation(len(dataset))
    cut = int(round(len(dataset) * train_fraction))
    return dataset.subset(order[:cut]), dataset.subset(order[cut:])


def _parse_kv(body: str, spec: str) -> dict[str, str]:
    pairs = {}
    for part in body.split(","):
        key, sep, value = part.partition("=")
        if not sep or not key or not value:
            raise InvalidConfigError(f"malformed dataset spec {spec!r}")
        if key in pairs:
            raise InvalidConfigError(f"duplicate key {key!r} in dataset spec {spec!r}")
        pairs[key] = value
    return pairs


def parse_dataset_spec(spec: str) -> Dataset:
    """Build a dataset from a spec string (see the module docstring)."""
    scheme, sep, body = spec.partition(":")
    if not sep or not body:
        raise InvalidConfigError(f"dataset spec {spec!r} needs a scheme prefix")
    if scheme == "synth":
        kv = _parse_kv(body, spec)
        extra = set(kv) - {"K", "n", "dim", "spread", "seed"}
        missing = {"K", "n", "dim", "spread", "seed"} - set(kv)
        if extra or missing:
            raise InvalidConfigError(
                f"synth spec takes exactly K,n,dim,spread,seed; got {sorted(kv)}"
            )
        try:
            return synth_blobs(
                int(kv["K"]), int(kv["n"]), int(kv["dim"]), float(kv["spread"]), int(kv["seed"])
            )
        except ValueError as exc:
            raise InvalidConfigError(f"bad number in dataset spec {spec!r}: {exc}") from None
    if scheme == "idx":
        kv = _parse_kv(body, spec)
        if "images" not in kv or "labels" not in kv:
            raise InvalidConfigError(f"idx spec needs images= and labels=, got {sorted(kv)}")
        return load_dataset(
            kv["images"], "idx", labels_path=kv["labels"],
            num_classes=int(kv.get("k", 10)), name=spec,
        )
    if scheme == "cifar":
        kv = _parse_kv(body, spec)
        if "file" not in kv:
            raise InvalidConfigError(f"cifar spec needs file=, got {sorted(kv)}")
        return load_dataset(
            kv["file"], "cifar_bin", num_classes=int(kv.get("k", 10)), name=spec,
        )
    raise InvalidConfigError(f"unknown dataset scheme {scheme!r} in {spec!r}")
