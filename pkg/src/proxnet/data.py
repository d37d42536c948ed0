"""Dataset ingestion, synthetic generation, and heterogeneous partitioning.

MNIST ships as IDX files: a big-endian header (magic, then one 32-bit size
per dimension) followed by the raw payload. Only the unsigned-byte image
(0x00000803) and label (0x00000801) layouts are accepted here. Partitioning
follows the heterogeneous protocol: sort by label, then hand out contiguous
near-equal chunks, so most agents end up with a single class.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DataFormatError

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX byte string into a uint8 tensor, validating length exactly."""
    if len(data) < 4:
        raise DataFormatError(f"IDX header truncated: {len(data)} bytes")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IDX_MAGIC_IMAGES:
        ndim = 3
    elif magic == IDX_MAGIC_LABELS:
        ndim = 1
    else:
        raise DataFormatError(
            f"bad IDX magic 0x{magic:08x}; expected 0x{IDX_MAGIC_IMAGES:08x} (images) "
            f"or 0x{IDX_MAGIC_LABELS:08x} (labels)"
        )
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise DataFormatError(f"IDX header truncated: {len(data)} < {header_len} bytes")
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = data[header_len:]
    if len(payload) != expected:
        raise DataFormatError(
            f"IDX payload length mismatch: expected {expected} bytes for dims {dims}, "
            f"got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def serialize_idx(tensor: np.ndarray) -> bytes:
    """Inverse of parse_idx for round-trip tests; picks the magic from ndim."""
    t = np.asarray(tensor, dtype=np.uint8)
    if t.ndim == 3:
        magic = IDX_MAGIC_IMAGES
    elif t.ndim == 1:
        magic = IDX_MAGIC_LABELS
    else:
        raise DataFormatError(f"only 1-d and 3-d tensors serialize, got ndim={t.ndim}")
    header = struct.pack(f">I{t.ndim}I", magic, *t.shape)
    return header + t.tobytes()


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (rows scaled to [0, 1] for pixels) plus integer-ish labels."""

    features: np.ndarray  # (N, d) float64
    labels: np.ndarray  # (N,)

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError("dataset needs a nonempty (N, d) feature matrix")
        if self.labels.shape[0] != self.features.shape[0]:
            raise DataError("feature / label count mismatch")
        if not np.all(np.isfinite(self.features)):
            raise DataError("non-finite feature values")

    @property
    def n(self) -> int:
        return self.features.shape[0]


def load_mnist(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair, flatten images, scale pixels to [0, 1]."""
    with open(images_path, "rb") as fh:
        images = parse_idx(fh.read())
    with open(labels_path, "rb") as fh:
        labels = parse_idx(fh.read())
    if images.ndim != 3:
        raise DataFormatError(f"{images_path} is not an image file")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise DataFormatError("image / label counts differ")
    feats = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features=feats, labels=labels.astype(np.int64))


def filter_binary(ds: Dataset, pos_digit: int, neg_digit: int) -> Dataset:
    """Keep two classes and relabel them to +1 / -1."""
    if pos_digit == neg_digit or not (0 <= pos_digit <= 9 and 0 <= neg_digit <= 9):
        raise DataError(f"need two distinct digits in 0..9, got {pos_digit}, {neg_digit}")
    keep = (ds.labels == pos_digit) | (ds.labels == neg_digit)
    if not keep.any():
        raise DataError(f"no samples with labels {pos_digit} or {neg_digit}")
    labels = np.where(ds.labels[keep] == pos_digit, 1, -1).astype(np.int64)
    return Dataset(features=ds.features[keep].copy(), labels=labels)


@dataclass(frozen=True)
class Partition:
    """Sample-to-agent assignment; agents' index lists are disjoint and exhaustive."""

    assignment: np.ndarray  # (N,) agent index per sample
    per_agent: tuple[np.ndarray, ...]

    @property
    def n_agents(self) -> int:
        return len(self.per_agent)


def partition_heterogeneous(ds: Dataset, n: int) -> Partition:
    """Stable label sort, then contiguous chunks of near-equal size.

    The first N mod n agents receive one extra sample. Ties within a label
    keep their original dataset order.
    """
    if n < 1:
        raise DataError(f"need at least one agent, got {n}")
    if n > ds.n:
        raise DataError(f"cannot split {ds.n} samples over {n} agents")
    order = np.argsort(ds.labels, kind="stable")
    base, extra = divmod(ds.n, n)
    sizes = [base + 1 if i < extra else base for i in range(n)]
    per_agent = []
    assignment = np.empty(ds.n, dtype=np.int64)
    start = 0
    for i, size in enumerate(sizes):
        chunk = order[start : start + size]
        per_agent.append(chunk)
        assignment[chunk] = i
        start += size
    return Partition(assignment=assignment, per_agent=tuple(per_agent))


def synthetic_binary(n_samples: int, dim: int, seed: int, margin: float = 1.0) -> Dataset:
    """Two unit-variance Gaussian clouds at +-margin * w_star, w_star a random
    unit direction; labels are the cloud signs. margin=0 detaches the labels
    from the features entirely. Deterministic per seed.
    """
    if n_samples < 1 or dim < 1:
        raise DataError(f"need n_samples, dim >= 1, got {n_samples}, {dim}")
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(dim)
    w_star /= np.linalg.norm(w_star)
    labels = rng.choice((-1, 1), size=n_samples).astype(np.int64)
    feats = rng.standard_normal((n_samples, dim))
    feats += margin * labels[:, None] * w_star
    return Dataset(features=feats, labels=labels)
