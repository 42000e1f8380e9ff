"""Deterministic chunked streams with sudden drift.

Two sources are supported: Gaussian blobs clipped to the unit cube and
IDX-format image corpora (MNIST layout). Every random draw comes from a
generator keyed on ``(seed, purpose, chunk index)`` so any chunk can be rebuilt
on its own, independent of iteration order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

OLD, NEW = "old", "new"
DRIFT_KINDS = ("none", "sudden-noise", "semantic-regroup", "mean-shift")
SOURCES = ("synthetic-gaussians", "idx-files")

POSITIVE_OLD = frozenset({0, 2, 4, 7, 9})
POSITIVE_NEW = frozenset({1, 3, 5})

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801

# purpose tags for keyed generators
_TAG_MEANS, _TAG_SAMPLES, _TAG_NOISE, _TAG_PERM = 1, 2, 3, 4


class IDXFormatError(ValueError):
    pass


def keyed_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-style generator: the stream depends only on ``(seed, *keys)``."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])


@dataclass
class Chunk:
    index: int
    X: np.ndarray
    y: np.ndarray
    concept: str = OLD

    def __len__(self):
        return len(self.y)

    @property
    def nbytes(self) -> int:
        return int(self.X.nbytes + self.y.nbytes)


def stack(chunks: Sequence[Chunk]) -> tuple[np.ndarray, np.ndarray]:
    if not chunks:
        raise ValueError("no chunks to stack")
    return np.concatenate([c.X for c in chunks]), np.concatenate([c.y for c in chunks])


@dataclass
class DriftSpec:
    kind: str = "none"
    drift_chunk: int = 1
    sigma: float = 0.5
    sigma_before: float = 0.0
    offset: float | list[float] = 0.3
    positive_old: tuple[int, ...] = tuple(sorted(POSITIVE_OLD))
    positive_new: tuple[int, ...] = tuple(sorted(POSITIVE_NEW))

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"drift.kind must be one of {DRIFT_KINDS}, got {self.kind!r}")
        if self.drift_chunk < 1:
            raise ValueError(f"drift.drift_chunk must be >= 1, got {self.drift_chunk}")
        if self.sigma < 0 or self.sigma_before < 0:
            raise ValueError("drift.sigma must be >= 0")


@dataclass
class StreamSpec:
    source: str = "synthetic-gaussians"
    m: int = 100
    n_chunks: int = 20
    seed: int = 0
    drift: DriftSpec = field(default_factory=DriftSpec)
    # synthetic source
    d: int = 10
    n_classes: int = 3
    cov_scale: float = 0.15
    mean_low: float = 0.25
    mean_high: float = 0.75
    # idx source
    images_path: str | None = None
    labels_path: str | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"stream.source must be one of {SOURCES}, got {self.source!r}")
        if self.m < 1:
            raise ValueError(f"stream.m must be >= 1, got {self.m}")
        if self.n_chunks < 1:
            raise ValueError(f"stream.n_chunks must be >= 1, got {self.n_chunks}")
        if self.source == "synthetic-gaussians":
            if self.d < 1:
                raise ValueError(f"stream.d must be >= 1, got {self.d}")
            if self.n_classes < 2:
                raise ValueError(f"stream.n_classes must be >= 2, got {self.n_classes}")
            if self.drift.kind == "semantic-regroup" and self.n_classes != 10:
                raise ValueError("stream.n_classes must be 10 for semantic-regroup drift")
        elif not (self.images_path and self.labels_path):
            raise ValueError("stream.images_path and stream.labels_path are required for idx-files")

    @property
    def model_classes(self) -> int:
        """Number of classes the learner sees (binary after semantic regrouping)."""
        if self.drift.kind == "semantic-regroup":
            return 2
        if self.source == "idx-files":
            return 10
        return self.n_classes

    def concept(self, index: int) -> str:
        if self.drift.kind == "none":
            return OLD
        return OLD if index < self.drift.drift_chunk else NEW


# --------------------------------------------------------------------------
# drift primitives


def apply_noise(chunk: Chunk, sigma: float, seed: int) -> Chunk:
    """Add N(0, sigma^2) to every feature, then clamp to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return Chunk(chunk.index, chunk.X.copy(), chunk.y.copy(), chunk.concept)
    rng = keyed_rng(seed, _TAG_NOISE, chunk.index)
    # row i of the draw belongs to sample i, so noise is keyed on (seed, chunk, sample)
    X = np.clip(chunk.X + sigma * rng.standard_normal(chunk.X.shape), 0.0, 1.0)
    return Chunk(chunk.index, X, chunk.y.copy(), chunk.concept)


def semantic_relabel(label: int, phase: str, positive_old=POSITIVE_OLD, positive_new=POSITIVE_NEW) -> int:
    if not 0 <= int(label) < 10:
        raise ValueError(f"label {label} out of range [0, 10)")
    if phase == OLD:
        return int(int(label) in positive_old)
    if phase == NEW:
        return int(int(label) in positive_new)
    raise ValueError(f"phase must be 'old' or 'new', got {phase!r}")


def _relabel_array(y: np.ndarray, phase: str, drift: DriftSpec) -> np.ndarray:
    if y.min() < 0 or y.max() >= 10:
        raise ValueError("semantic relabelling needs labels in [0, 10)")
    positive = drift.positive_old if phase == OLD else drift.positive_new
    return np.isin(y, list(positive)).astype(np.int64)


# --------------------------------------------------------------------------
# IDX files


def load_idx(path, expect: int | None = None) -> np.ndarray:
    """Parse one big-endian IDX file (ubyte payload).

    Image tensors (magic 0x00000803) come back as ``(n, rows*cols)`` floats in
    [0, 1]; label vectors (0x00000801) as ``int64``. ``expect`` pins the magic.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IDXFormatError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IDX_IMAGES, IDX_LABELS) or (expect is not None and magic != expect):
        raise IDXFormatError(f"{path}: wrong magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise IDXFormatError(f"{path}: truncated payload ({len(raw) - header} of {size} bytes)")
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header)
    if magic == IDX_LABELS:
        return data.astype(np.int64)
    return data.reshape(dims[0], -1).astype(np.float64) / 255.0


def load_idx_pair(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    X = load_idx(images_path, expect=IDX_IMAGES)
    y = load_idx(labels_path, expect=IDX_LABELS)
    if len(X) != len(y):
        raise IDXFormatError(f"dimension mismatch: {len(X)} images vs {len(y)} labels")
    return X, y


def write_idx(path, array: np.ndarray) -> None:
    """Write a ubyte IDX file; 3-D arrays become image files, 1-D label files."""
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


# --------------------------------------------------------------------------
# streams


def class_means(spec: StreamSpec) -> np.ndarray:
    rng = keyed_rng(spec.seed, _TAG_MEANS)
    return rng.uniform(spec.mean_low, spec.mean_high, size=(spec.n_classes, spec.d))


def _offset_vector(drift: DriftSpec, d: int) -> np.ndarray:
    off = np.asarray(drift.offset, dtype=np.float64)
    if off.ndim == 0:
        return np.full(d, float(off))
    if off.shape != (d,):
        raise ValueError(f"drift.offset must be a scalar or length-{d} vector")
    return off


def _synthetic_chunk(spec: StreamSpec, means: np.ndarray, index: int, concept: str) -> Chunk:
    rng = keyed_rng(spec.seed, _TAG_SAMPLES, index)
    y = rng.integers(0, spec.n_classes, size=spec.m)
    mu = means[y]
    if concept == NEW and spec.drift.kind == "mean-shift":
        mu = mu + _offset_vector(spec.drift, spec.d)
    X = np.clip(mu + spec.cov_scale * rng.standard_normal((spec.m, spec.d)), 0.0, 1.0)
    return Chunk(index, X, y.astype(np.int64), concept)


def _finish(spec: StreamSpec, chunk: Chunk) -> Chunk:
    drift = spec.drift
    if drift.kind == "sudden-noise":
        sigma = drift.sigma if chunk.concept == NEW else drift.sigma_before
        chunk = apply_noise(chunk, sigma, spec.seed)
    elif drift.kind == "semantic-regroup":
        chunk = Chunk(chunk.index, chunk.X, _relabel_array(chunk.y, chunk.concept, drift), chunk.concept)
    return chunk


def make_stream(spec: StreamSpec) -> Iterator[Chunk]:
    """Lazily yield ``spec.n_chunks`` chunks of ``spec.m`` samples each."""
    if spec.source == "synthetic-gaussians":
        means = class_means(spec)
        for k in range(spec.n_chunks):
            yield _finish(spec, _synthetic_chunk(spec, means, k, spec.concept(k)))
        return

    X, y = load_idx_pair(spec.images_path, spec.labels_path)
    need = spec.m * spec.n_chunks
    if spec.m > len(X) or need > len(X):
        raise ValueError(
            f"stream needs {need} samples (m={spec.m}, n_chunks={spec.n_chunks}) "
            f"but {spec.images_path} holds {len(X)}"
        )
    order = keyed_rng(spec.seed, _TAG_PERM).permutation(len(X))
    for k in range(spec.n_chunks):
        idx = order[k * spec.m:(k + 1) * spec.m]
        yield _finish(spec, Chunk(k, X[idx].copy(), y[idx].copy(), spec.concept(k)))


def materialize(spec: StreamSpec) -> list[Chunk]:
    return list(make_stream(spec))


def sample_phase(spec: StreamSpec, n: int, concept: str = NEW, key: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Held-out draw of ``n`` samples from one phase of a synthetic stream.

    Uses chunk keys offset by 2**31 so the draw never overlaps training chunks.
    """
    if spec.source != "synthetic-gaussians":
        raise ValueError("held-out phase sampling is only defined for synthetic streams")
    sub = replace(spec, m=n, n_chunks=1)
    means = class_means(spec)
    chunk = _synthetic_chunk(sub, means, 2**31 + key, concept)
    chunk = _finish(sub, chunk)
    return chunk.X, chunk.y
