"""Attention ingestion, aggregation into patch similarity, and oracle attention.

EHMA file layout (little-endian)::

    offset  size  field
    0       4     magic b"EHMA"
    4       1     version (u8) = 1
    5       3     reserved, zero
    8       16    images, layers, heads, tokens (u32 each)
    24      ...   float32 payload, [image][layer][head][query][key]
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionMismatch, InvalidValue, MalformedHeader, RangeOutOfBounds, ValidationError
from .rng import SplitMix64

if TYPE_CHECKING:
    from .simharness import Scene

MAGIC = b"EHMA"
VERSION = 1
_HEADER = struct.Struct("<4sB3s4I")


@dataclass(frozen=True)
class PatchGrid:
    """Patch layout of an image; token ``i`` sits at ``(i // width, i % width)``."""

    height: int
    width: int
    patch_size: int = 16

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1 or self.patch_size < 1:
            raise ValidationError(f"invalid patch grid {self.height}x{self.width} @ {self.patch_size}px")

    @property
    def n(self) -> int:
        return self.height * self.width

    def coords(self) -> np.ndarray:
        """``(n, 2)`` array of ``(row, col)`` patch coordinates in raster order."""
        idx = np.arange(self.n)
        return np.stack([idx // self.width, idx % self.width], axis=1).astype(np.float64)

    @classmethod
    def square(cls, n: int, patch_size: int = 16) -> "PatchGrid":
        side = int(round(n**0.5))
        if side * side != n:
            raise ValidationError(f"{n} tokens do not form a square grid; pass explicit dims")
        return cls(side, side, patch_size)


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Symmetric nonnegative patch-pair affinities; the diagonal is never read by consumers."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, key):
        return self.values[key]


@dataclass(eq=False)
class AttentionBatch:
    values: np.ndarray  # (images, layers, heads, N, N)
    row_normalized: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.ndim != 5 or v.shape[3] != v.shape[4]:
            raise DimensionMismatch(f"attention must be (images, layers, heads, N, N), got {v.shape}")
        if np.isnan(v).any():
            raise InvalidValue("attention contains NaN")
        if (v < 0).any():
            raise InvalidValue("attention contains negative entries")
        if self.row_normalized and not np.allclose(v.sum(axis=-1), 1.0, rtol=0, atol=1e-4):
            raise InvalidValue("rows declared normalized but do not sum to 1")
        self.values = v

    @property
    def images(self) -> int:
        return self.values.shape[0]

    @property
    def layers(self) -> int:
        return self.values.shape[1]

    @property
    def heads(self) -> int:
        return self.values.shape[2]

    @property
    def tokens(self) -> int:
        return self.values.shape[3]

    def check_grid(self, grid: PatchGrid) -> None:
        if grid.n != self.tokens:
            raise DimensionMismatch(f"{self.tokens} tokens do not match a {grid.height}x{grid.width} grid")


def load_attention(path: str | Path) -> AttentionBatch:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MalformedHeader(f"{path}: file shorter than EHMA header")
    magic, version, reserved, images, layers, heads, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    if reserved != b"\0\0\0":
        raise MalformedHeader(f"{path}: reserved bytes must be zero")
    count = images * layers * heads * n * n
    payload = len(data) - _HEADER.size
    if payload != 4 * count:
        raise DimensionMismatch(f"{path}: payload has {payload} bytes, header implies {4 * count}")
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size, count=count)
    return AttentionBatch(values.reshape(images, layers, heads, n, n).astype(np.float32))


def save_attention(path: str | Path, values: np.ndarray) -> None:
    """Write a ``(images, layers, heads, N, N)`` array as an EHMA file."""
    v = np.asarray(values)
    if v.ndim == 2:
        v = v[None, None, None]
    if v.ndim != 5 or v.shape[3] != v.shape[4]:
        raise DimensionMismatch(f"cannot write attention of shape {v.shape}")
    header = _HEADER.pack(MAGIC, VERSION, b"\0\0\0", *v.shape[:4])
    Path(path).write_bytes(header + np.ascontiguousarray(v, dtype="<f4").tobytes())


def default_layer_range(layers: int) -> tuple[int, int]:
    """First half of the layers, inclusive bounds."""
    return 0, max(0, layers // 2 - 1)


def aggregate(
    batch: AttentionBatch,
    image_index: int = 0,
    layer_range: tuple[int, int] | None = None,
) -> SimilarityMatrix:
    """Mean over all heads of the layers in ``layer_range`` (inclusive), symmetrized."""
    if not 0 <= image_index < batch.images:
        raise RangeOutOfBounds(f"image {image_index} outside [0, {batch.images})")
    lo, hi = default_layer_range(batch.layers) if layer_range is None else layer_range
    if not 0 <= lo <= hi < batch.layers:
        raise RangeOutOfBounds(f"layer range {lo}..{hi} outside [0, {batch.layers})")
    m = batch.values[image_index, lo : hi + 1].astype(np.float64).mean(axis=(0, 1))
    return SimilarityMatrix((m + m.T) / 2.0)


def oracle_attention(scene: "Scene", noise: float, jitter: float = 0.0, seed: int = 0) -> SimilarityMatrix:
    """Synthetic similarity that knows the scene segmentation up to ``noise``.

    Same-segment pairs get ``(1 - noise) / |segment|``, every pair gets an
    extra ``noise / N``; Gaussian jitter of std ``jitter`` is added, then the
    result is clamped at zero and symmetrized.
    """
    if not 0.0 <= noise <= 1.0:
        raise ValidationError(f"noise level {noise} outside [0, 1]")
    if jitter < 0:
        raise ValidationError(f"jitter std {jitter} is negative")
    seg = np.asarray(scene.segment_of)
    n = seg.shape[0]
    sizes = np.bincount(seg)
    same = seg[:, None] == seg[None, :]
    base = (1.0 - noise) * same / sizes[seg][:, None] + noise * (1.0 / n)
    if jitter > 0:
        base = base + jitter * SplitMix64(seed).normal_block(n * n).reshape(n, n)
    base = np.maximum(base, 0.0)
    return SimilarityMatrix((base + base.T) / 2.0)


def annealed_noise(epoch: int, total_epochs: int, start: float = 0.9) -> float:
    """Oracle noise that decays linearly from ``start`` at epoch 0 toward 0."""
    return start * (1.0 - epoch / total_epochs)
