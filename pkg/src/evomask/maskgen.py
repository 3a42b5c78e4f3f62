"""Evolved hierarchical masks, the depth schedule, and baseline patterns.

Masks use 0 for masked patches and 1 for visible ones. ``r`` is always the
masked fraction and every generator masks exactly ``round(H * W * r)``
patches (Python's round, ties to even).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import PatchGrid
from .errors import (
    DepthOutOfRange,
    EpochOutOfRange,
    FormatError,
    GridTooSmall,
    LeafCountMismatch,
    RatioOutOfRange,
    UnsupportedRatio,
    ValidationError,
)
from .hierarchy import HierarchyTree, frontier_cut
from .rng import SplitMix64

DEFAULT_RATIO = 0.75


@dataclass(frozen=True)
class MaskSchedule:
    total_epochs: int
    ratio: float = DEFAULT_RATIO

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ValidationError("total_epochs must be >= 1")
        _check_ratio(self.ratio)

    def depth(self, epoch: int, height: int) -> int:
        return mask_depth(epoch, self.total_epochs, height)


@dataclass(eq=False)
class Mask:
    grid: PatchGrid
    bits: np.ndarray  # (H, W) uint8, 0 = masked
    ratio: float
    provenance: str
    # leaf spans of the selected subtrees (evolved masks only), truncated span last
    units: list[list[int]] | None = field(default=None, repr=False)

    @property
    def masked_count(self) -> int:
        return int(self.bits.size - np.count_nonzero(self.bits))

    def masked_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits.ravel() == 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.ratio == other.ratio
            and self.provenance == other.provenance
            and np.array_equal(self.bits, other.bits)
        )


def _check_ratio(r: float) -> None:
    if not 0.0 < r <= 1.0:
        raise RatioOutOfRange(f"mask ratio {r} outside (0, 1]")


def target_count(grid: PatchGrid, r: float) -> int:
    _check_ratio(r)
    return round(grid.n * r)


def _mask_from_indices(grid: PatchGrid, masked, r: float, provenance: str, units=None) -> Mask:
    bits = np.ones(grid.n, dtype=np.uint8)
    bits[np.asarray(masked, dtype=np.intp)] = 0
    return Mask(grid, bits.reshape(grid.height, grid.width), r, provenance, units)


def mask_depth(epoch: int, total_epochs: int, height: int) -> int:
    """Masking depth ``1 + floor(height * epoch / total_epochs)``, clamped to ``[1, height]``."""
    if total_epochs < 1 or not 0 <= epoch < total_epochs:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {total_epochs})")
    if height < 1:
        raise DepthOutOfRange(f"tree height {height} must be >= 1")
    return min(max(1 + (height * epoch) // total_epochs, 1), height)


def generate_mask(tree: HierarchyTree, grid: PatchGrid, h: int, r: float, seed: int) -> Mask:
    """Mask whole subtrees at depth ``h`` until ``round(H*W*r)`` patches are covered.

    Frontier nodes are drawn uniformly without replacement; their leaf spans
    (raster order within a span) are concatenated in draw order and cut to
    exactly the target count.
    """
    if tree.leaf_count != grid.n:
        raise LeafCountMismatch(f"tree has {tree.leaf_count} leaves, grid has {grid.n} patches")
    if not 1 <= h <= tree.height:
        raise DepthOutOfRange(f"depth {h} outside [1, {tree.height}]")
    target = target_count(grid, r)
    cut = frontier_cut(tree, h)
    rng = SplitMix64(seed)
    pool = list(cut)
    chosen: list[int] = []
    units: list[list[int]] = []
    i = 0
    while len(chosen) < target:
        j = i + rng.below(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
        span = tree.nodes[pool[i]].leaf_span[: target - len(chosen)]
        chosen.extend(span)
        units.append(list(span))
        i += 1
    return _mask_from_indices(grid, chosen, r, f"evolved(h={h},seed={seed})", units)


def random_mask(grid: PatchGrid, r: float, seed: int) -> Mask:
    target = target_count(grid, r)
    masked = SplitMix64(seed).sample(grid.n, target)
    return _mask_from_indices(grid, masked, r, f"random(seed={seed})")


def grid_stride(r: float, tol: float = 0.02) -> int:
    """Integer stride ``s`` with ``1 - 1/s**2`` within ``tol`` of ``r``."""
    _check_ratio(r)
    if r < 1.0:
        s = max(1, round(1.0 / math.sqrt(1.0 - r)))
        if abs(1.0 - 1.0 / s**2 - r) <= tol:
            return s
    raise UnsupportedRatio(f"ratio {r} is not 1 - 1/s^2 for any integer stride")


def grid_mask(grid: PatchGrid, r: float = DEFAULT_RATIO) -> Mask:
    """Regular lattice: only patches with ``row % s == 0`` and ``col % s == 0`` stay visible.

    The recorded ratio is the realized masked fraction, which equals ``r``
    when ``s`` divides both grid dimensions.
    """
    s = grid_stride(r)
    rows = np.arange(grid.height)[:, None] % s == 0
    cols = np.arange(grid.width)[None, :] % s == 0
    bits = (rows & cols).astype(np.uint8)
    realized = float(grid.n - int(bits.sum())) / grid.n
    return Mask(grid, bits, realized, f"grid(stride={s})")


def block_mask(
    grid: PatchGrid,
    r: float,
    seed: int,
    min_block: int = 16,
    aspect_range: tuple[float, float] = (0.3, 10 / 3),
) -> Mask:
    """Union of random rectangles, then trimmed to exactly ``round(H*W*r)`` patches.

    Each rectangle has area uniform in ``[min_block, remaining]`` and a
    log-uniform aspect ratio; when clipping to the grid shrinks it below the
    drawn area, the other side is grown to compensate where it fits.
    """
    if grid.n < min_block:
        raise GridTooSmall(f"{grid.height}x{grid.width} grid smaller than min_block={min_block}")
    target = target_count(grid, r)
    rng = SplitMix64(seed)
    H, W = grid.height, grid.width
    masked = np.zeros((H, W), dtype=bool)
    lo_aspect, hi_aspect = math.log(aspect_range[0]), math.log(aspect_range[1])
    count = 0
    while count < target:
        remaining = max(target - count, min_block)
        area = min_block + rng.uniform() * (remaining - min_block)
        aspect = math.exp(lo_aspect + rng.uniform() * (hi_aspect - lo_aspect))
        bh = min(max(round(math.sqrt(area * aspect)), 1), H)
        bw = min(max(round(math.sqrt(area / aspect)), 1), W)
        if bh * bw < area:
            bh = min(H, math.ceil(area / bw))
        if bh * bw < area:
            bw = min(W, math.ceil(area / bh))
        top = rng.below(H - bh + 1)
        left = rng.below(W - bw + 1)
        masked[top : top + bh, left : left + bw] = True
        count = int(masked.sum())
    if count > target:
        flat = np.flatnonzero(masked.ravel())
        drop = rng.sample(len(flat), count - target)
        masked.ravel()[flat[drop]] = False
    bits = (~masked).astype(np.uint8)
    return Mask(grid, bits, r, f"block(seed={seed})")


# --- EHMK text format --------------------------------------------------------

_HEADER_RE = re.compile(r"EHMK (\d+) (\d+) (\S+) (\S+)")


def dumps_mask(mask: Mask) -> str:
    lines = [f"EHMK {mask.grid.height} {mask.grid.width} {mask.ratio!r} {mask.provenance}"]
    lines += ["".join("1" if b else "0" for b in row) for row in mask.bits]
    return "\n".join(lines) + "\n"


def loads_mask(text: str, patch_size: int = 16) -> Mask:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    m = _HEADER_RE.fullmatch(lines[0]) if lines else None
    if m is None:
        raise FormatError("missing or malformed EHMK header")
    H, W = int(m.group(1)), int(m.group(2))
    try:
        r = float(m.group(3))
    except ValueError as exc:
        raise FormatError(f"bad ratio field {m.group(3)!r}") from exc
    rows = lines[1:]
    if len(rows) != H or any(len(row) != W or set(row) - {"0", "1"} for row in rows):
        raise FormatError(f"EHMK body must be {H} rows of {W} characters from {{0,1}}")
    bits = np.array([[c == "1" for c in row] for row in rows], dtype=np.uint8).reshape(H, W)
    return Mask(PatchGrid(H, W, patch_size), bits, r, m.group(4))


def save_mask(path: str | Path, mask: Mask) -> None:
    Path(path).write_text(dumps_mask(mask), encoding="utf-8")


def load_mask(path: str | Path, patch_size: int = 16) -> Mask:
    return loads_mask(Path(path).read_text(encoding="utf-8"), patch_size)
