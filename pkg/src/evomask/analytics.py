"""Diagnostics: mean attention distance, depth partitions, mask statistics, purity."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .attention import AttentionBatch, PatchGrid, SimilarityMatrix
from .errors import DepthOutOfRange, GridMismatch, RangeOutOfBounds, ZeroRow
from .hierarchy import HierarchyTree, frontier_cut
from .maskgen import Mask

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def mean_attention_distance(weights: np.ndarray | SimilarityMatrix, grid: PatchGrid) -> float:
    """Attention-weighted mean query-to-key distance in pixels.

    Rows are normalized first, so any positive per-row scale gives the same result.
    """
    w = np.asarray(weights.values if isinstance(weights, SimilarityMatrix) else weights, dtype=np.float64)
    if w.shape != (grid.n, grid.n):
        raise GridMismatch(f"weights {w.shape} do not match a {grid.height}x{grid.width} grid")
    sums = w.sum(axis=1)
    if (sums <= 0).any():
        raise ZeroRow(f"row {int(np.argmax(sums <= 0))} has no positive mass")
    xy = grid.coords()
    dist = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=-1))
    per_query = (w * dist).sum(axis=1) / sums
    return float(per_query.mean() * grid.patch_size)


def layer_attention_distance(batch: AttentionBatch, grid: PatchGrid, image_index: int = 0) -> list[float]:
    """Per-layer distance, computed per head and then averaged over heads."""
    if not 0 <= image_index < batch.images:
        raise RangeOutOfBounds(f"image {image_index} outside [0, {batch.images})")
    batch.check_grid(grid)
    return [
        float(np.mean([mean_attention_distance(head, grid) for head in batch.values[image_index, layer]]))
        for layer in range(batch.layers)
    ]


@dataclass(eq=False)
class LabelMap:
    grid: PatchGrid
    labels: np.ndarray  # (H, W) int

    @property
    def label_count(self) -> int:
        return int(self.labels.max()) + 1


def partition_map(tree: HierarchyTree, grid: PatchGrid, h: int) -> LabelMap:
    """Label each patch with the index of its covering frontier node at depth ``h``."""
    if tree.leaf_count != grid.n:
        raise GridMismatch(f"tree has {tree.leaf_count} leaves, grid has {grid.n} patches")
    if not 1 <= h <= tree.height:
        raise DepthOutOfRange(f"depth {h} outside [1, {tree.height}]")
    labels = np.empty(grid.n, dtype=np.int64)
    for label, node in enumerate(frontier_cut(tree, h)):
        labels[tree.nodes[node].leaf_span] = label
    return LabelMap(grid, labels.reshape(grid.height, grid.width))


@dataclass(frozen=True)
class MaskStats:
    component_count: int
    mean_component_size: float
    masked_fraction: float
    bounding_coverage: float

    def lines(self) -> list[str]:
        return [
            f"component_count={self.component_count}",
            f"mean_component_size={self.mean_component_size:.6g}",
            f"masked_fraction={self.masked_fraction:.6g}",
            f"bounding_coverage={self.bounding_coverage:.6g}",
        ]


def masked_components(mask: Mask) -> tuple[np.ndarray, int]:
    """4-connected labeling of masked cells; 0 marks visible cells."""
    return ndimage.label(mask.bits == 0, structure=_FOUR_CONNECTED)


def mask_stats(mask: Mask) -> MaskStats:
    masked = mask.bits == 0
    _, count = masked_components(mask)
    n_masked = int(masked.sum())
    rows = int(masked.any(axis=1).sum())
    cols = int(masked.any(axis=0).sum())
    H, W = masked.shape
    return MaskStats(
        component_count=count,
        mean_component_size=n_masked / count if count else 0.0,
        masked_fraction=n_masked / masked.size,
        bounding_coverage=(rows + cols) / (H + W),
    )


@dataclass(frozen=True)
class Purity:
    """Masked-patch-weighted purity plus per-region ``(size, purity)`` pairs."""

    value: float
    regions: tuple[tuple[int, float], ...]
    by_subtree: bool


def _region_purity(members: np.ndarray, segment_of: np.ndarray) -> float:
    return float(np.bincount(segment_of[members]).max()) / len(members)


def mask_purity(mask: Mask, scene) -> Purity:
    """How much each masked region stays inside one ground-truth segment.

    Regions are the selected subtrees when the mask carries them, otherwise
    the 4-connected masked components. An empty mask is vacuously pure.
    """
    if mask.grid.height != scene.grid.height or mask.grid.width != scene.grid.width:
        raise GridMismatch("mask and scene grids differ")
    seg = np.asarray(scene.segment_of)
    if mask.units is not None:
        regions = [np.asarray(u, dtype=np.intp) for u in mask.units if u]
    else:
        labels, count = masked_components(mask)
        flat = labels.ravel()
        regions = [np.flatnonzero(flat == k) for k in range(1, count + 1)]
    if not regions:
        return Purity(1.0, (), mask.units is not None)
    parts = tuple((len(r), _region_purity(r, seg)) for r in regions)
    total = sum(size for size, _ in parts)
    value = sum(size * p for size, p in parts) / total
    return Purity(value, parts, mask.units is not None)


# --- text outputs ------------------------------------------------------------


def dumps_label_table(labels: np.ndarray, header: str) -> str:
    lines = [header] + [" ".join(str(int(v)) for v in row) for row in labels]
    return "\n".join(lines) + "\n"


def loads_label_table(text: str) -> tuple[str, np.ndarray]:
    lines = [ln for ln in text.split("\n") if ln != ""]
    rows = [[int(v) for v in ln.split()] for ln in lines[1:]]
    return lines[0], np.array(rows, dtype=np.int64)


def write_pgm(path: str | Path, labels: np.ndarray, scale: int = 1) -> None:
    """Binary PGM of a label map, labels spread over 0..255 and upscaled by ``scale``."""
    top = max(int(labels.max()), 1)
    img = (labels.astype(np.float64) * (255.0 / top)).round().astype(np.uint8)
    img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())
