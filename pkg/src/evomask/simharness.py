"""Synthetic co-evolution loop: scenes, annealed oracle attention, trees, evolved masks.

The trained encoder is replaced by :func:`~evomask.attention.oracle_attention`
whose noise decays linearly over epochs, so similarity improves as training
"progresses" while the mask depth climbs the tree.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .analytics import dumps_label_table, loads_label_table, mask_purity, mask_stats, mean_attention_distance
from .attention import PatchGrid, annealed_noise, oracle_attention
from .errors import FormatError, TooManySegments, ValidationError
from .hierarchy import CHILDREN_AVERAGE, LINKAGES, build_tree
from .maskgen import Mask, generate_mask, mask_depth, target_count
from .rng import SplitMix64, derive_seed


@dataclass(eq=False)
class Scene:
    grid: PatchGrid
    segment_of: np.ndarray  # (N,) segment id per patch, raster order
    segment_count: int

    def __post_init__(self) -> None:
        seg = np.asarray(self.segment_of, dtype=np.int64).ravel()
        if seg.shape[0] != self.grid.n:
            raise ValidationError(f"scene has {seg.shape[0]} labels for {self.grid.n} patches")
        if seg.min() < 0 or seg.max() >= self.segment_count:
            raise ValidationError("segment ids outside [0, K)")
        if (np.bincount(seg, minlength=self.segment_count) == 0).any():
            raise ValidationError("every segment must be non-empty")
        self.segment_of = seg

    def segments(self) -> list[list[int]]:
        return [np.flatnonzero(self.segment_of == k).tolist() for k in range(self.segment_count)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.segment_count == other.segment_count
            and np.array_equal(self.segment_of, other.segment_of)
        )


def make_scene(grid: PatchGrid, segments: int, seed: int) -> Scene:
    """Voronoi partition of the patch grid around ``segments`` distinct seeded centers.

    Patches go to the nearest center (squared Euclidean in patch units), ties
    to the center drawn first.
    """
    if not 1 <= segments <= grid.n:
        raise TooManySegments(f"{segments} segments for {grid.n} patches")
    centers = SplitMix64(seed).sample(grid.n, segments)
    xy = grid.coords()
    d2 = ((xy[:, None, :] - xy[np.asarray(centers)][None, :, :]) ** 2).sum(axis=-1)
    return Scene(grid, np.argmin(d2, axis=1), segments)


def dumps_scene(scene: Scene) -> str:
    header = f"SCENE {scene.grid.height} {scene.grid.width} {scene.segment_count}"
    return dumps_label_table(scene.segment_of.reshape(scene.grid.height, scene.grid.width), header)


def loads_scene(text: str, patch_size: int = 16) -> Scene:
    try:
        header, labels = loads_label_table(text)
        tag, H, W, K = header.split()
        if tag != "SCENE":
            raise ValueError(f"unexpected header tag {tag!r}")
        grid = PatchGrid(int(H), int(W), patch_size)
        if labels.shape != (grid.height, grid.width):
            raise ValueError(f"label table shape {labels.shape} does not match header")
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed scene file: {exc}") from exc
    return Scene(grid, labels.ravel(), int(K))


@dataclass(frozen=True)
class SimConfig:
    height: int = 8
    width: int = 8
    segments: int = 4
    total_epochs: int = 20
    ratio: float = 0.75
    noise_start: float = 0.9
    jitter: float = 0.0
    seed: int = 0
    images_per_epoch: int = 16
    linkage: str = CHILDREN_AVERAGE
    patch_size: int = 16
    pin_scene: bool = False
    # ablation: schedule depth against this height instead of each tree's own
    fixed_height: int | None = None

    def __post_init__(self) -> None:
        for name in ("height", "width", "segments", "total_epochs", "images_per_epoch", "patch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if not 0.0 < self.ratio <= 1.0:
            raise ValidationError(f"ratio {self.ratio} outside (0, 1]")
        if not 0.0 <= self.noise_start <= 1.0:
            raise ValidationError(f"noise_start {self.noise_start} outside [0, 1]")
        if self.jitter < 0:
            raise ValidationError("jitter must be >= 0")
        if self.linkage not in LINKAGES:
            raise ValidationError(f"unknown linkage {self.linkage!r}")
        if self.fixed_height is not None and self.fixed_height < 1:
            raise ValidationError("fixed_height must be >= 1")

    @property
    def grid(self) -> PatchGrid:
        return PatchGrid(self.height, self.width, self.patch_size)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise FormatError(f"{path}: config must be a JSON object")
        try:
            return cls.from_dict(doc)
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc


@dataclass
class EpochReport:
    epoch: int
    depth: float
    height: float
    noise: float
    masked_count: int
    purity: float
    mean_component_size: float
    mean_attention_distance: float
    masks: list[tuple[int, Mask]] = field(default_factory=list, repr=False, compare=False)


REPORT_COLUMNS = (
    "epoch",
    "depth",
    "height",
    "noise",
    "masked_count",
    "purity",
    "mean_component_size",
    "mad_px",
)


@dataclass
class _ItemResult:
    depth: int
    height: int
    masked_count: int
    purity: float
    component_size: float
    mad: float
    mask: Mask


def _run_item(config: SimConfig, epoch: int, image: int, noise: float, pinned: Scene | None) -> _ItemResult:
    grid = config.grid
    item_seed = derive_seed(config.seed, epoch, image)
    scene = pinned if pinned is not None else make_scene(grid, config.segments, derive_seed(item_seed, 0))
    sim = oracle_attention(scene, noise, config.jitter, derive_seed(item_seed, 1))
    tree = build_tree(sim, config.linkage)
    l = config.fixed_height or tree.height
    h = min(mask_depth(epoch, config.total_epochs, l), tree.height)
    mask = generate_mask(tree, grid, h, config.ratio, derive_seed(item_seed, 2))
    return _ItemResult(
        depth=h,
        height=tree.height,
        masked_count=mask.masked_count,
        purity=mask_purity(mask, scene).value,
        component_size=mask_stats(mask).mean_component_size,
        mad=mean_attention_distance(sim, grid),
        mask=mask,
    )


def pinned_scene(config: SimConfig) -> Scene:
    return make_scene(config.grid, config.segments, derive_seed(config.seed, 1 << 32))


def run_simulation(config: SimConfig, workers: int | None = None, sample_images: int = 0) -> list[EpochReport]:
    """One report per epoch; per-image results are reduced in image order.

    ``sample_images`` keeps the masks of the first that many images per epoch.
    """
    if config.segments > config.height * config.width:
        raise TooManySegments(f"{config.segments} segments for {config.height * config.width} patches")
    pinned = pinned_scene(config) if config.pin_scene else None
    expected = target_count(config.grid, config.ratio)
    reports = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers and workers > 1 else None
    try:
        for t in range(config.total_epochs):
            noise = annealed_noise(t, config.total_epochs, config.noise_start)
            images = range(config.images_per_epoch)
            run = lambda i: _run_item(config, t, i, noise, pinned)  # noqa: E731
            items = list(pool.map(run, images)) if pool else [run(i) for i in images]
            counts = {it.masked_count for it in items}
            assert counts == {expected}, f"masked counts {counts} != {expected}"
            k = len(items)
            reports.append(
                EpochReport(
                    epoch=t,
                    depth=sum(it.depth for it in items) / k,
                    height=sum(it.height for it in items) / k,
                    noise=noise,
                    masked_count=expected,
                    purity=sum(it.purity for it in items) / k,
                    mean_component_size=sum(it.component_size for it in items) / k,
                    mean_attention_distance=sum(it.mad for it in items) / k,
                    masks=[(i, items[i].mask) for i in range(min(sample_images, k))],
                )
            )
    finally:
        if pool:
            pool.shutdown()
    return reports


def dumps_reports(reports: list[EpochReport]) -> str:
    lines = ["# artifact-defined metrics: purity, mean_component_size", " ".join(REPORT_COLUMNS)]
    for r in reports:
        lines.append(
            f"{r.epoch} {r.depth:.6g} {r.height:.6g} {r.noise:.6g} {r.masked_count} "
            f"{r.purity:.6g} {r.mean_component_size:.6g} {r.mean_attention_distance:.6g}"
        )
    return "\n".join(lines) + "\n"
