"""Command-line interface.

Exit codes: 0 success, 2 I/O or format error, 3 validation error. Every run
first prints a ``# config:`` line with the resolved arguments.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    dumps_label_table,
    layer_attention_distance,
    mask_purity,
    mask_stats,
    partition_map,
    write_pgm,
)
from .attention import PatchGrid, aggregate, load_attention, oracle_attention, save_attention
from .errors import FormatError, ValidationError
from .hierarchy import CHILDREN_AVERAGE, LINKAGES, build_tree, load_tree, save_tree
from .maskgen import block_mask, generate_mask, grid_mask, load_mask, mask_depth, random_mask, save_mask
from .simharness import SimConfig, dumps_reports, dumps_scene, loads_scene, make_scene, run_simulation

EXIT_OK, EXIT_FORMAT, EXIT_VALIDATION = 0, 2, 3


def _grid_dims(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None


def _layer_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None


def _grid_for(n: int, dims: tuple[int, int] | None, patch_size: int = 16) -> PatchGrid:
    if dims is None:
        return PatchGrid.square(n, patch_size)
    grid = PatchGrid(dims[0], dims[1], patch_size)
    if grid.n != n:
        raise ValidationError(f"grid {dims[0]}x{dims[1]} does not match {n} tokens")
    return grid


def cmd_build_tree(args) -> int:
    batch = load_attention(args.attention)
    sim = aggregate(batch, args.image, args.layers)
    tree = build_tree(sim, args.linkage)
    save_tree(args.out, tree)
    print(f"nodes={len(tree.nodes)} height={tree.height}")
    return EXIT_OK


def cmd_mask(args) -> int:
    tree = load_tree(args.tree)
    grid = _grid_for(tree.leaf_count, args.grid)
    l = args.depth_fixed or tree.height
    h = mask_depth(args.epoch, args.epochs, l)
    mask = generate_mask(tree, grid, h, args.ratio, args.seed)
    save_mask(args.out, mask)
    print(f"h={h}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    grid = PatchGrid(*args.grid)
    if args.kind == "random":
        mask = random_mask(grid, args.ratio, args.seed)
    elif args.kind == "grid":
        mask = grid_mask(grid, args.ratio)
    else:
        mask = block_mask(grid, args.ratio, args.seed, min_block=args.min_block)
    save_mask(args.out, mask)
    print(f"masked_count={mask.masked_count}")
    return EXIT_OK


def cmd_analyze_mad(args) -> int:
    batch = load_attention(args.attention)
    grid = _grid_for(batch.tokens, args.grid, args.patch_size)
    per_layer = layer_attention_distance(batch, grid, args.image)
    if args.per_layer:
        for i, d in enumerate(per_layer):
            print(f"layer={i} mad_px={d:.6f}")
    else:
        print(f"{float(np.mean(per_layer)):.6f}")
    return EXIT_OK


def cmd_analyze_stats(args) -> int:
    mask = load_mask(args.mask)
    print("\n".join(mask_stats(mask).lines()))
    return EXIT_OK


def cmd_analyze_partition(args) -> int:
    tree = load_tree(args.tree)
    grid = _grid_for(tree.leaf_count, args.grid)
    labels = partition_map(tree, grid, args.depth)
    text = dumps_label_table(labels.labels, f"PARTITION {grid.height} {grid.width} h={args.depth}")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.pgm:
        write_pgm(args.pgm, labels.labels, args.scale)
    return EXIT_OK


def cmd_analyze_purity(args) -> int:
    mask = load_mask(args.mask)
    scene = loads_scene(Path(args.scene).read_text(encoding="utf-8"))
    result = mask_purity(mask, scene)
    print(f"purity={result.value:.6g}")
    print(f"regions={len(result.regions)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = SimConfig.load(args.config)
    print(f"# sim: {config.to_json()}")
    reports = run_simulation(config, workers=args.workers, sample_images=args.sample_images)
    text = dumps_reports(reports)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.mask_dir and args.sample_images:
        out = Path(args.mask_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in reports:
            for i, mask in r.masks:
                save_mask(out / f"epoch{r.epoch:04d}_image{i:04d}.ehmk", mask)
    return EXIT_OK


def cmd_gen_attn(args) -> int:
    if args.scene:
        scene = loads_scene(Path(args.scene).read_text(encoding="utf-8"))
    else:
        scene = make_scene(PatchGrid(*args.grid), args.segments, args.seed)
    sim = oracle_attention(scene, args.noise, args.jitter, args.seed)
    save_attention(args.out, sim.values.astype(np.float32)[None, None, None])
    if args.scene_out:
        Path(args.scene_out).write_text(dumps_scene(scene), encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evomask", allow_abbrev=False, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"evomask {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kw):
        p = sub.add_parser(name, allow_abbrev=False, **kw)
        p.set_defaults(func=func)
        return p

    p = add("build-tree", cmd_build_tree, help="build a hierarchy from an EHMA attention file")
    p.add_argument("attention")
    p.add_argument("out")
    p.add_argument("--image", type=int, default=0)
    p.add_argument("--layers", type=_layer_range, default=None, help="inclusive LO:HI (default: first half)")
    p.add_argument("--linkage", choices=LINKAGES, default=CHILDREN_AVERAGE)

    p = add("mask", cmd_mask, help="evolved mask from a tree file at a scheduled depth")
    p.add_argument("tree")
    p.add_argument("out")
    p.add_argument("--epoch", type=int, required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--ratio", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=_grid_dims, default=None)
    p.add_argument("--depth-fixed", type=int, default=None, help="schedule against this height instead of the tree's")

    p = add("baseline", cmd_baseline, help="random, grid or block baseline mask")
    p.add_argument("kind", choices=("random", "grid", "block"))
    p.add_argument("out")
    p.add_argument("--grid", type=_grid_dims, default=(14, 14))
    p.add_argument("--ratio", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-block", type=int, default=16)

    p = add("analyze", None, help="diagnostics on attention, masks and trees")
    asub = p.add_subparsers(dest="analysis", required=True)

    def add_analysis(name, func):
        q = asub.add_parser(name, allow_abbrev=False)
        q.set_defaults(func=func)
        return q

    q = add_analysis("mad", cmd_analyze_mad)
    q.add_argument("attention")
    q.add_argument("--image", type=int, default=0)
    q.add_argument("--grid", type=_grid_dims, default=None)
    q.add_argument("--patch-size", type=int, default=16)
    q.add_argument("--per-layer", action="store_true")

    q = add_analysis("stats", cmd_analyze_stats)
    q.add_argument("mask")

    q = add_analysis("partition", cmd_analyze_partition)
    q.add_argument("tree")
    q.add_argument("--depth", type=int, required=True)
    q.add_argument("--grid", type=_grid_dims, default=None)
    q.add_argument("--out", default=None)
    q.add_argument("--pgm", default=None)
    q.add_argument("--scale", type=int, default=16)

    q = add_analysis("purity", cmd_analyze_purity)
    q.add_argument("mask")
    q.add_argument("scene")

    p = add("simulate", cmd_simulate, help="run the synthetic co-evolution loop")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--sample-images", type=int, default=0)
    p.add_argument("--mask-dir", default=None)

    p = add("gen-attn", cmd_gen_attn, help="write oracle attention for a synthetic scene")
    p.add_argument("out")
    p.add_argument("--grid", type=_grid_dims, default=(8, 8))
    p.add_argument("--segments", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scene", default=None, help="scene file to use instead of sampling one")
    p.add_argument("--scene-out", default=None)
    return parser


def _config_line(args) -> str:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    return "# config: " + json.dumps(resolved, sort_keys=True, default=list)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    print(_config_line(args))
    try:
        return args.func(args)
    except (FormatError, OSError) as exc:
        print(f"evomask: error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValidationError as exc:
        print(f"evomask: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
