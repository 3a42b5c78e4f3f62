import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from evomask import (
    PatchGrid,
    build_tree,
    frontier_cut,
    generate_mask,
    make_scene,
    mask_purity,
    mask_stats,
    mean_attention_distance,
    oracle_attention,
    partition_map,
)
from evomask.analytics import dumps_label_table, layer_attention_distance, loads_label_table, write_pgm
from evomask.attention import AttentionBatch
from evomask.errors import DepthOutOfRange, GridMismatch, ZeroRow
from evomask.maskgen import Mask
from evomask.simharness import Scene


def brute_mad(w, H, W, patch):
    total = 0.0
    for q in range(H * W):
        row = w[q] / w[q].sum()
        qy, qx = divmod(q, W)
        total += sum(row[k] * math.hypot(qy - k // W, qx - k % W) for k in range(H * W))
    return patch * total / (H * W)


def test_mad_uniform_2x2():
    assert mean_attention_distance(np.full((4, 4), 0.25), PatchGrid(2, 2, 16)) == pytest.approx(
        16 * (2 + math.sqrt(2)) / 4, abs=1e-6
    )
    assert mean_attention_distance(np.full((4, 4), 0.25), PatchGrid(2, 2, 16)) == pytest.approx(13.6569, abs=1e-4)


def test_mad_identity():
    assert mean_attention_distance(np.eye(9), PatchGrid(3, 3)) == 0.0


def test_mad_1x2():
    assert mean_attention_distance(np.full((2, 2), 0.5), PatchGrid(1, 2, 16)) == pytest.approx(8.0, abs=1e-12)


def test_mad_zero_row():
    w = np.full((4, 4), 0.25)
    w[2] = 0
    with pytest.raises(ZeroRow):
        mean_attention_distance(w, PatchGrid(2, 2))


def test_mad_shape_mismatch():
    with pytest.raises(GridMismatch):
        mean_attention_distance(np.eye(4), PatchGrid(3, 3))


@settings(max_examples=50)
@given(
    arrays(np.float64, (12, 12), elements=st.floats(0.01, 1)),
    arrays(np.float64, (12,), elements=st.floats(0.001, 1000)),
)
def test_mad_row_scale_invariant(w, scale):
    g = PatchGrid(3, 4, 16)
    a = mean_attention_distance(w, g)
    assert abs(a - mean_attention_distance(w * scale[:, None], g)) <= 1e-12
    assert a == pytest.approx(brute_mad(w, 3, 4, 16), abs=1e-9)
    assert 0 <= a <= 16 * math.hypot(2, 3)


def test_layer_distance_averages_heads():
    heads = np.stack([np.eye(4), np.full((4, 4), 0.25)])
    batch = AttentionBatch(np.stack([heads, heads])[None])
    d = layer_attention_distance(batch, PatchGrid(2, 2, 16))
    assert d == pytest.approx([16 * (2 + math.sqrt(2)) / 8] * 2)


def test_partition_examples(example_tree, grid2x2):
    assert partition_map(example_tree, grid2x2, 2).labels.ravel().tolist() == [0, 0, 1, 1]
    assert partition_map(example_tree, grid2x2, 1).labels.ravel().tolist() == [0, 1, 2, 3]
    assert partition_map(example_tree, grid2x2, 3).labels.ravel().tolist() == [0, 0, 0, 0]
    with pytest.raises(DepthOutOfRange):
        partition_map(example_tree, grid2x2, 4)


def test_partition_matches_frontier():
    g = PatchGrid(6, 7)
    tree = build_tree(oracle_attention(make_scene(g, 5, 3), 0.4, 0.02, 3))
    for h in range(1, tree.height + 1):
        lm = partition_map(tree, g, h)
        cut = frontier_cut(tree, h)
        assert lm.label_count == len(cut)
        for label, node in enumerate(cut):
            assert np.flatnonzero(lm.labels.ravel() == label).tolist() == tree.nodes[node].leaf_span


def _mask(bits, h, w, units=None):
    return Mask(PatchGrid(h, w), np.array(bits, dtype=np.uint8).reshape(h, w), 0.5, "test", units)


def test_stats_examples():
    s = mask_stats(_mask([0, 0, 1, 1], 2, 2))
    assert (s.component_count, s.mean_component_size) == (1, 2.0)
    assert s.bounding_coverage == 0.75
    s = mask_stats(_mask([1, 1, 1, 1], 2, 2))
    assert (s.component_count, s.masked_fraction) == (0, 0.0)
    s = mask_stats(_mask([0, 1, 1, 0], 2, 2))
    assert (s.component_count, s.mean_component_size) == (2, 1.0)


@settings(max_examples=60)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1)))
def test_stats_invariants(bits):
    H, W = bits.shape
    m = Mask(PatchGrid(H, W), bits, 0.5, "test")
    s = mask_stats(m)
    if m.masked_count:
        assert s.component_count >= 1
    assert s.mean_component_size * s.component_count == pytest.approx(m.masked_count)
    assert s.masked_fraction == m.masked_count / (H * W)


def _scene(seg, h, w):
    seg = np.asarray(seg)
    return Scene(PatchGrid(h, w), seg, int(seg.max()) + 1)


def test_purity_examples():
    scene = _scene([0, 0, 1, 1], 1, 4)
    assert mask_purity(_mask([0, 0, 1, 1], 1, 4), scene).value == 1.0
    assert mask_purity(_mask([1, 0, 0, 1], 1, 4), scene).value == 0.5
    assert mask_purity(_mask([1, 1, 1, 1], 1, 4), scene).value == 1.0


def test_purity_by_subtree():
    scene = _scene([0, 0, 1, 1], 1, 4)
    m = _mask([0, 0, 0, 1], 1, 4, units=[[0, 1], [2]])
    p = mask_purity(m, scene)
    assert p.by_subtree and p.regions == ((2, 1.0), (1, 1.0)) and p.value == 1.0


def test_purity_grid_mismatch():
    with pytest.raises(GridMismatch):
        mask_purity(_mask([0, 0, 1, 1], 2, 2), _scene([0, 0, 1, 1], 1, 4))


def test_perfect_oracle_refining_frontier_is_pure():
    for seed in range(10):
        g = PatchGrid(8, 8)
        scene = make_scene(g, 4, seed)
        tree = build_tree(oracle_attention(scene, 0.0))
        seg = scene.segment_of
        for h in range(1, tree.height + 1):
            cut = frontier_cut(tree, h)
            if any(len(set(seg[tree.nodes[c].leaf_span])) > 1 for c in cut):
                continue
            for s in range(20):
                p = mask_purity(generate_mask(tree, g, h, 0.75, s), scene)
                assert all(pur == 1.0 for _, pur in p.regions[:-1])


def test_label_table_and_pgm(tmp_path):
    labels = np.array([[0, 0, 1], [2, 2, 1]])
    text = dumps_label_table(labels, "PARTITION 2 3 h=2")
    header, again = loads_label_table(text)
    assert header == "PARTITION 2 3 h=2" and np.array_equal(again, labels)
    write_pgm(tmp_path / "p.pgm", labels, scale=2)
    data = (tmp_path / "p.pgm").read_bytes()
    assert data.startswith(b"P5\n6 4\n255\n") and len(data) == len(b"P5\n6 4\n255\n") + 24
