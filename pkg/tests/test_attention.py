import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from evomask import PatchGrid, aggregate, load_attention, oracle_attention, save_attention
from evomask.attention import AttentionBatch, annealed_noise, default_layer_range
from evomask.errors import DimensionMismatch, InvalidValue, MalformedHeader, RangeOutOfBounds
from evomask.simharness import Scene


def _ehma(images, layers, heads, n, payload):
    return b"EHMA" + bytes([1, 0, 0, 0]) + struct.pack("<4I", images, layers, heads, n) + payload


def test_load_single_matrix(tmp_path):
    vals = np.arange(16, dtype="<f4") / 16
    path = tmp_path / "a.ehma"
    path.write_bytes(_ehma(1, 1, 1, 4, vals.tobytes()))
    batch = load_attention(path)
    assert (batch.images, batch.layers, batch.heads, batch.tokens) == (1, 1, 1, 4)
    np.testing.assert_array_equal(batch.values[0, 0, 0], vals.reshape(4, 4))


def test_truncated_payload(tmp_path):
    path = tmp_path / "a.ehma"
    path.write_bytes(_ehma(1, 1, 1, 4, np.zeros(10, dtype="<f4").tobytes()))
    with pytest.raises(DimensionMismatch):
        load_attention(path)


def test_negative_payload(tmp_path):
    vals = np.full(16, 0.25, dtype="<f4")
    vals[5] = -0.5
    path = tmp_path / "a.ehma"
    path.write_bytes(_ehma(1, 1, 1, 4, vals.tobytes()))
    with pytest.raises(InvalidValue):
        load_attention(path)


def test_nan_payload(tmp_path):
    vals = np.full(16, 0.25, dtype="<f4")
    vals[0] = np.nan
    path = tmp_path / "a.ehma"
    path.write_bytes(_ehma(1, 1, 1, 4, vals.tobytes()))
    with pytest.raises(InvalidValue):
        load_attention(path)


@pytest.mark.parametrize(
    "header",
    [b"EHMX" + bytes([1, 0, 0, 0]), b"EHMA" + bytes([2, 0, 0, 0]), b"EHMA" + bytes([1, 0, 1, 0]), b"EHM"],
)
def test_bad_header(tmp_path, header):
    path = tmp_path / "a.ehma"
    path.write_bytes(header + struct.pack("<4I", 1, 1, 1, 1) + b"\0\0\0\0")
    with pytest.raises(MalformedHeader):
        load_attention(path)


def test_round_trip_bytes(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.random((2, 3, 2, 9, 9)).astype(np.float32)
    p1, p2 = tmp_path / "a.ehma", tmp_path / "b.ehma"
    save_attention(p1, vals)
    save_attention(p2, load_attention(p1).values)
    assert p1.read_bytes() == p2.read_bytes()
    assert len(p1.read_bytes()) == 24 + 4 * vals.size


def test_row_normalized_flag():
    ok = np.full((1, 1, 1, 4, 4), 0.25)
    AttentionBatch(ok, row_normalized=True)
    with pytest.raises(InvalidValue):
        AttentionBatch(ok * 2, row_normalized=True)


def test_grid_check():
    batch = AttentionBatch(np.full((1, 1, 1, 4, 4), 0.25))
    batch.check_grid(PatchGrid(2, 2))
    with pytest.raises(DimensionMismatch):
        batch.check_grid(PatchGrid(3, 2))


def test_aggregate_single():
    m = np.arange(16, dtype=np.float64).reshape(4, 4)
    s = aggregate(AttentionBatch(m[None, None, None]), 0, (0, 0))
    np.testing.assert_array_equal(s.values, (m + m.T) / 2)


def test_aggregate_transposed_heads():
    m = np.random.default_rng(3).random((5, 5))
    batch = AttentionBatch(np.stack([m, m.T])[None, None])
    np.testing.assert_allclose(aggregate(batch, 0, (0, 0)).values, (m + m.T) / 2, rtol=0, atol=1e-15)


def test_aggregate_uniform():
    batch = AttentionBatch(np.full((1, 2, 2, 4, 4), 0.25))
    np.testing.assert_array_equal(aggregate(batch, 0, (0, 1)).values, np.full((4, 4), 0.25))


def test_aggregate_bounds():
    batch = AttentionBatch(np.full((2, 4, 1, 4, 4), 0.25))
    with pytest.raises(RangeOutOfBounds):
        aggregate(batch, 2)
    with pytest.raises(RangeOutOfBounds):
        aggregate(batch, 0, (0, 4))
    with pytest.raises(RangeOutOfBounds):
        aggregate(batch, 0, (3, 2))


def test_default_layer_range():
    assert default_layer_range(12) == (0, 5)
    assert default_layer_range(1) == (0, 0)


@settings(max_examples=50)
@given(arrays(np.float32, (2, 3, 2, 5, 5), elements=st.floats(0, 10, width=32)))
def test_aggregate_exactly_symmetric(vals):
    s = aggregate(AttentionBatch(vals), 1, (0, 2)).values
    assert np.array_equal(s, s.T)


@settings(max_examples=50)
@given(
    st.floats(0, 5),
    st.floats(0, 5),
    arrays(np.float64, (6, 6), elements=st.floats(0, 1)),
    arrays(np.float64, (6, 6), elements=st.floats(0, 1)),
)
def test_aggregate_linear(alpha, beta, m1, m2):
    agg = lambda m: aggregate(AttentionBatch(m[None, None, None]), 0, (0, 0)).values  # noqa: E731
    np.testing.assert_allclose(agg(alpha * m1 + beta * m2), alpha * agg(m1) + beta * agg(m2), rtol=0, atol=1e-9)


def _scene(seg, h, w):
    seg = np.asarray(seg)
    return Scene(PatchGrid(h, w), seg, int(seg.max()) + 1)


def test_oracle_noise_free():
    s = oracle_attention(_scene([0, 0, 1, 1], 2, 2), 0.0, 0.0, 1).values
    assert s[0, 1] == 0.5 and s[0, 2] == 0.0 and s[2, 3] == 0.5


def test_oracle_full_noise():
    s = oracle_attention(_scene([0, 1, 1, 0], 2, 2), 1.0, 0.0, 1).values
    np.testing.assert_array_equal(s, np.full((4, 4), 0.25))


def test_oracle_half_noise():
    s = oracle_attention(_scene([0, 0, 1, 1], 2, 2), 0.5, 0.0, 1).values
    assert s[0, 1] == 0.375 and s[2, 3] == 0.375
    assert s[0, 2] == 0.125 and s[1, 3] == 0.125


def test_oracle_deterministic_across_threads():
    scene = _scene(np.random.default_rng(0).integers(0, 5, 64) % 5, 8, 8)
    ref = oracle_attention(scene, 0.3, 0.05, 99).values
    with ThreadPoolExecutor(4) as pool:
        outs = list(pool.map(lambda _: oracle_attention(scene, 0.3, 0.05, 99).values, range(16)))
    assert all(o.tobytes() == ref.tobytes() for o in outs)
    assert oracle_attention(scene, 0.3, 0.05, 100).values.tobytes() != ref.tobytes()


def test_oracle_jitter_symmetric_nonnegative():
    scene = _scene([0, 0, 1, 1, 2, 2], 2, 3)
    s = oracle_attention(scene, 0.2, 0.5, 7).values
    assert np.array_equal(s, s.T)
    assert (s >= 0).all()


def test_oracle_block_constant():
    seg = np.array([0, 0, 1, 2, 1, 1, 0, 2, 2])
    s = oracle_attention(_scene(seg, 3, 3), 0.0, 0.0, 3).values
    for i in range(9):
        for j in range(9):
            assert s[i, j] == (1.0 / np.sum(seg == seg[i]) if seg[i] == seg[j] else 0.0)


def test_annealed_noise():
    assert annealed_noise(0, 10) == 0.9
    assert annealed_noise(5, 10, 0.5) == 0.25
