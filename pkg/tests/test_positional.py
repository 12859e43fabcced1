import numpy as np
import pytest

from ctxtrack.positional import PairwiseRegionBias, SegmentLayout, UntiedPositionBias, segment_layout


def brute_force_relative_bias(bias: PairwiseRegionBias) -> np.ndarray:
    """Per-pair (segment, displacement) lookup over all L^2 token pairs."""
    layout = bias.layout
    L = layout.length
    out = np.zeros((bias.heads, L, L))
    for i in range(L):
        seg_i, ri, ci = layout.coords(i)
        for j in range(L):
            seg_j, rj, cj = layout.coords(j)
            table = bias.table(seg_i, seg_j).data
            hk, wk = layout.grid(seg_j)
            out[:, i, j] = table[:, ri - rj + hk - 1, ci - cj + wk - 1]
    return out


# ----------------------------------------------------------------------
# layout
# ----------------------------------------------------------------------

def test_layout_small_enumeration():
    lay = segment_layout((1, 1), (2, 2), (2, 2))
    assert lay.length == 9
    assert lay.coords(0) == ("target", 0, 0)
    assert lay.coords(1) == ("previous", 0, 0)
    assert lay.coords(4) == ("previous", 1, 1)
    assert lay.coords(5) == ("search", 0, 0)


def test_layout_stride16_full_scale():
    lay = segment_layout((7, 7), (14, 14), (14, 14))
    assert lay.length == 49 + 196 + 196 == 441


def test_layout_single_segment():
    lay = SegmentLayout.single("search", 1, 1)
    assert lay.length == 1
    assert lay.coords(0) == ("search", 0, 0)


def test_layout_rejects_zero_grid():
    with pytest.raises(ValueError):
        segment_layout((0, 1), (2, 2), (2, 2))


def test_layout_coords_bijective():
    lay = segment_layout((2, 3), (3, 2), (4, 4))
    seen = set()
    for i in range(lay.length):
        seg, r, c = lay.coords(i)
        assert lay.offset(seg) + r * lay.grid(seg)[1] + c == i
        seen.add((seg, r, c))
    assert len(seen) == lay.length


# ----------------------------------------------------------------------
# untied absolute bias
# ----------------------------------------------------------------------

def test_untied_bias_zero_tables_give_zero():
    lay = segment_layout((1, 1), (2, 2), (2, 2))
    bias = UntiedPositionBias(lay, dim=8, heads=2, rng=np.random.default_rng(0))
    for t in bias.tables:
        t.data[...] = 0.0
    assert np.array_equal(bias.bias().data, np.zeros((2, 9, 9)))


def test_untied_bias_scalar_closed_form():
    lay = SegmentLayout.single("search", 1, 1)
    bias = UntiedPositionBias(lay, dim=1, heads=1, rng=np.random.default_rng(0))
    c, u, v = 0.7, 1.3, -0.4
    bias.tables[0].data[...] = c
    bias.u_query.data[...] = u
    bias.u_key.data[...] = v
    assert abs(bias.bias().data[0, 0, 0] - c * c * u * v / np.sqrt(2.0)) < 1e-15


def test_untied_bias_not_symmetric():
    lay = segment_layout((1, 1), (2, 2), (2, 2))
    bias = UntiedPositionBias(lay, dim=8, heads=2, rng=np.random.default_rng(1))
    a = bias.bias().data
    assert not np.allclose(a, a.transpose(0, 2, 1))


def test_untied_bias_rejects_bad_head_split():
    lay = segment_layout((1, 1), (2, 2), (2, 2))
    with pytest.raises(ValueError, match="divisible"):
        UntiedPositionBias(lay, dim=7, heads=2, rng=np.random.default_rng(0))


# ----------------------------------------------------------------------
# pairwise relative bias
# ----------------------------------------------------------------------

def test_region_table_sizes():
    lay = segment_layout((1, 1), (2, 2), (2, 2))
    bias = PairwiseRegionBias(lay, heads=1, rng=np.random.default_rng(2))
    assert bias.table("target", "target").data.shape == (1, 1, 1)
    assert bias.table("target", "previous").data.shape == (1, 2, 2)
    assert bias.table("previous", "previous").data.shape == (1, 3, 3)


def test_region_bias_zero_tables_give_zero():
    lay = segment_layout((1, 1), (2, 2), (2, 2))
    bias = PairwiseRegionBias(lay, heads=2, rng=np.random.default_rng(3))
    bias.zero_()
    assert np.array_equal(bias.bias().data, np.zeros((2, 9, 9)))


def test_adjacent_search_tokens_use_independent_entries():
    lay = segment_layout((1, 1), (2, 2), (1, 2))
    bias = PairwiseRegionBias(lay, heads=1, rng=np.random.default_rng(4))
    table = bias.table("search", "search")
    # displacements (0,-1) and (0,+1) live at different table cells
    bias.zero_()
    table.data[0, 0, 0] = 5.0   # dcol = -1
    table.data[0, 0, 2] = 7.0   # dcol = +1
    block = bias.block("search", "search").data
    assert block[0, 0, 1] == 5.0
    assert block[0, 1, 0] == 7.0


def test_vectorized_matches_brute_force_exactly():
    rng = np.random.default_rng(5)
    for _ in range(5):
        grids = [(int(rng.integers(1, 4)), int(rng.integers(1, 4))) for _ in range(3)]
        lay = segment_layout(*grids)
        bias = PairwiseRegionBias(lay, heads=int(rng.integers(1, 4)), rng=rng)
        assert np.array_equal(bias.bias().data, brute_force_relative_bias(bias))


def test_translation_invariance_within_segment():
    lay = segment_layout((1, 1), (3, 3), (3, 3))
    bias = PairwiseRegionBias(lay, heads=2, rng=np.random.default_rng(6))
    full = bias.bias().data
    lay_off = lay.offset("previous")
    w = 3
    # pairs with equal (drow, dcol) share one entry
    i1, j1 = lay_off + 0 * w + 0, lay_off + 1 * w + 1
    i2, j2 = lay_off + 1 * w + 1, lay_off + 2 * w + 2
    assert np.array_equal(full[:, i1, j1], full[:, i2, j2])


def test_every_pair_resolved_from_exactly_one_region():
    lay = segment_layout((1, 2), (2, 2), (2, 3))
    table = lay.token_tables()[0]
    names = lay.names()
    for i in range(lay.length):
        for j in range(lay.length):
            seg_i, _, _ = lay.coords(i)
            seg_j, _, _ = lay.coords(j)
            assert names[table[i]] == seg_i and names[table[j]] == seg_j


def test_region_bias_gradients_flow_to_tables():
    lay = segment_layout((1, 1), (2, 2), (2, 2))
    bias = PairwiseRegionBias(lay, heads=1, rng=np.random.default_rng(7))
    bias.bias().sum().backward()
    tt = bias.table("previous", "previous")
    # each displacement entry is hit once per matching token pair
    counts = np.zeros((3, 3))
    for dr in range(-1, 2):
        for dc in range(-1, 2):
            n = (2 - abs(dr)) * (2 - abs(dc))
            counts[dr + 1, dc + 1] = n
    assert np.array_equal(tt.grad[0], counts)
