"""Positional terms for joint attention over several token grids.

Three flattened 2-D grids (target template, previous template, search
image) are concatenated into one token sequence. Two learnable terms are
added to the attention logits:

* an untied absolute term, built from per-segment position tables passed
  through their own query/key projections, so content and position are
  scored separately;
* a pairwise relative term with one independent displacement table per
  ordered segment pair, indexed by the 2-D offset between the query and
  key token inside their own grids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Module, Tensor, concat, matmul, parameter

SEGMENTS = ("target", "previous", "search")


@dataclass(frozen=True)
class SegmentLayout:
    """Ordered token-grid segments with row-major flattening."""

    segments: tuple[tuple[str, int, int], ...]

    @classmethod
    def create(cls, target: tuple[int, int], previous: tuple[int, int],
               search: tuple[int, int]) -> "SegmentLayout":
        grids = dict(zip(SEGMENTS, (target, previous, search)))
        for name, (h, w) in grids.items():
            if h < 1 or w < 1:
                raise ValueError(f"{name} grid must be at least 1x1, got {h}x{w}")
        return cls(tuple((name, h, w) for name, (h, w) in grids.items()))

    @classmethod
    def single(cls, name: str, h: int, w: int) -> "SegmentLayout":
        # degenerate one-segment layout, used by oracle tests
        if h < 1 or w < 1:
            raise ValueError(f"grid must be at least 1x1, got {h}x{w}")
        return cls(((name, h, w),))

    @property
    def length(self) -> int:
        return sum(h * w for _, h, w in self.segments)

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.segments)

    def grid(self, name: str) -> tuple[int, int]:
        for seg, h, w in self.segments:
            if seg == name:
                return (h, w)
        raise KeyError(name)

    def offset(self, name: str) -> int:
        off = 0
        for seg, h, w in self.segments:
            if seg == name:
                return off
            off += h * w
        raise KeyError(name)

    def segment_slice(self, name: str) -> slice:
        off = self.offset(name)
        h, w = self.grid(name)
        return slice(off, off + h * w)

    def coords(self, index: int) -> tuple[str, int, int]:
        """Token index -> (segment, row, col); inverse of the flattening."""
        if not 0 <= index < self.length:
            raise IndexError(index)
        for seg, h, w in self.segments:
            if index < h * w:
                return (seg, index // w, index % w)
            index -= h * w
        raise AssertionError("unreachable")

    def token_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-token (segment id, row, col) arrays over the full sequence."""
        seg_ids, rows, cols = [], [], []
        for sid, (_, h, w) in enumerate(self.segments):
            seg_ids.append(np.full(h * w, sid))
            rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
            rows.append(rr.reshape(-1))
            cols.append(cc.reshape(-1))
        return (np.concatenate(seg_ids), np.concatenate(rows), np.concatenate(cols))


def segment_layout(target: tuple[int, int], previous: tuple[int, int],
                   search: tuple[int, int]) -> SegmentLayout:
    return SegmentLayout.create(target, previous, search)


class UntiedPositionBias(Module):
    """Absolute positional logits decoupled from content.

    Keeps one learnable table per segment plus square query/key projections.
    The bias for the full sequence is (pU_q)(pU_k)^T split per head and
    scaled by 1/sqrt(2 * head_dim), mirroring how the content term is scaled.
    """

    def __init__(self, layout: SegmentLayout, dim: int, heads: int,
                 rng: np.random.Generator, init_scale: float = 0.02):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.layout = layout
        self.dim = dim
        self.heads = heads
        self.tables = [parameter(rng.normal(scale=init_scale, size=(h * w, dim)))
                       for _, h, w in layout.segments]
        self.u_query = parameter(rng.normal(scale=init_scale, size=(dim, dim)))
        self.u_key = parameter(rng.normal(scale=init_scale, size=(dim, dim)))

    def _split_heads(self, t: Tensor) -> Tensor:
        length = self.layout.length
        head_dim = self.dim // self.heads
        return t.reshape(length, self.heads, head_dim).transpose(1, 0, 2)

    def bias(self) -> Tensor:
        """Full (heads, L, L) absolute-position logits."""
        table = concat(self.tables, axis=0)
        head_dim = self.dim // self.heads
        pq = self._split_heads(matmul(table, self.u_query))
        pk = self._split_heads(matmul(table, self.u_key))
        return matmul(pq, pk.swapaxes(1, 2)) * (1.0 / np.sqrt(2.0 * head_dim))


class PairwiseRegionBias(Module):
    """Relative positional logits, one table per ordered segment pair.

    The table for query segment n and key segment m holds one value per head
    per 2-D displacement (row_q - row_k, col_q - col_k), which spans
    (H_n + H_m - 1) x (W_n + W_m - 1) entries. Lookups are precomputed as
    integer index grids so assembly is a pure gather.
    """

    def __init__(self, layout: SegmentLayout, heads: int,
                 rng: np.random.Generator, init_scale: float = 0.02):
        self.layout = layout
        self.heads = heads
        names = layout.names()
        self.pair_names = [(q, k) for q in names for k in names]
        self.tables = []
        self._row_idx: dict[tuple[str, str], np.ndarray] = {}
        self._col_idx: dict[tuple[str, str], np.ndarray] = {}
        for q, k in self.pair_names:
            hq, wq = layout.grid(q)
            hk, wk = layout.grid(k)
            self.tables.append(parameter(
                rng.normal(scale=init_scale, size=(heads, hq + hk - 1, wq + wk - 1))))
            rq, cq = np.meshgrid(np.arange(hq), np.arange(wq), indexing="ij")
            rk, ck = np.meshgrid(np.arange(hk), np.arange(wk), indexing="ij")
            rq, cq = rq.reshape(-1), cq.reshape(-1)
            rk, ck = rk.reshape(-1), ck.reshape(-1)
            self._row_idx[(q, k)] = rq[:, None] - rk[None, :] + (hk - 1)
            self._col_idx[(q, k)] = cq[:, None] - ck[None, :] + (wk - 1)

    def table(self, query_seg: str, key_seg: str) -> Tensor:
        return self.tables[self.pair_names.index((query_seg, key_seg))]

    def block(self, query_seg: str, key_seg: str) -> Tensor:
        """(heads, L_q, L_k) bias block for one ordered segment pair."""
        key = (query_seg, key_seg)
        return self.table(*key)[:, self._row_idx[key], self._col_idx[key]]

    def bias(self) -> Tensor:
        """Full (heads, L, L) relative logits assembled from all regions."""
        names = self.layout.names()
        rows = [concat([self.block(q, k) for k in names], axis=2) for q in names]
        return concat(rows, axis=1)

    def zero_(self) -> None:
        for t in self.tables:
            t.data[...] = 0.0
