"""Transformer building blocks.

Provides the shared plumbing (affine projection, layer normalization,
feed-forward sublayer), a per-image windowed self-attention block, and the
joint cross-frame attention layer that mixes target, previous-frame, and
search tokens with content, absolute-position, and relative-displacement
logits.
"""

from __future__ import annotations

import numpy as np

from .positional import PairwiseRegionBias, SegmentLayout, UntiedPositionBias
from .tensor import Module, Tensor, concat, gelu, matmul, parameter, softmax_lastdim


class Linear(Module):
    """Affine map on the last axis, y = x @ weight (+ bias)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True, init_scale: float = 0.02):
        self.weight = parameter(rng.normal(scale=init_scale, size=(in_dim, out_dim)))
        self.bias = parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(Module):
    """Normalization over the last axis with learnable scale and shift."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered * ((var + self.eps) ** -0.5) * self.gamma + self.beta


class FeedForward(Module):
    """Two affine maps around a gelu, with the usual 4x expansion."""

    def __init__(self, dim: int, rng: np.random.Generator, expansion: int = 4):
        self.fc1 = Linear(dim, expansion * dim, rng)
        self.fc2 = Linear(expansion * dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class WindowAttentionBlock(Module):
    """Pre-norm self-attention over non-overlapping square windows.

    Operates on one image's token grid (H, W, C); tokens only attend to
    others inside the same window, so all mixing is local to the image.
    """

    def __init__(self, dim: int, heads: int, window: int,
                 rng: np.random.Generator, init_scale: float = 0.02):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        if window < 1:
            raise ValueError(f"window must be positive, got {window}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.window = window
        self.scale = 1.0 / np.sqrt(self.head_dim)
        self.w_query = Linear(dim, dim, rng, bias=False, init_scale=init_scale)
        self.w_key = Linear(dim, dim, rng, bias=False, init_scale=init_scale)
        self.w_value = Linear(dim, dim, rng, bias=False, init_scale=init_scale)
        self.w_out = Linear(dim, dim, rng, bias=False, init_scale=init_scale)
        self.norm1 = LayerNorm(dim)
        self.norm2 = LayerNorm(dim)
        self.ff = FeedForward(dim, rng)

    def _windows(self, x: Tensor, h: int, w: int) -> Tensor:
        win = self.window
        x = x.reshape(h // win, win, w // win, win, self.dim)
        return x.transpose(0, 2, 1, 3, 4).reshape(-1, win * win, self.dim)

    def _unwindows(self, x: Tensor, h: int, w: int) -> Tensor:
        win = self.window
        x = x.reshape(h // win, w // win, win, win, self.dim)
        return x.transpose(0, 2, 1, 3, 4).reshape(h, w, self.dim)

    def __call__(self, tokens: Tensor) -> Tensor:
        if tokens.ndim != 3 or tokens.shape[2] != self.dim:
            raise ValueError(f"expected (H, W, {self.dim}) tokens, got {tokens.shape}")
        h, w, _ = tokens.shape
        if h % self.window or w % self.window:
            raise ValueError(
                f"grid {h}x{w} not divisible by window {self.window}")
        x = self.norm1(tokens)
        n_win = (h // self.window) * (w // self.window)
        area = self.window * self.window

        def split(t: Tensor) -> Tensor:
            return t.reshape(n_win, area, self.heads, self.head_dim).transpose(0, 2, 1, 3)

        q = split(self.w_query(self._windows(x, h, w)))
        k = split(self.w_key(self._windows(x, h, w)))
        v = split(self.w_value(self._windows(x, h, w)))
        weights = softmax_lastdim(matmul(q, k.swapaxes(2, 3)) * self.scale)
        attn = matmul(weights, v).transpose(0, 2, 1, 3).reshape(n_win, area, self.dim)
        res = tokens + self._unwindows(self.w_out(attn), h, w)
        return res + self.ff(self.norm2(res))


class CrossFrameAttention(Module):
    """Joint attention over the concatenated target/previous/search tokens.

    Per-head logits sum three terms: scaled content dot products, absolute
    positional logits decoupled from content, and relative displacement
    logits looked up per ordered segment pair. The content term uses scale
    1/sqrt(2 * head_dim) so that content and absolute terms, which add up,
    stay on the footing a single softmax expects. The attention sits inside
    the usual pre-norm residual block with a feed-forward sublayer.
    """

    def __init__(self, layout: SegmentLayout, dim: int, heads: int,
                 rng: np.random.Generator, init_scale: float = 0.02):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.layout = layout
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / np.sqrt(2.0 * self.head_dim)
        self.w_query = Linear(dim, dim, rng, bias=False, init_scale=init_scale)
        self.w_key = Linear(dim, dim, rng, bias=False, init_scale=init_scale)
        self.w_value = Linear(dim, dim, rng, bias=False, init_scale=init_scale)
        self.w_out = Linear(dim, dim, rng, bias=False, init_scale=init_scale)
        self.abs_bias = UntiedPositionBias(layout, dim, heads, rng, init_scale)
        self.rel_bias = PairwiseRegionBias(layout, heads, rng, init_scale)
        self.norm1 = LayerNorm(dim)
        self.norm2 = LayerNorm(dim)
        self.ff = FeedForward(dim, rng)

    # ------------------------------------------------------------------
    # shared pieces
    # ------------------------------------------------------------------
    def _check(self, tokens: Tensor) -> None:
        expected = (self.layout.length, self.dim)
        if tokens.shape != expected:
            raise ValueError(
                f"token shape {tokens.shape} does not match layout {expected}")

    def _heads_view(self, t: Tensor, length: int) -> Tensor:
        return t.reshape(length, self.heads, self.head_dim).transpose(1, 0, 2)

    def _merge_heads(self, t: Tensor, length: int) -> Tensor:
        return t.transpose(1, 0, 2).reshape(length, self.dim)

    def _full_weights(self, x: Tensor) -> Tensor:
        """Post-softmax (heads, L, L) weights for pre-normalized tokens."""
        length = self.layout.length
        q = self._heads_view(self.w_query(x), length)
        k = self._heads_view(self.w_key(x), length)
        logits = matmul(q, k.swapaxes(1, 2)) * self.scale
        logits = logits + self.abs_bias.bias() + self.rel_bias.bias()
        return softmax_lastdim(logits)

    def _restricted_weights(self, x: Tensor, keys: str) -> tuple[Tensor, Tensor, list[str]]:
        """Search-query weights and values against the selected key set."""
        if keys not in ("templates", "all"):
            raise ValueError(f"unknown key mode: {keys!r}")
        search = self.layout.segment_slice("search")
        n_search = search.stop - search.start
        key_stop = self.layout.offset("search") if keys == "templates" else self.layout.length
        key_names = [n for n in self.layout.names()
                     if keys == "all" or n != "search"]
        xq, xk = x[search], x[0:key_stop]
        q = self._heads_view(self.w_query(xq), n_search)
        k = self._heads_view(self.w_key(xk), key_stop)
        v = self._heads_view(self.w_value(xk), key_stop)
        logits = matmul(q, k.swapaxes(1, 2)) * self.scale
        logits = logits + self.abs_bias.bias()[:, search, 0:key_stop]
        logits = logits + concat(
            [self.rel_bias.block("search", name) for name in key_names], axis=2)
        return softmax_lastdim(logits), v, key_names

    # ------------------------------------------------------------------
    # public forward variants
    # ------------------------------------------------------------------
    def __call__(self, tokens: Tensor) -> Tensor:
        return self.forward(tokens)

    def forward(self, tokens: Tensor) -> Tensor:
        """Full joint attention; output layout equals input layout."""
        self._check(tokens)
        length = self.layout.length
        x = self.norm1(tokens)
        weights = self._full_weights(x)
        v = self._heads_view(self.w_value(x), length)
        attn = self._merge_heads(matmul(weights, v), length)
        res = tokens + self.w_out(attn)
        return res + self.ff(self.norm2(res))

    def forward_search_queries(self, tokens: Tensor, keys: str = "templates") -> Tensor:
        """Final-layer variant: only search tokens act as queries.

        With keys="templates" the keys/values are the target and previous
        tokens only; keys="all" keeps search tokens in the key set too.
        Returns just the search-segment tokens.
        """
        self._check(tokens)
        x = self.norm1(tokens)
        weights, v, _ = self._restricted_weights(x, keys)
        search = self.layout.segment_slice("search")
        n_search = search.stop - search.start
        attn = self._merge_heads(matmul(weights, v), n_search)
        res = tokens[search] + self.w_out(attn)
        return res + self.ff(self.norm2(res))

    def attention_blocks(self, tokens: Tensor, restricted: bool = False,
                         keys: str = "templates") -> dict[tuple[str, str], np.ndarray]:
        """Post-softmax weights partitioned by (query segment, key segment).

        The full map yields nine blocks for a three-segment layout; the
        restricted variant yields only the search-query rows against the
        selected key set.
        """
        self._check(tokens)
        x = self.norm1(tokens)
        names = self.layout.names()
        if restricted:
            weights, _, key_names = self._restricted_weights(x, keys)
            data = weights.data
            out = {}
            col = 0
            for kn in key_names:
                hk, wk = self.layout.grid(kn)
                out[("search", kn)] = data[:, :, col:col + hk * wk]
                col += hk * wk
            return out
        data = self._full_weights(x).data
        return {(qn, kn): data[:, self.layout.segment_slice(qn),
                               self.layout.segment_slice(kn)]
                for qn in names for kn in names}
