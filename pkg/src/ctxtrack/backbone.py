"""Backbone building blocks and box-derived feature maps.

Covers the patch embedding that tokenizes an image, the stage transition
that halves the grid while doubling channels, the two maps derived from the
previous-frame box (a normalized Gaussian prior and per-position ltrb
distances), and the learnable embedding that injects both into the
previous-template tokens.
"""

from __future__ import annotations

import numpy as np

from .attention import LayerNorm, Linear
from .tensor import Module, Tensor, gelu, parameter

Box = tuple[float, float, float, float]


def _validate_box(box: Box) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = (float(v) for v in box)
    if not (x1 < x2 and y1 < y2):
        raise ValueError(f"degenerate box: {box}")
    return x1, y1, x2, y2


class PatchEmbed(Module):
    """Tokenize an (H, W, 3) image into (H/4, W/4, C) via 4x4 patches."""

    patch = 4

    def __init__(self, channels: int, rng: np.random.Generator,
                 init_scale: float = 0.02):
        in_dim = self.patch * self.patch * 3
        self.proj = Linear(in_dim, channels, rng, init_scale=init_scale)
        self.channels = channels

    def __call__(self, image: Tensor) -> Tensor:
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) image, got {image.shape}")
        h, w, _ = image.shape
        p = self.patch
        if h % p or w % p:
            raise ValueError(f"image size {h}x{w} not divisible by {p}")
        x = image.reshape(h // p, p, w // p, p, 3)
        x = x.transpose(0, 2, 1, 3, 4).reshape(h // p, w // p, p * p * 3)
        return self.proj(x)


class Downsample(Module):
    """Merge 2x2 token neighborhoods: (H, W, C) -> (H/2, W/2, 2C)."""

    def __init__(self, channels: int, rng: np.random.Generator,
                 init_scale: float = 0.02):
        self.norm = LayerNorm(4 * channels)
        self.reduce = Linear(4 * channels, 2 * channels, rng, bias=False,
                             init_scale=init_scale)
        self.channels = channels

    def __call__(self, tokens: Tensor) -> Tensor:
        if tokens.ndim != 3 or tokens.shape[2] != self.channels:
            raise ValueError(
                f"expected (H, W, {self.channels}) tokens, got {tokens.shape}")
        h, w, c = tokens.shape
        if h % 2 or w % 2:
            raise ValueError(f"grid {h}x{w} must have even sides")
        x = tokens.reshape(h // 2, 2, w // 2, 2, c)
        x = x.transpose(0, 2, 1, 3, 4).reshape(h // 2, w // 2, 4 * c)
        return self.reduce(self.norm(x))


def ltrb_map(box: Box, grid: tuple[int, int], stride: float) -> np.ndarray:
    """Per-position distances to the four box sides, in grid units.

    Position (row k_y, col k_x) gets (l, t, r, b) with l = k_x - x1/s,
    t = k_y - y1/s, r = x2/s - k_x, b = y2/s - k_y. The channel sums l+r
    and t+b equal the box width and height in grid units everywhere.
    """
    if stride <= 0:
        raise ValueError(f"stride must be positive, got {stride}")
    x1, y1, x2, y2 = _validate_box(box)
    h, w = grid
    ky, kx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    out = np.stack([kx - x1 / stride, ky - y1 / stride,
                    x2 / stride - kx, y2 / stride - ky], axis=-1)
    return out


def gaussian_map(box: Box, grid: tuple[int, int], stride: float) -> np.ndarray:
    """Isotropic Gaussian prior over the token grid, peak normalized to 1.

    The center is the box center in grid coordinates and the spread is
    sigma = max(box_w, box_h) / (4 * stride) grid units, so larger targets
    get wider priors. Normalizing by the maximum puts exactly 1.0 at the
    token nearest the center and keeps every value strictly positive.
    """
    if stride <= 0:
        raise ValueError(f"stride must be positive, got {stride}")
    x1, y1, x2, y2 = _validate_box(box)
    h, w = grid
    cx = (x1 + x2) / 2.0 / stride
    cy = (y1 + y2) / 2.0 / stride
    sigma = max(x2 - x1, y2 - y1) / (4.0 * stride)
    ky, kx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    d2 = (kx - cx) ** 2 + (ky - cy) ** 2
    # subtracting the minimum normalizes the peak to exp(0) = 1 without ever
    # forming a denormal intermediate; the clip guards exp underflow to 0
    expo = (d2 - d2.min()) / (2.0 * sigma * sigma)
    return np.exp(-np.minimum(expo, 700.0))[..., None]


class BoxEmbedding(Module):
    """Learnable injection of the previous-frame box into template tokens.

    Produces w * gaussian + mlp(ltrb) over the token grid, where w is a
    per-channel weight broadcast over positions and the mlp lifts the four
    distance channels to the token width.
    """

    def __init__(self, dim: int, rng: np.random.Generator,
                 init_scale: float = 0.02):
        self.dim = dim
        self.weight = parameter(rng.normal(scale=init_scale, size=(1, 1, dim)))
        self.fc1 = Linear(4, dim, rng, init_scale=init_scale)
        self.fc2 = Linear(dim, dim, rng, init_scale=init_scale)

    def __call__(self, gaussian: np.ndarray, ltrb: np.ndarray) -> Tensor:
        gaussian = np.asarray(gaussian, dtype=np.float64)
        ltrb = np.asarray(ltrb, dtype=np.float64)
        if (gaussian.ndim != 3 or gaussian.shape[2] != 1
                or ltrb.ndim != 3 or ltrb.shape[2] != 4
                or gaussian.shape[:2] != ltrb.shape[:2]):
            raise ValueError(
                f"grid mismatch: gaussian {gaussian.shape} vs ltrb {ltrb.shape}")
        lifted = self.fc2(gelu(self.fc1(Tensor(ltrb))))
        return self.weight * Tensor(gaussian) + lifted
