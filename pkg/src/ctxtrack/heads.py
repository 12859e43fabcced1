"""Prediction heads over the search feature map, box decoding, and losses.

The classification head scores each grid position as foreground; the
regression head predicts per-position distances to the four box sides in
grid units. Training combines an IoU-aware focal classification term with
a generalized-IoU term over positive positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .attention import Linear
from .backbone import Box, _validate_box
from .tensor import Module, Tensor, as_tensor, gelu, maximum, minimum, no_grad


@dataclass
class HeadOutputs:
    """Per-position predictions: cls in (0,1), reg positive ltrb distances."""

    cls: Tensor  # (H, W, 1)
    reg: Tensor  # (H, W, 4)

    @property
    def grid(self) -> tuple[int, int]:
        return self.cls.shape[0], self.cls.shape[1]


class Heads(Module):
    """Two independent three-layer perceptrons applied per position."""

    def __init__(self, dim: int, rng: np.random.Generator, init_scale: float = 0.02):
        self.dim = dim
        self.cls_fc1 = Linear(dim, dim, rng, init_scale=init_scale)
        self.cls_fc2 = Linear(dim, dim, rng, init_scale=init_scale)
        self.cls_out = Linear(dim, 1, rng, init_scale=init_scale)
        self.reg_fc1 = Linear(dim, dim, rng, init_scale=init_scale)
        self.reg_fc2 = Linear(dim, dim, rng, init_scale=init_scale)
        self.reg_out = Linear(dim, 4, rng, init_scale=init_scale)

    def __call__(self, features: Tensor) -> HeadOutputs:
        if features.ndim != 3 or features.shape[2] != self.dim:
            raise ValueError(
                f"expected (H, W, {self.dim}) features, got {features.shape}")
        cls = self.cls_out(gelu(self.cls_fc2(gelu(self.cls_fc1(features)))))
        reg = self.reg_out(gelu(self.reg_fc2(gelu(self.reg_fc1(features)))))
        return HeadOutputs(cls=cls.sigmoid(), reg=reg.exp())


# ----------------------------------------------------------------------
# box decoding
# ----------------------------------------------------------------------

class DecodedBox(NamedTuple):
    box: Box                  # pixels, (x1, y1, x2, y2)
    confidence: float
    position: tuple[int, int]  # (row, col) of the scoring grid cell
    degenerate: bool


def _data(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def decode_box(outputs: HeadOutputs, stride: float) -> DecodedBox:
    """Box at the classification argmax; ties break to the lowest flat index.

    Grid position (row k_y, col k_x) with distances (l, t, r, b) decodes to
    ((k_x - l) s, (k_y - t) s, (k_x + r) s, (k_y + b) s). A box without
    positive extent on both axes is flagged as degenerate.
    """
    cls = _data(outputs.cls)[..., 0]
    reg = _data(outputs.reg)
    h, w = cls.shape
    flat = int(np.argmax(cls.reshape(-1)))
    ky, kx = divmod(flat, w)
    l, t, r, b = reg[ky, kx]
    box = ((kx - l) * stride, (ky - t) * stride,
           (kx + r) * stride, (ky + b) * stride)
    return DecodedBox(box=box, confidence=float(cls[ky, kx]),
                      position=(ky, kx), degenerate=(l + r <= 0 or t + b <= 0))


def ltrb_to_boxes(reg: np.ndarray) -> np.ndarray:
    """Per-position decoded boxes in grid units, (H, W, 4)."""
    h, w, _ = reg.shape
    ky, kx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    return np.stack([kx - reg[..., 0], ky - reg[..., 1],
                     kx + reg[..., 2], ky + reg[..., 3]], axis=-1)


def _ltrb_to_boxes_tensor(reg: Tensor) -> Tensor:
    from .tensor import concat
    h, w, _ = reg.shape
    ky, kx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    ky, kx = ky[..., None], kx[..., None]
    return concat([kx - reg[:, :, 0:1], ky - reg[:, :, 1:2],
                   kx + reg[:, :, 2:3], ky + reg[:, :, 3:4]], axis=2)


# ----------------------------------------------------------------------
# losses
# ----------------------------------------------------------------------

def giou_values(pred: Tensor, gt_box: Box) -> Tensor:
    """Generalized IoU of predicted boxes (..., 4) against one ground truth.

    GIoU = IoU - (hull - union) / hull, always in [-1, 1]. The ground-truth
    box must be non-degenerate, which keeps union and hull positive.
    """
    gx1, gy1, gx2, gy2 = _validate_box(gt_box)
    pred = as_tensor(pred)
    px1, py1 = pred[..., 0], pred[..., 1]
    px2, py2 = pred[..., 2], pred[..., 3]
    inter_w = (minimum(px2, gx2) - maximum(px1, gx1)).relu()
    inter_h = (minimum(py2, gy2) - maximum(py1, gy1)).relu()
    inter = inter_w * inter_h
    pred_area = (px2 - px1).relu() * (py2 - py1).relu()
    gt_area = (gx2 - gx1) * (gy2 - gy1)
    union = pred_area + gt_area - inter
    hull = (maximum(px2, gx2) - minimum(px1, gx1)) * \
           (maximum(py2, gy2) - minimum(py1, gy1))
    return inter / union - (hull - union) / hull


def giou_loss(pred: Tensor, gt_box: Box) -> Tensor:
    """1 - GIoU, elementwise over predicted boxes; in [0, 2]."""
    return 1.0 - giou_values(pred, gt_box)


def varifocal_loss(p: Tensor, q: np.ndarray, alpha: float = 0.75,
                   gamma: float = 2.0) -> Tensor:
    """IoU-aware focal classification loss.

    Positions with target q > 0 pay a cross-entropy against q weighted by q;
    negatives pay -alpha * p**gamma * log(1 - p). The sum is normalized by
    the positive count (at least 1). Predictions must lie strictly inside
    (0, 1) and targets in [0, 1].
    """
    q = np.asarray(q, dtype=np.float64)
    p = as_tensor(p)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: predictions {p.shape} vs targets {q.shape}")
    if np.any(p.data <= 0.0) or np.any(p.data >= 1.0):
        raise ValueError("predictions must lie strictly inside (0, 1)")
    if np.any(q < 0.0) or np.any(q > 1.0):
        raise ValueError("targets must lie in [0, 1]")
    pos = (q > 0.0).astype(np.float64)
    log_p = p.log()
    log_not_p = (1.0 - p).log()
    pos_term = (q * log_p + (1.0 - q) * log_not_p) * (-q)
    neg_term = (p ** gamma) * log_not_p * (-alpha)
    total = (pos_term * pos + neg_term * (1.0 - pos)).sum()
    return total / max(1.0, float(pos.sum()))


@dataclass
class TrainingTarget:
    """IoU-aware classification targets for one search frame."""

    q: np.ndarray          # (H, W, 1), zero off the positives
    positives: np.ndarray  # (H, W) bool, centers strictly inside the gt box
    box: Box               # ground truth in pixels


def _iou_grid(boxes: np.ndarray, gt: tuple[float, float, float, float]) -> np.ndarray:
    gx1, gy1, gx2, gy2 = gt
    inter_w = np.clip(np.minimum(boxes[..., 2], gx2) - np.maximum(boxes[..., 0], gx1),
                      0.0, None)
    inter_h = np.clip(np.minimum(boxes[..., 3], gy2) - np.maximum(boxes[..., 1], gy1),
                      0.0, None)
    inter = inter_w * inter_h
    pred_area = np.clip(boxes[..., 2] - boxes[..., 0], 0.0, None) * \
        np.clip(boxes[..., 3] - boxes[..., 1], 0.0, None)
    union = pred_area + (gx2 - gx1) * (gy2 - gy1) - inter
    return inter / union


def build_targets(gt_box: Box, grid: tuple[int, int], stride: float,
                  reg) -> TrainingTarget:
    """Positives are cells whose centers fall strictly inside the gt box;
    their target is the IoU of the currently predicted box at that cell,
    taken as a constant (no gradient flows through it)."""
    x1, y1, x2, y2 = _validate_box(gt_box)
    h, w = grid
    if x1 < 0 or y1 < 0 or x2 > w * stride or y2 > h * stride:
        raise ValueError(f"gt box {gt_box} outside the {w * stride}x{h * stride} image")
    cy, cx = np.meshgrid((np.arange(h) + 0.5) * stride,
                         (np.arange(w) + 0.5) * stride, indexing="ij")
    positives = (x1 < cx) & (cx < x2) & (y1 < cy) & (cy < y2)
    with no_grad():
        boxes = ltrb_to_boxes(_data(reg))
        iou = _iou_grid(boxes, (x1 / stride, y1 / stride, x2 / stride, y2 / stride))
    q = np.where(positives, np.clip(iou, 0.0, 1.0), 0.0)[..., None]
    return TrainingTarget(q=q, positives=positives, box=(x1, y1, x2, y2))


def total_loss(cls_term, giou_term, lambda_cls: float = 1.5,
               lambda_giou: float = 1.5):
    """Weighted sum of the classification and regression terms."""
    return cls_term * lambda_cls + giou_term * lambda_giou


def tracking_loss(outputs: HeadOutputs, gt_box: Box, stride: float,
                  alpha: float = 0.75, gamma: float = 2.0,
                  lambda_cls: float = 1.5, lambda_giou: float = 1.5
                  ) -> tuple[Tensor, dict[str, float], TrainingTarget]:
    """Full objective for one frame: weighted cls + giou over positives."""
    target = build_targets(gt_box, outputs.grid, stride, outputs.reg)
    cls_term = varifocal_loss(outputs.cls, target.q, alpha, gamma)
    if target.positives.any():
        boxes = _ltrb_to_boxes_tensor(outputs.reg)
        gt_grid = tuple(v / stride for v in target.box)
        per_pos = giou_loss(boxes, gt_grid)
        mask = target.positives.astype(np.float64)
        giou_term = (per_pos * mask).sum() / float(mask.sum())
    else:
        giou_term = as_tensor(0.0)
    total = total_loss(cls_term, giou_term, lambda_cls, lambda_giou)
    parts = {"cls": float(cls_term.data), "giou": float(giou_term.data)}
    return total, parts, target
