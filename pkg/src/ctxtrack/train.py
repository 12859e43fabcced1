"""Toy training loop: overfit the tracker on a single synthetic sequence.

Each step samples a (target, previous, search) triplet from one sequence:
the target template is a fixed crop around the first-frame box, the
previous frame is drawn uniformly before the search frame, and both crops
are jittered in center and scale so the network cannot memorize a single
pixel layout. Optimization is plain Adam on the combined classification
and box-regression loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .heads import tracking_loss
from .imageops import CropWindow, box_window, crop_resize, crop_window
from .model import STRIDE, TrackerNet
from .optim import Adam
from .synthetic import SyntheticSequence


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the toy overfit loop.

    Jitter fields are fractions: center jitter is a fraction of the box
    side, scale jitter multiplies the crop window side by a factor drawn
    from [1 - j, 1 + j].
    """

    steps: int = 500
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    warmup_steps: int = 0
    final_lr_scale: float = 0.1   # cosine-decay endpoint, as a fraction of lr
    lambda_cls: float = 1.5
    lambda_giou: float = 1.5
    alpha: float = 0.75
    gamma: float = 2.0
    context_scale: float = 2.0
    prev_center_jitter: float = 0.25
    prev_scale_jitter: float = 0.2
    search_center_jitter: float = 0.35
    search_scale_jitter: float = 0.1

    def validate(self) -> None:
        if self.steps < 1:
            raise ConfigError("steps must be at least 1")
        if self.lr < 0.0:
            raise ConfigError("lr must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        if self.eps <= 0.0:
            raise ConfigError("eps must be positive")
        if self.warmup_steps < 0 or self.warmup_steps >= self.steps:
            raise ConfigError("warmup_steps must lie in [0, steps)")
        if not 0.0 < self.final_lr_scale <= 1.0:
            raise ConfigError("final_lr_scale must lie in (0, 1]")
        if self.lambda_cls < 0.0 or self.lambda_giou < 0.0:
            raise ConfigError("loss weights must be non-negative")
        if self.context_scale <= 0.0:
            raise ConfigError("context_scale must be positive")
        for name in ("prev_center_jitter", "prev_scale_jitter",
                     "search_center_jitter", "search_scale_jitter"):
            value = getattr(self, name)
            if not 0.0 <= value < 0.5:
                raise ConfigError(f"{name} must lie in [0, 0.5)")
        # The ground-truth box must stay inside the jittered crop so loss
        # targets remain well defined. For a square box of side b the
        # worst-case box extent from the window center is
        # (0.5 + center_jitter) * b while the crop half-width is
        # 0.5 * context * (1 - scale_jitter) * b.
        for cj, sj in ((self.prev_center_jitter, self.prev_scale_jitter),
                       (self.search_center_jitter, self.search_scale_jitter)):
            if 0.5 + cj >= 0.5 * self.context_scale * (1.0 - sj):
                raise ConfigError(
                    "jitter can push the box outside the crop window")


def _lr_at(cfg: TrainConfig, step: int) -> float:
    """Linear warmup, then cosine decay to lr * final_lr_scale."""
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    if cfg.final_lr_scale >= 1.0:
        return cfg.lr
    span = max(1, cfg.steps - 1 - cfg.warmup_steps)
    t = (step - cfg.warmup_steps) / span
    floor = cfg.final_lr_scale
    return cfg.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(np.pi * t)))


def _contained(box, size: int) -> bool:
    x1, y1, x2, y2 = box
    return 0.0 <= x1 and 0.0 <= y1 and x2 <= size and y2 <= size


def _jittered_window(rng: np.random.Generator, box, context: float,
                     out_size: int, center_jitter: float,
                     scale_jitter: float) -> CropWindow:
    """Crop window around ``box`` with randomized center and side."""
    x1, y1, x2, y2 = box
    bw = x2 - x1
    bh = y2 - y1
    cx = 0.5 * (x1 + x2) + rng.uniform(-center_jitter, center_jitter) * bw
    cy = 0.5 * (y1 + y2) + rng.uniform(-center_jitter, center_jitter) * bh
    side = context * float(np.sqrt(bw * bh))
    side *= 1.0 + rng.uniform(-scale_jitter, scale_jitter)
    return crop_window((cx, cy), side, out_size)


def toy_train(net: TrackerNet, sequence: SyntheticSequence,
              cfg: TrainConfig) -> list[float]:
    """Run the overfit loop and return the per-step loss values."""
    cfg.validate()
    if len(sequence) < 2:
        raise ConfigError("training needs a sequence with at least 2 frames")
    spec = net.spec
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(net.parameters(), lr=cfg.lr, beta1=cfg.beta1,
                     beta2=cfg.beta2, eps=cfg.eps)

    template_window = box_window(sequence.boxes[0], cfg.context_scale,
                                 spec.target_size)
    target_crop = crop_resize(sequence.frames[0], template_window)

    losses: list[float] = []
    for step in range(cfg.steps):
        cur = int(rng.integers(1, len(sequence)))
        prev = int(rng.integers(0, cur))

        prev_window = _jittered_window(
            rng, sequence.boxes[prev], cfg.context_scale, spec.search_size,
            cfg.prev_center_jitter, cfg.prev_scale_jitter)
        prev_crop = crop_resize(sequence.frames[prev], prev_window)
        prev_box = prev_window.to_crop(sequence.boxes[prev])

        search_window = _jittered_window(
            rng, sequence.boxes[cur], cfg.context_scale, spec.search_size,
            cfg.search_center_jitter, cfg.search_scale_jitter)
        gt_box = search_window.to_crop(sequence.boxes[cur])
        if not _contained(gt_box, spec.search_size):
            # Extreme aspect ratios can defeat the square-box jitter bound;
            # fall back to the centered window so loss targets stay valid.
            search_window = box_window(sequence.boxes[cur],
                                       cfg.context_scale, spec.search_size)
            gt_box = search_window.to_crop(sequence.boxes[cur])
        search_crop = crop_resize(sequence.frames[cur], search_window)

        outputs = net.forward(target_crop, prev_crop, search_crop,
                              prev_box=prev_box)
        loss, _, _ = tracking_loss(
            outputs, gt_box, STRIDE, alpha=cfg.alpha, gamma=cfg.gamma,
            lambda_cls=cfg.lambda_cls, lambda_giou=cfg.lambda_giou)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at step {step}")
        losses.append(value)

        net.zero_grad()
        loss.backward()
        optimizer.lr = _lr_at(cfg, step)
        optimizer.step()
    return losses
