"""Frame-by-frame tracking with online template updates.

The tracker crops a search window around the last known box, runs the
network against the fixed target template and the current previous-frame
template, decodes the best box, and maps it back to frame coordinates.
After every frame the update policy decides whether the previous-frame
template is replaced with a crop around the new prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .heads import decode_box
from .imageops import Box, box_iou, box_window, crop_resize
from .model import STRIDE, TrackerNet
from .synthetic import SyntheticSequence
from .update import MODES, TrackState


@dataclass(frozen=True)
class TrackConfig:
    update_mode: str = "p-mean"
    seed_confidence: float = 1.0
    context_scale: float = 2.0
    oracle: bool = False   # score ground-truth boxes through the pipeline

    def validate(self) -> "TrackConfig":
        if self.update_mode not in MODES:
            raise ConfigError(
                f"unknown update mode {self.update_mode!r}, "
                f"expected one of {MODES}")
        if not 0.0 <= self.seed_confidence <= 1.0:
            raise ConfigError("seed_confidence must lie in [0, 1]")
        if self.context_scale <= 0.0:
            raise ConfigError("context_scale must be positive")
        return self


@dataclass(frozen=True)
class FrameRecord:
    """Per-frame tracking outcome in frame coordinates."""

    frame: int
    box: Box
    iou: float
    confidence: float
    threshold: float   # nan for modes without a threshold
    updated: bool


class _Template(NamedTuple):
    crop: np.ndarray
    box: Box           # box position inside the crop


def _make_template(frame: np.ndarray, box: Box, context: float,
                   out_size: int) -> _Template:
    window = box_window(box, context, out_size)
    return _Template(crop=crop_resize(frame, window),
                     box=window.to_crop(box))


def run_tracker(net: TrackerNet, sequence: SyntheticSequence,
                cfg: TrackConfig = TrackConfig()) -> list[FrameRecord]:
    """Track through the sequence; returns one record per frame after the
    first (the first frame provides the ground-truth initialization)."""
    cfg.validate()
    if len(sequence) < 1:
        raise ConfigError("cannot track an empty sequence")
    spec = net.spec
    first_box = sequence.boxes[0]

    target_window = box_window(first_box, cfg.context_scale, spec.target_size)
    target_crop = crop_resize(sequence.frames[0], target_window)
    state = TrackState(
        target_template=target_crop,
        previous_template=_make_template(sequence.frames[0], first_box,
                                         cfg.context_scale, spec.search_size),
        mode=cfg.update_mode,
        seed_confidence=cfg.seed_confidence)

    last_box = first_box
    records: list[FrameRecord] = []
    for t in range(1, len(sequence)):
        search_window = box_window(last_box, cfg.context_scale,
                                   spec.search_size)
        search_crop = crop_resize(sequence.frames[t], search_window)
        previous = state.previous_template
        outputs = net.forward(state.target_template, previous.crop,
                              search_crop, prev_box=previous.box)
        decoded = decode_box(outputs, STRIDE)
        confidence = float(decoded.confidence)

        if decoded.degenerate:
            pred_box = last_box   # hold position rather than collapse
        else:
            pred_box = search_window.to_frame(decoded.box)
        if cfg.oracle:
            pred_box = sequence.boxes[t]

        decision = state.should_update(confidence)
        updated = decision.update and not decoded.degenerate
        if updated:
            state.previous_template = _make_template(
                sequence.frames[t], pred_box, cfg.context_scale,
                spec.search_size)

        records.append(FrameRecord(
            frame=t, box=pred_box,
            iou=box_iou(pred_box, sequence.boxes[t]),
            confidence=confidence, threshold=decision.threshold,
            updated=updated))
        last_box = pred_box
    return records


class TrackMetrics(NamedTuple):
    ao: float     # average overlap across scored frames
    sr50: float   # fraction of frames with overlap strictly above 0.5
    sr75: float   # fraction of frames with overlap strictly above 0.75


def compute_metrics(ious: list[float]) -> TrackMetrics:
    if not ious:
        raise ConfigError("no frames to score")
    values = np.asarray(ious, dtype=np.float64)
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise ConfigError("overlap values must lie in [0, 1]")
    return TrackMetrics(ao=float(values.mean()),
                        sr50=float((values > 0.5).mean()),
                        sr75=float((values > 0.75).mean()))


def simulate_updates(trace, mode: str, seed_confidence: float = 1.0):
    """Replay a confidence trace through the update policy.

    Returns one (update, threshold) decision per trace element, in order.
    """
    try:
        state = TrackState(None, None, mode=mode,
                           seed_confidence=seed_confidence)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    decisions = []
    for value in trace:
        try:
            decisions.append(state.should_update(float(value)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return decisions
