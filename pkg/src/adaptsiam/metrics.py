"""One-pass success/precision and supervised-run robustness/EAO-lite metrics."""

from __future__ import annotations

import numpy as np

from .imaging import BBox, iou

THRESHOLDS = np.linspace(0.0, 1.0, 21)


def _boxes(seq) -> list[BBox]:
    return [getattr(b, "bbox", None) or getattr(b, "gt_box", None) or b for b in seq]


def _check(pred, gt) -> tuple[list[BBox], list[BBox]]:
    pred, gt = _boxes(pred), _boxes(gt)
    if len(pred) != len(gt):
        raise ValueError(f"trajectory has {len(pred)} boxes but ground truth has {len(gt)}")
    if not pred:
        raise ValueError("empty trajectory")
    return pred, gt


def overlaps(pred, gt) -> np.ndarray:
    pred, gt = _check(pred, gt)
    return np.array([iou(a, b) for a, b in zip(pred, gt)])


def success_curve(ious: np.ndarray) -> np.ndarray:
    ious = np.asarray(ious, dtype=np.float64)
    return np.array([(ious > t).mean() for t in THRESHOLDS])


def success_auc(pred, gt) -> float:
    """Mean over 21 thresholds in [0, 1] of the fraction of frames with IoU strictly above the threshold."""
    return float(success_curve(overlaps(pred, gt)).mean())


def center_errors(pred, gt) -> np.ndarray:
    pred, gt = _check(pred, gt)
    return np.array([np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) for a, b in zip(pred, gt)])


def precision_at(pred, gt, radius: float = 20.0) -> float:
    return float((center_errors(pred, gt) <= radius).mean())


def robustness_and_eao(segments, failures: int, frame_count: int) -> tuple[float, float]:
    """Failures per 1000 frames and the mean of per-segment mean overlaps."""
    if frame_count <= 0:
        raise ValueError("frame_count must be positive")
    if failures < 0:
        raise ValueError("failures must be non-negative")
    means = [float(np.mean(s)) for s in segments if len(s)]
    if not means:
        raise ValueError("no non-empty segments")
    return failures * 1000.0 / frame_count, float(np.mean(means))
