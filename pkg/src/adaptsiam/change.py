"""Regularity scoring, change detection and the template buffer."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CalibrationError, InsufficientDataError, ShapeMismatchError, TemplateBufferError

MIN_VALIDATION_CLIPS = 50


@dataclass(frozen=True)
class CalibrationStats:
    e_min: float
    e_max: float
    tau: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.e_min) and np.isfinite(self.e_max)):
            raise CalibrationError("calibration bounds must be finite")
        if self.e_min < 0 or not self.e_min < self.e_max:
            raise CalibrationError(f"need 0 <= e_min < e_max, got {self.e_min}, {self.e_max}")

    def to_json(self) -> str:
        return json.dumps({"e_min": self.e_min, "e_max": self.e_max, "tau": self.tau}, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationStats":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"missing calibration file: {path}")
        d = json.loads(path.read_text(encoding="utf-8"))
        return cls(float(d["e_min"]), float(d["e_max"]), float(d.get("tau", 0.5)))


@dataclass(frozen=True)
class RegularityRecord:
    e: float
    s: float
    is_change: bool
    frame_index: int


def stats_from_errors(errors, tau: float = 0.5, lo_pct: float = 1.0, hi_pct: float = 99.0) -> CalibrationStats:
    """Percentile bounds of a reconstruction-error sample (robust stand-ins for min and max)."""
    errs = np.asarray(errors, dtype=np.float64)
    if errs.size == 0 or not np.all(np.isfinite(errs)):
        raise CalibrationError("need a non-empty, finite error sample")
    e_min, e_max = np.percentile(errs, [lo_pct, hi_pct])
    if not e_max > e_min:
        raise CalibrationError(f"degenerate error distribution (e_min={e_min}, e_max={e_max})")
    return CalibrationStats(float(e_min), float(e_max), tau)


def calibrate(generator, clips, tau: float = 0.5) -> CalibrationStats:
    """Run the generator over validation clips of ``k + 1`` templates and take error percentiles."""
    from .generator import generate_batch, reconstruction_error

    if len(clips) < MIN_VALIDATION_CLIPS:
        raise InsufficientDataError(f"calibration needs >= {MIN_VALIDATION_CLIPS} clips, got {len(clips)}")
    preds = generate_batch(generator, [c[:-1] for c in clips])
    errors = [reconstruction_error(c[-1], p) for c, p in zip(clips, preds)]
    return stats_from_errors(errors, tau)


def regularity(e: float, stats: CalibrationStats) -> float:
    """``1 - (e - e_min) / e_max`` clamped to [0, 1]."""
    s = 1.0 - (e - stats.e_min) / stats.e_max
    return float(min(1.0, max(0.0, s)))


def detect_change(s: float, tau: float) -> bool:
    return s < tau


class TemplateBuffer:
    """Fixed-capacity FIFO of template images whose newest push can be revoked once."""

    def __init__(self, capacity: int, templates=()):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.slots: list[np.ndarray] = []
        self.pending = False
        self._evicted: np.ndarray | None = None
        for t in templates:
            self.push(t)
        self.pending = False
        self._evicted = None

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def full(self) -> bool:
        return len(self.slots) == self.capacity

    @property
    def newest(self) -> np.ndarray:
        return self.slots[-1]

    def push(self, template: np.ndarray) -> "TemplateBuffer":
        if self.slots and template.shape != self.slots[0].shape:
            raise ShapeMismatchError(f"template shape {template.shape} does not match buffer {self.slots[0].shape}")
        self._evicted = self.slots.pop(0) if len(self.slots) == self.capacity else None
        self.slots.append(template.copy())
        self.pending = True
        return self

    def revoke_last(self) -> "TemplateBuffer":
        if not self.pending:
            raise TemplateBufferError("no pending push to revoke")
        self.slots.pop()
        if self._evicted is not None:
            self.slots.insert(0, self._evicted)
        self._evicted = None
        self.pending = False
        return self

    def copy(self) -> "TemplateBuffer":
        other = TemplateBuffer(self.capacity)
        other.slots = [s.copy() for s in self.slots]
        other.pending = self.pending
        other._evicted = None if self._evicted is None else self._evicted.copy()
        return other

    def same_contents(self, other: "TemplateBuffer") -> bool:
        return len(self.slots) == len(other.slots) and all(np.array_equal(a, b) for a, b in zip(self.slots, other.slots))
