"""Per-frame tracking pipeline with generative template update and change-gated stalls."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch

from . import adapt
from .backbone import Backbone, argmax_to_bbox, cross_correlate, extract_features
from .change import CalibrationStats, TemplateBuffer, detect_change, regularity
from .errors import InvalidBoxError, ShapeMismatchError
from .generator import TemplateGenerator, generate_next, reconstruction_error
from .imaging import BBox, blend, crop_and_resize, iou


class UpdateMode(str, Enum):
    """Template update strategies, one per ablation tier."""

    FROZEN = "frozen"
    MOVING_AVERAGE = "moving_average"
    UPDATENET_STYLE = "updatenet_style"
    GENERATIVE = "generative"
    GENERATIVE_BLEND = "generative+blend"
    FULL = "generative+blend+change"

    @property
    def generative(self) -> bool:
        return self in (UpdateMode.GENERATIVE, UpdateMode.GENERATIVE_BLEND, UpdateMode.FULL)

    @property
    def blends(self) -> bool:
        return self in (UpdateMode.GENERATIVE_BLEND, UpdateMode.FULL)

    @property
    def gated(self) -> bool:
        return self is UpdateMode.FULL


ALL_MODES = [m.value for m in UpdateMode]


@dataclass
class TrackerConfig:
    k: int = 4
    tau: float = 0.5
    alpha: float = 0.5
    context: float = 2.0
    template_side: int = 64
    search_side: int = 128
    residual: bool = False
    update_mode: str = UpdateMode.FULL.value
    gamma: float = 0.1
    lam: float = 10.0
    window_influence: float = 0.0

    def __post_init__(self):
        UpdateMode(self.update_mode)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")

    @property
    def mode(self) -> UpdateMode:
        return UpdateMode(self.update_mode)

    @property
    def search_scale(self) -> float:
        return self.context * self.search_side / self.template_side


@dataclass
class Models:
    backbone: Backbone
    generator: TemplateGenerator | None = None
    adapter: adapt.Adapter | None = None
    stats: CalibrationStats | None = None


@dataclass
class TrackState:
    bbox: BBox
    phi_init: torch.Tensor
    phi_tilde: torch.Tensor
    buffer: TemplateBuffer
    stats: CalibrationStats | None
    frame_index: int
    last_template: np.ndarray
    pushes: int = 0
    frame_size: tuple[int, int] = (0, 0)


@dataclass
class TrackerOutput:
    frame_index: int
    bbox: BBox
    peak_score: float
    regularity: float = 1.0
    change: bool = False
    warmup: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "frame": self.frame_index,
                "bbox": [round(v, 6) for v in self.bbox.as_list()],
                "score": round(float(self.peak_score), 6),
                "regularity": round(float(self.regularity), 6),
                "change": bool(self.change),
            }
        )


def _hanning_window(n: int, m: int) -> torch.Tensor:
    return torch.from_numpy(np.outer(np.hanning(n), np.hanning(m))).float()


class Tracker:
    """Single-object tracker; holds immutable models and config, state lives in :class:`TrackState`."""

    def __init__(self, models: Models, config: TrackerConfig | None = None):
        self.models = models
        self.config = config or TrackerConfig()
        mode = self.config.mode
        if mode is not UpdateMode.FROZEN and mode is not UpdateMode.MOVING_AVERAGE and models.adapter is None:
            raise ValueError(f"update mode {mode.value!r} needs an adapter")
        if mode.generative and models.generator is None:
            raise ValueError(f"update mode {mode.value!r} needs a generator")
        if mode.gated and models.stats is None:
            raise ValueError("change-gated mode needs calibration stats")
        if models.generator is not None and models.generator.k != self.config.k:
            raise ValueError(f"generator clip length {models.generator.k} != config k {self.config.k}")
        self.generator_calls = 0
        self.adapter_calls = 0

    # -- helpers
    def _template(self, frame: np.ndarray, box: BBox) -> np.ndarray:
        return crop_and_resize(frame, box, self.config.context, self.config.template_side)

    def _features(self, img: np.ndarray) -> torch.Tensor:
        return extract_features(self.models.backbone, img)

    def _generate(self, buffer: TemplateBuffer) -> np.ndarray:
        self.generator_calls += 1
        return generate_next(self.models.generator, buffer.slots)

    def _adapt(self, state: TrackState, phi_z: torch.Tensor, phi_hat: torch.Tensor) -> torch.Tensor:
        self.adapter_calls += 1
        p = self.models.adapter
        with torch.no_grad():
            a = adapt.channel_attention(p, phi_z, state.phi_init, phi_hat)
            return adapt.fuse(p, state.phi_tilde, phi_hat, a, state.phi_init, self.config.residual)

    # -- public operations
    def init(self, frame: np.ndarray, box: BBox) -> TrackState:
        if not isinstance(box, BBox):
            box = BBox(*box)
        h, w = frame.shape[:2]
        cx, cy = box.center
        if not (0 <= cx <= w and 0 <= cy <= h):
            raise InvalidBoxError(f"box centre ({cx:.1f}, {cy:.1f}) lies outside the {w}x{h} frame")
        t_init = self._template(frame, box)
        phi_init = self._features(t_init)
        return TrackState(
            bbox=box,
            phi_init=phi_init,
            phi_tilde=phi_init.clone(),
            buffer=TemplateBuffer(self.config.k, [t_init] * self.config.k),
            stats=self.models.stats,
            frame_index=0,
            last_template=t_init,
            pushes=0,
            frame_size=(w, h),
        )

    def step(self, state: TrackState, frame: np.ndarray) -> tuple[TrackState, TrackerOutput]:
        cfg = self.config
        mode = cfg.mode
        h, w = frame.shape[:2]
        if (w, h) != state.frame_size:
            raise ShapeMismatchError(f"frame size {(w, h)} differs from the initial {state.frame_size}")
        index = state.frame_index + 1
        prev_box = state.bbox
        scale = cfg.search_scale * max(prev_box.w, prev_box.h) / cfg.search_side
        phi_z = self._features(crop_and_resize(frame, prev_box, cfg.search_scale, cfg.search_side))

        out_prev = state.last_template
        buffer = state.buffer
        phi_tilde = state.phi_tilde
        pushes = state.pushes
        s, change, warmup = 1.0, False, False

        if mode is UpdateMode.MOVING_AVERAGE:
            phi_tilde = adapt.moving_average(phi_tilde, self._features(out_prev), cfg.gamma)
        elif mode is UpdateMode.UPDATENET_STYLE:
            phi_tilde = self._adapt(state, phi_z, self._features(out_prev))
        elif mode.generative:
            buffer = buffer.copy()
            if pushes < cfg.k:
                warmup = True
                buffer.push(out_prev)
                pushes += 1
                phi_tilde = adapt.moving_average(phi_tilde, self._features(out_prev), cfg.gamma)
            else:
                t_hat = self._generate(buffer)
                if state.stats is not None:
                    s = regularity(reconstruction_error(t_hat, out_prev), state.stats)
                change = mode.gated and detect_change(s, cfg.tau)
                if change:
                    # stall: the rejected observation never enters the buffer and phi_tilde is kept
                    buffer = state.buffer
                else:
                    if mode.blends:
                        t_upd = blend(t_hat, out_prev, cfg.alpha)
                        buffer.push(t_upd)
                    else:
                        t_upd = t_hat
                        buffer.push(out_prev)
                    pushes += 1
                    phi_tilde = self._adapt(state, phi_z, self._features(t_upd))

        score = cross_correlate(phi_tilde, phi_z, self.models.backbone.bias.detach())
        peak = float(score.max())
        decision = score
        if cfg.window_influence > 0:
            norm = (score - score.min()) / (score.max() - score.min() + 1e-12)
            decision = (1 - cfg.window_influence) * norm + cfg.window_influence * _hanning_window(*score.shape)
        box = argmax_to_bbox(decision, prev_box, self.models.backbone.stride, scale).clipped(w, h)

        new_state = TrackState(
            bbox=box,
            phi_init=state.phi_init,
            phi_tilde=phi_tilde,
            buffer=buffer,
            stats=state.stats,
            frame_index=index,
            last_template=self._template(frame, box),
            pushes=pushes,
            frame_size=state.frame_size,
        )
        return new_state, TrackerOutput(index, box, peak, s, change, warmup)


def run(frames, init_box: BBox, models: Models, config: TrackerConfig | None = None,
        tracker: Tracker | None = None) -> list[TrackerOutput]:
    if len(frames) == 0:
        raise ValueError("cannot track an empty sequence")
    tracker = tracker or Tracker(models, config)
    state = tracker.init(frames[0], init_box)
    outputs = [TrackerOutput(0, state.bbox, 0.0)]
    for frame in frames[1:]:
        state, out = tracker.step(state, frame)
        outputs.append(out)
    return outputs


REINIT_DELAY = 5


@dataclass
class VotResult:
    trajectory: list[TrackerOutput]
    failures: int
    segments: list[list[float]]
    overlaps: list[float]
    reinit_frames: list[int] = field(default_factory=list)
    failure_frames: list[int] = field(default_factory=list)


def run_vot_protocol(frames, ground_truth, models: Models | None = None, config: TrackerConfig | None = None,
                     tracker=None) -> VotResult:
    """Supervised run: a frame with zero overlap is a failure; the tracker is re-initialised from
    ground truth five frames later, the skipped frames scoring zero overlap."""
    if len(frames) != len(ground_truth):
        raise ValueError(f"{len(frames)} frames but {len(ground_truth)} ground-truth boxes")
    if len(frames) == 0:
        raise ValueError("cannot track an empty sequence")
    tracker = tracker or Tracker(models, config)
    gts = [g.gt_box if hasattr(g, "gt_box") else g for g in ground_truth]
    n = len(frames)
    traj: list[TrackerOutput] = []
    overlaps: list[float] = []
    segments: list[list[float]] = []
    failures, failure_frames, reinit_frames = 0, [], []
    f = 0
    while f < n:
        state = tracker.init(frames[f], gts[f])
        traj.append(TrackerOutput(f, gts[f], 0.0))
        overlaps.append(1.0)
        segment = [1.0]
        f += 1
        failed = False
        while f < n:
            state, out = tracker.step(state, frames[f])
            out.frame_index = f
            ov = iou(out.bbox, gts[f])
            traj.append(out)
            overlaps.append(ov)
            segment.append(ov)
            if ov == 0.0:
                failed = True
                break
            f += 1
        if not failed:
            segments.append(segment)
            break
        failures += 1
        failure_frames.append(f)
        reinit = f + REINIT_DELAY
        for g in range(f + 1, min(reinit, n)):
            traj.append(TrackerOutput(g, traj[-1].bbox, 0.0, 1.0, False))
            overlaps.append(0.0)
            segment.append(0.0)
        segments.append(segment)
        if reinit >= n:
            break
        reinit_frames.append(reinit)
        f = reinit
    return VotResult(traj, failures, segments, overlaps, reinit_frames, failure_frames)


def write_trajectory(path: str | Path, outputs: list[TrackerOutput]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for out in outputs:
            fh.write(out.to_json() + "\n")


def config_dict(cfg: TrackerConfig) -> dict:
    return asdict(cfg)
