"""Training stages, model-directory io and evaluation runs used by the command line."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint, metrics
from .adapt import build_samples, constraint_rate, init_adapter, train_adapter
from .backbone import Backbone, train_matcher
from .change import CalibrationStats, calibrate
from .config import Settings
from .generator import build_clips, init_discriminator, init_generator, train_generator
from .tracker import Models, Tracker, TrackerConfig, TrackerOutput, UpdateMode, run, run_vot_protocol

log = logging.getLogger(__name__)

BACKBONE = "backbone"
GENERATOR = "generator"
DISCRIMINATOR = "discriminator"
ADAPTER = "adapter"
CALIBRATION = "calibration.json"
ADAPT_SUMMARY = "adapt_summary.json"


def split_names(names, val_fraction: float) -> tuple[list[str], list[str]]:
    """Deterministic split: the last ``val_fraction`` of the sorted names is held out."""
    names = sorted(names)
    n_val = max(1, int(round(len(names) * val_fraction))) if len(names) > 1 else 0
    return names[: len(names) - n_val], names[len(names) - n_val :]


def _subset(sequences: dict, names) -> dict:
    return {n: sequences[n] for n in names}


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint: {path}")
    return path


# ---------------------------------------------------------------- stages


def stage_backbone(sequences: dict, settings: Settings, models_dir: Path) -> Backbone:
    net = train_matcher(sequences, settings.matcher(), log_path=models_dir / "matcher_log.jsonl")
    checkpoint.save_module(net, models_dir / BACKBONE)
    return net


def stage_generator(sequences: dict, settings: Settings, models_dir: Path):
    cfg = settings.generator()
    train, val = split_names(sequences, settings.val_fraction)
    clips = build_clips(_subset(sequences, train), cfg.k, cfg.clips_per_sequence, settings.seed,
                        settings.context, settings.template_side, cfg.jitter)
    val_clips = build_clips(_subset(sequences, val), cfg.k, cfg.clips_per_sequence, settings.seed + 1,
                            settings.context, settings.template_side, cfg.jitter) if val else None
    gen, disc, records = train_generator(clips, cfg, val_clips, log_path=models_dir / "gen_log.jsonl")
    checkpoint.save_module(gen, models_dir / GENERATOR)
    checkpoint.save_module(disc, models_dir / DISCRIMINATOR)
    return gen, disc, records


def calibration_clips(sequences: dict, settings: Settings):
    """Held-out clips whose final template is cropped off-centre, like a tracker output."""
    _, val = split_names(sequences, settings.val_fraction)
    return build_clips(_subset(sequences, val), settings.k, settings.clips_per_sequence, settings.seed + 2,
                       settings.context, settings.template_side, settings.calib_jitter,
                       target_jitter=settings.calib_target_jitter)


def stage_calibrate(sequences: dict, settings: Settings, models_dir: Path) -> CalibrationStats:
    gen = load_generator(models_dir, settings.k)
    stats = calibrate(gen, calibration_clips(sequences, settings), settings.tau)
    stats.save(models_dir / CALIBRATION)
    return stats


def adapt_samples(sequences: dict, settings: Settings, backbone, generator):
    train, val = split_names(sequences, settings.val_fraction)
    kw = dict(per_sequence=settings.samples_per_sequence, context=settings.context,
              template_side=settings.template_side, search_side=settings.search_side,
              alpha=settings.alpha, jitter=settings.jitter)
    samples = build_samples(_subset(sequences, train), backbone, generator, seed=settings.seed, **kw)
    held_out = build_samples(_subset(sequences, val), backbone, generator, seed=settings.seed + 1, **kw)
    return samples, held_out


def stage_adapter(sequences: dict, settings: Settings, models_dir: Path):
    backbone = load_backbone(models_dir)
    gen = load_generator(models_dir, settings.k)
    samples, held_out = adapt_samples(sequences, settings, backbone, gen)
    cfg = settings.adapter()
    before = constraint_rate(init_adapter(backbone.out_channels, cfg.seed), held_out, cfg.residual)
    net, records = train_adapter(samples, cfg, held_out, log_path=models_dir / "adapt_log.jsonl")
    checkpoint.save_module(net, models_dir / ADAPTER)
    summary = {"held_out_samples": len(held_out), "rate_before": before, "rate_after": records[-1]["constraint_rate"]}
    (models_dir / ADAPT_SUMMARY).write_text(json.dumps(summary, sort_keys=True) + "\n", encoding="utf-8")
    return net, before, records


# ---------------------------------------------------------------- loading


def load_backbone(models_dir: Path) -> Backbone:
    path = _require(Path(models_dir) / BACKBONE / checkpoint.MANIFEST).parent
    return checkpoint.load_module(Backbone(), path).eval()


def load_generator(models_dir: Path, k: int):
    path = _require(Path(models_dir) / GENERATOR / checkpoint.MANIFEST).parent
    return checkpoint.load_module(init_generator(k), path).eval()


def load_discriminator(models_dir: Path, side: int = 64):
    path = _require(Path(models_dir) / DISCRIMINATOR / checkpoint.MANIFEST).parent
    return checkpoint.load_module(init_discriminator(0, side), path).eval()


def load_adapter(models_dir: Path, channels: int = 32):
    path = _require(Path(models_dir) / ADAPTER / checkpoint.MANIFEST).parent
    return checkpoint.load_module(init_adapter(channels), path).eval()


def load_models(models_dir: Path, settings: Settings, mode: str | None = None) -> Models:
    """Load exactly the models the update mode needs; missing files raise FileNotFoundError."""
    models_dir = Path(models_dir)
    mode = UpdateMode(mode or settings.update_mode)
    backbone = load_backbone(models_dir)
    gen = load_generator(models_dir, settings.k) if mode.generative else None
    adapter = load_adapter(models_dir, backbone.out_channels) if mode not in (
        UpdateMode.FROZEN, UpdateMode.MOVING_AVERAGE) else None
    stats = None
    if mode.generative:
        stats = CalibrationStats.load(_require(models_dir / CALIBRATION))
        stats = replace(stats, tau=settings.tau)
    return Models(backbone, gen, adapter, stats)


# ---------------------------------------------------------------- evaluation


@dataclass
class SequenceResult:
    name: str
    outputs: list[TrackerOutput]
    overlaps: np.ndarray
    success_auc: float
    precision_at_20: float
    failures: int
    robustness: float
    eao_lite: float
    runtime: float
    occluded: list[bool] = field(default_factory=list)

    @property
    def mean_iou(self) -> float:
        return float(self.overlaps.mean())

    @property
    def frames(self) -> int:
        return len(self.outputs)


def evaluate_sequence(name: str, frames, annotations, models: Models, config: TrackerConfig) -> SequenceResult:
    """One-pass run for success/precision/curves plus a supervised run for failures and EAO-lite."""
    start = time.perf_counter()
    outputs = run(frames, annotations[0].gt_box, models, config, tracker=Tracker(models, config))
    vot = run_vot_protocol(frames, annotations, tracker=Tracker(models, config))
    elapsed = time.perf_counter() - start
    ious = metrics.overlaps(outputs, annotations)
    robustness, eao = metrics.robustness_and_eao(vot.segments, vot.failures, len(frames))
    return SequenceResult(
        name=name,
        outputs=outputs,
        overlaps=ious,
        success_auc=metrics.success_auc(outputs, annotations),
        precision_at_20=metrics.precision_at(outputs, annotations, 20.0),
        failures=vot.failures,
        robustness=robustness,
        eao_lite=eao,
        runtime=elapsed,
        occluded=[a.occluded for a in annotations],
    )


def evaluate(sequences: dict, models: Models, config: TrackerConfig) -> list[SequenceResult]:
    results = []
    for name in sorted(sequences):
        frames, anns = sequences[name]
        res = evaluate_sequence(name, frames, anns, models, config)
        log.info("%s %s mean IoU %.3f failures %d", config.update_mode, name, res.mean_iou, res.failures)
        results.append(res)
    return results


def aggregate(results: list[SequenceResult]) -> dict:
    if not results:
        raise ValueError("no results to aggregate")
    frames = sum(r.frames for r in results)
    failures = sum(r.failures for r in results)
    return {
        "sequences": len(results),
        "frames": frames,
        "mean_iou": float(np.mean([r.mean_iou for r in results])),
        "success_auc": float(np.mean([r.success_auc for r in results])),
        "precision_at_20": float(np.mean([r.precision_at_20 for r in results])),
        "failures": failures,
        "robustness": failures * 1000.0 / frames,
        "eao_lite": float(np.mean([r.eao_lite for r in results])),
        "runtime": float(sum(r.runtime for r in results)),
    }
