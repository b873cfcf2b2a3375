"""Template fusion with search-region channel attention and the constrained adaptation objective.

Feature maps are ``(C, H, W)`` tensors; every function also accepts a leading
batch dimension.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DivergenceError, InsufficientDataError, ShapeMismatchError

log = logging.getLogger(__name__)


class Adapter(nn.Module):
    """Shared attention perceptron plus the 1x1 fusion network (2C -> C -> C, tanh output)."""

    def __init__(self, channels: int = 32, hidden: int | None = None):
        super().__init__()
        hidden = hidden or max(channels // 2, 2)
        self.channels = channels
        self.attn = nn.Sequential(nn.Linear(channels, hidden), nn.ReLU(), nn.Linear(hidden, channels))
        self.eta = nn.Sequential(nn.Conv2d(2 * channels, channels, 1), nn.ReLU(), nn.Conv2d(channels, channels, 1))


def init_adapter(channels: int = 32, seed: int = 0) -> Adapter:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return Adapter(channels).eval()


def _batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeMismatchError(f"expected a (C,H,W) or (B,C,H,W) feature map, got {tuple(x.shape)}")


def stream_attention(params: Adapter, pooled: torch.Tensor) -> torch.Tensor:
    """Sigmoid channel weights from globally pooled features (B, C)."""
    return torch.sigmoid(params.attn(pooled))


def channel_attention(params: Adapter, phi_z, phi_init, phi_hat) -> torch.Tensor:
    """Average of the three per-stream attention vectors; shape (C,) or (B, C)."""
    maps = [_batched(m) for m in (phi_z, phi_init, phi_hat)]
    chans = {m.shape[1] for m, _ in maps}
    if len(chans) != 1:
        raise ShapeMismatchError(f"attention streams disagree on channel count: {sorted(chans)}")
    vecs = [stream_attention(params, m.mean(dim=(2, 3))) for m, _ in maps]
    a = (vecs[0] + vecs[1] + vecs[2]) / 3.0
    return a[0] if maps[0][1] else a


def fuse(params: Adapter, phi_prev, phi_hat, attention, phi_init, residual: bool = True) -> torch.Tensor:
    """``eta([phi_prev ; A * phi_hat])`` squashed by tanh, optionally added to ``phi_init``."""
    prev, single = _batched(phi_prev)
    hat, _ = _batched(phi_hat)
    init, _ = _batched(phi_init)
    if not (prev.shape == hat.shape == init.shape):
        raise ShapeMismatchError(
            f"fuse needs equal shapes, got {tuple(prev.shape)}, {tuple(hat.shape)}, {tuple(init.shape)}"
        )
    a = attention if attention.ndim == 2 else attention[None]
    if a.shape[-1] != prev.shape[1]:
        raise ShapeMismatchError(f"attention length {a.shape[-1]} != channels {prev.shape[1]}")
    concat = torch.cat([prev, a[:, :, None, None] * hat], dim=1)
    r = torch.tanh(params.eta(concat))
    out = init + r if residual else r
    return out[0] if single else out


def moving_average(phi_prev: torch.Tensor, phi_new: torch.Tensor, gamma: float) -> torch.Tensor:
    if phi_prev.shape != phi_new.shape:
        raise ShapeMismatchError(f"shape mismatch {tuple(phi_prev.shape)} vs {tuple(phi_new.shape)}")
    if gamma == 0.0:
        return phi_prev.clone()
    if gamma == 1.0:
        return phi_new.clone()
    return (1.0 - gamma) * phi_prev + gamma * phi_new


def average_template(phi_init: torch.Tensor, phi_prev: torch.Tensor) -> torch.Tensor:
    return moving_average(phi_init, phi_prev, 0.5)


def _flat_dist(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    d = a - b
    d = d.flatten(1) if d.ndim == 4 else d.reshape(1, -1)
    return torch.linalg.vector_norm(d, dim=1)


def adaptation_loss(phi_gt, phi_tilde, phi_avg, lam: float = 10.0) -> torch.Tensor:
    """Mean-squared error plus ``lam * relu(D(gt, tilde) - D(gt, avg))``, averaged over the batch."""
    phi_gt, phi_tilde, phi_avg = (torch.as_tensor(x, dtype=torch.float64) if not torch.is_tensor(x) else x
                                  for x in (phi_gt, phi_tilde, phi_avg))
    diff = phi_gt - phi_tilde
    if diff.ndim == 4:
        mse = (diff ** 2).flatten(1).mean(1)
    else:
        mse = (diff ** 2).mean().reshape(1)
    loss = mse
    if lam != 0:
        slack = _flat_dist(phi_gt, phi_tilde) - _flat_dist(phi_gt, phi_avg)
        loss = mse + lam * F.relu(slack)
    return loss.mean()


def constraint_satisfied(phi_gt, phi_tilde, phi_avg) -> torch.Tensor:
    return _flat_dist(phi_gt, phi_tilde) <= _flat_dist(phi_gt, phi_avg)


# ---------------------------------------------------------------- training samples


@dataclass
class AdaptSamples:
    """Stacked training samples. ``z_pooled`` holds the globally pooled search features,
    which is all the attention head reads from the search stream."""

    phi_init: torch.Tensor
    phi_hat: torch.Tensor
    z_pooled: torch.Tensor
    phi_prev: torch.Tensor
    phi_gt: torch.Tensor

    def __len__(self):
        return self.phi_init.shape[0]

    def subset(self, idx) -> "AdaptSamples":
        return AdaptSamples(*(getattr(self, f)[idx] for f in ("phi_init", "phi_hat", "z_pooled", "phi_prev", "phi_gt")))

    @property
    def phi_avg(self) -> torch.Tensor:
        return average_template(self.phi_init, self.phi_prev)


def build_samples(sequences: dict, backbone, generator, *, per_sequence: int, seed: int, context: float = 2.0,
                  template_side: int = 64, search_side: int = 128, alpha: float = 0.5,
                  jitter: float = 1.5) -> AdaptSamples:
    """Chronological samples: an earlier frame gives phi_init, frames t-k..t-1 feed the generator,
    frame t gives the ground-truth template features."""
    from .generator import generate_batch, jittered_box
    from .imaging import blend, crop_and_resize, to_real

    rng = np.random.default_rng(seed)
    k = generator.k
    inits, clips, lasts, prevs, gts, searches = [], [], [], [], [], []
    for name in sorted(sequences):
        frames, anns = sequences[name]
        n = len(frames)
        if n < k + 2:
            continue
        ts = rng.choice(np.arange(k + 1, n), size=min(per_sequence, n - k - 1), replace=False)
        for t in sorted(int(v) for v in ts):
            s = int(rng.integers(0, t - k))
            crop = lambda i, box=None: crop_and_resize(frames[i], box or anns[i].gt_box, context, template_side)
            inits.append(crop(s))
            clip = [crop(i, jittered_box(anns[i].gt_box, rng, jitter)) for i in range(t - k, t)]
            clips.append(clip)
            lasts.append(clip[-1])
            prevs.append(crop(t - 1))
            gts.append(crop(t))
            prev_box = jittered_box(anns[t - 1].gt_box, rng, jitter)
            searches.append(crop_and_resize(frames[t], prev_box, context * search_side / template_side, search_side))
    if not inits:
        raise InsufficientDataError("no sequence is long enough to build adaptation samples")
    preds = generate_batch(generator, clips)
    hats = [blend(p, last, alpha) for p, last in zip(preds, lasts)]

    def feats(images, batch=128):
        out = []
        with torch.no_grad():
            for i in range(0, len(images), batch):
                x = torch.from_numpy(np.stack([to_real(im) for im in images[i : i + batch]]))[:, None]
                out.append(backbone(x))
        return torch.cat(out)

    z = feats(searches).mean(dim=(2, 3))
    return AdaptSamples(feats(inits), feats(hats), z, feats(prevs), feats(gts))


# ---------------------------------------------------------------- training


@dataclass
class AdapterConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    lam: float = 10.0
    residual: bool = False
    min_samples: int = 10
    samples_per_sequence: int = 40
    seed: int = 0


def predict(params: Adapter, samples: AdaptSamples, residual: bool) -> torch.Tensor:
    a = (stream_attention(params, samples.z_pooled)
         + stream_attention(params, samples.phi_init.mean(dim=(2, 3)))
         + stream_attention(params, samples.phi_hat.mean(dim=(2, 3)))) / 3.0
    return fuse(params, samples.phi_prev, samples.phi_hat, a, samples.phi_init, residual)


def constraint_rate(params: Adapter, samples: AdaptSamples, residual: bool) -> float:
    with torch.no_grad():
        tilde = predict(params, samples, residual)
        return float(constraint_satisfied(samples.phi_gt, tilde, samples.phi_avg).double().mean())


def train_adapter(samples: AdaptSamples, cfg: AdapterConfig, val: AdaptSamples | None = None,
                  log_path: str | Path | None = None, adapter: Adapter | None = None):
    """Minimise the constrained loss with backbone and generator frozen (samples are precomputed)."""
    if len(samples) < cfg.min_samples:
        raise InsufficientDataError(f"need >= {cfg.min_samples} adaptation samples, got {len(samples)}")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    net = adapter if adapter is not None else init_adapter(samples.phi_init.shape[1], cfg.seed)
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    avg = samples.phi_avg
    records = []
    fh = open(log_path, "w", encoding="utf-8", newline="\n") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(samples))
            total, batches = 0.0, 0
            for i in range(0, len(order), cfg.batch_size):
                idx = torch.from_numpy(order[i : i + cfg.batch_size])
                batch = samples.subset(idx)
                loss = adaptation_loss(batch.phi_gt, predict(net, batch, cfg.residual), avg[idx], cfg.lam)
                if not torch.isfinite(loss):
                    raise DivergenceError(f"adapter loss became non-finite at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach())
                batches += 1
            rec = {
                "epoch": epoch,
                "loss": total / batches,
                "constraint_rate": constraint_rate(net, val if val is not None else samples, cfg.residual),
            }
            records.append(rec)
            log.info("adapter epoch %d loss %.6f rate %.3f", epoch, rec["loss"], rec["constraint_rate"])
            if fh:
                fh.write(json.dumps(rec) + "\n")
    finally:
        if fh:
            fh.close()
    return net.eval(), records
