"""Future-template generator (conv encoder, ConvLSTM, transposed-conv decoder) and its discriminator."""

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
from .imaging import BBox, crop_and_resize, to_uint8

log = logging.getLogger(__name__)


class ConvLSTMCell(nn.Module):
    def __init__(self, in_ch: int, hidden: int, kernel: int = 3):
        super().__init__()
        self.hidden = hidden
        self.gates = nn.Conv2d(in_ch + hidden, 4 * hidden, kernel, padding=kernel // 2)

    def forward(self, x, state):
        h, c = state
        i, f, o, g = torch.chunk(self.gates(torch.cat([x, h], dim=1)), 4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c


class TemplateGenerator(nn.Module):
    """Maps a clip (B, k, 1, S, S) in [0, 1] to the predicted next template (B, 1, S, S)."""

    def __init__(self, k: int = 4, hidden: int = 64):
        super().__init__()
        self.k = k
        self.encoder = nn.Sequential(
            nn.Conv2d(1, 16, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(16, 32, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(32, 64, 4, 2, 1), nn.LeakyReLU(0.2),
        )
        self.cell = ConvLSTMCell(64, hidden)
        self.decoder = nn.Sequential(
            nn.ConvTranspose2d(hidden, 32, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.ConvTranspose2d(32, 16, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.ConvTranspose2d(16, 1, 4, 2, 1), nn.Sigmoid(),
        )

    def forward(self, clip: torch.Tensor) -> torch.Tensor:
        b, k = clip.shape[:2]
        if k != self.k:
            raise ShapeMismatchError(f"generator expects clips of {self.k} templates, got {k}")
        codes = self.encoder(clip.reshape(b * k, *clip.shape[2:]))
        codes = codes.reshape(b, k, *codes.shape[1:])
        h = codes.new_zeros(b, self.cell.hidden, *codes.shape[-2:])
        c = torch.zeros_like(h)
        for step in range(k):
            h, c = self.cell(codes[:, step], (h, c))
        return self.decoder(h)


class Discriminator(nn.Module):
    def __init__(self, side: int = 64):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(1, 16, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(16, 32, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(32, 64, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(64, 64, 4, 2, 1), nn.LeakyReLU(0.2),
        )
        self.head = nn.Linear(64 * (side // 16) ** 2, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.head(self.features(x).flatten(1)))[:, 0]


def init_generator(k: int = 4, seed: int = 0) -> TemplateGenerator:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return TemplateGenerator(k).eval()


def init_discriminator(seed: int = 0, side: int = 64) -> Discriminator:
    with torch.random.fork_rng():
        torch.manual_seed(seed + 1)
        return Discriminator(side).eval()


# ---------------------------------------------------------------- inference


def _clip_tensor(clips) -> torch.Tensor:
    arr = np.stack([np.stack(c) for c in clips]).astype(np.float32) / 255.0
    return torch.from_numpy(arr)[:, :, None]


def generate_next(params: TemplateGenerator, clip) -> np.ndarray:
    """Predict the next template (uint8) from ``k`` chronological uint8 templates."""
    if len(clip) != params.k:
        raise ShapeMismatchError(f"clip must hold exactly {params.k} templates, got {len(clip)}")
    shape = clip[0].shape
    if any(t.shape != shape for t in clip) or len(shape) != 2:
        raise ShapeMismatchError("clip templates must share one grayscale shape")
    return generate_batch(params, [clip])[0]


def generate_batch(params: TemplateGenerator, clips, batch_size: int = 64) -> list[np.ndarray]:
    out = []
    with torch.no_grad():
        for i in range(0, len(clips), batch_size):
            pred = params(_clip_tensor(clips[i : i + batch_size]))
            out.extend(to_uint8(p[0].numpy()) for p in pred)
    return out


# ---------------------------------------------------------------- losses


def reconstruction_error(truth: np.ndarray, pred: np.ndarray) -> float:
    """Mean squared pixel error on the [0, 1] scale."""
    if truth.shape != pred.shape:
        raise ShapeMismatchError(f"shape mismatch {truth.shape} vs {pred.shape}")
    a = truth.astype(np.float64) / 255.0
    b = pred.astype(np.float64) / 255.0
    return float(np.mean((a - b) ** 2))


def discriminator_loss(d_real, d_fake):
    """Least-squares discriminator loss ``1/2 (D(T) - 1)^2 + 1/2 (D(T_hat) - 0)^2``."""
    return 0.5 * (d_real - 1.0) ** 2 + 0.5 * (d_fake - 0.0) ** 2


def generator_loss(truth, pred, d_fake, adv_weight: float = 0.05):
    """Pixel MSE plus the least-squares adversarial term ``adv_weight * 1/2 (D(T_hat) - 1)^2``.

    ``truth``/``pred`` may be uint8 images or float tensors already on the [0, 1] scale.
    """
    if isinstance(truth, np.ndarray) and truth.dtype == np.uint8:
        mse = reconstruction_error(truth, pred)
    else:
        if truth.shape != pred.shape:
            raise ShapeMismatchError(f"shape mismatch {tuple(truth.shape)} vs {tuple(pred.shape)}")
        mse = ((truth - pred) ** 2).mean()
    return mse + adv_weight * 0.5 * (d_fake - 1.0) ** 2


# ---------------------------------------------------------------- data


def jittered_box(box: BBox, rng: np.random.Generator, sigma: float) -> BBox:
    if sigma <= 0:
        return box
    dx, dy = rng.normal(0.0, sigma, 2)
    return box.translated(float(dx), float(dy))


def build_clips(sequences: dict, k: int, per_sequence: int, seed: int, context: float = 2.0,
                side: int = 64, jitter: float = 1.5, target_jitter: float = 0.0) -> list[list[np.ndarray]]:
    """Clips of ``k`` jittered input templates plus one target template.

    Input crops are offset by Gaussian jitter (mimicking tracker localisation noise).
    The target sits exactly on the ground-truth box unless ``target_jitter`` is set,
    which is how calibration clips imitate a tracker-output crop.
    """
    rng = np.random.default_rng(seed)
    clips = []
    for name in sorted(sequences):
        frames, anns = sequences[name]
        n = len(frames)
        if n < k + 1:
            continue
        starts = rng.choice(n - k, size=min(per_sequence, n - k), replace=False)
        for s in sorted(int(v) for v in starts):
            clip = [crop_and_resize(frames[s + i], jittered_box(anns[s + i].gt_box, rng, jitter), context, side)
                    for i in range(k)]
            target = jittered_box(anns[s + k].gt_box, rng, target_jitter)
            clip.append(crop_and_resize(frames[s + k], target, context, side))
            clips.append(clip)
    return clips


def clips_to_tensors(clips) -> tuple[torch.Tensor, torch.Tensor]:
    arr = torch.from_numpy(np.stack([np.stack(c) for c in clips]).astype(np.float32) / 255.0)[:, :, None]
    return arr[:, :-1], arr[:, -1]


# ---------------------------------------------------------------- training


@dataclass
class GeneratorConfig:
    k: int = 4
    epochs: int = 12
    batch_size: int = 16
    lr_g: float = 1e-3
    lr_d: float = 2e-4
    adv_weight: float = 0.05
    min_clips: int = 10
    clips_per_sequence: int = 40
    jitter: float = 1.5
    seed: int = 0


def validation_mse(gen: TemplateGenerator, inputs: torch.Tensor, targets: torch.Tensor) -> float:
    with torch.no_grad():
        errs = []
        for i in range(0, len(inputs), 64):
            errs.append(((gen(inputs[i : i + 64]) - targets[i : i + 64]) ** 2).flatten(1).mean(1))
        return float(torch.cat(errs).mean())


def train_generator(train_clips, cfg: GeneratorConfig, val_clips=None, log_path: str | Path | None = None,
                    generator: TemplateGenerator | None = None, discriminator: Discriminator | None = None):
    """Alternate one discriminator step and one generator step per batch for ``cfg.epochs`` passes."""
    if len(train_clips) < cfg.min_clips:
        raise InsufficientDataError(f"need >= {cfg.min_clips} clips of {cfg.k + 1} templates, got {len(train_clips)}")
    if any(len(c) != cfg.k + 1 for c in train_clips):
        raise ShapeMismatchError(f"every clip must hold k+1={cfg.k + 1} templates")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    gen = generator if generator is not None else init_generator(cfg.k, cfg.seed)
    disc = discriminator if discriminator is not None else init_discriminator(cfg.seed, train_clips[0][0].shape[0])
    gen.train()
    disc.train()
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_g)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr_d)
    inputs, targets = clips_to_tensors(train_clips)
    val = clips_to_tensors(val_clips) if val_clips else None

    records = []
    fh = open(log_path, "w", encoding="utf-8", newline="\n") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(inputs))
            d_total = g_total = 0.0
            batches = 0
            for i in range(0, len(order), cfg.batch_size):
                idx = torch.from_numpy(order[i : i + cfg.batch_size])
                x, y = inputs[idx], targets[idx]

                fake = gen(x)
                d_loss = discriminator_loss(disc(y), disc(fake.detach())).mean()
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()

                g_loss = generator_loss(y, fake, disc(fake), cfg.adv_weight).mean()
                opt_g.zero_grad()
                g_loss.backward()
                opt_g.step()

                if not (torch.isfinite(d_loss) and torch.isfinite(g_loss)):
                    raise DivergenceError(
                        f"generator training diverged at epoch {epoch}: "
                        f"d_loss={float(d_loss.detach())}, g_loss={float(g_loss.detach())}"
                    )
                d_total += float(d_loss.detach())
                g_total += float(g_loss.detach())
                batches += 1
            gen.eval()
            rec = {
                "epoch": epoch,
                "d_loss": d_total / batches,
                "g_loss": g_total / batches,
                "val_mse": validation_mse(gen, *val) if val else None,
            }
            gen.train()
            records.append(rec)
            log.info("generator epoch %d d=%.5f g=%.5f val=%s", epoch, rec["d_loss"], rec["g_loss"], rec["val_mse"])
            if fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
    finally:
        if fh:
            fh.close()
    return gen.eval(), disc.eval(), records
