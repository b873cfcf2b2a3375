"""Feature extraction and cross-correlation matching.

The backbone is a three-layer convolutional stack (1->16->32->32 channels,
3x3 kernels, strides 2, 2, 1, tanh after every layer). The first two layers
use valid padding and the last pads by one, so a 64px template maps to
15x15 cells and a 128px search crop to 31x31 cells; their correlation is a
17x17 score map.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DivergenceError, ImageTooSmallError, InsufficientDataError, ShapeMismatchError
from .imaging import BBox, crop_and_resize, to_real

log = logging.getLogger(__name__)

FeatureMap = torch.Tensor  # (C, H, W)


class Backbone(nn.Module):
    channels = (1, 16, 32, 32)
    strides = (2, 2, 1)
    paddings = (0, 0, 1)
    stride = 4

    def __init__(self):
        super().__init__()
        c = self.channels
        self.convs = nn.ModuleList(
            nn.Conv2d(c[i], c[i + 1], 3, stride=self.strides[i], padding=self.paddings[i]) for i in range(3)
        )
        # scalar matcher bias b
        self.bias = nn.Parameter(torch.zeros(()))
        assert math.prod(self.strides) == self.stride

    @property
    def out_channels(self) -> int:
        return self.channels[-1]

    @property
    def receptive_field(self) -> int:
        rf, jump = 1, 1
        for s in self.strides:
            rf += 2 * jump
            jump *= s
        return rf

    def output_side(self, side: int) -> int:
        for s, p in zip(self.strides, self.paddings):
            side = (side + 2 * p - 3) // s + 1
        return side

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = torch.tanh(conv(x))
        return x


def init_backbone(seed: int = 0) -> Backbone:
    gen = torch.Generator().manual_seed(seed)
    net = Backbone()
    with torch.no_grad():
        for conv in net.convs:
            fan_in = conv.in_channels * 9
            conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * math.sqrt(1.0 / fan_in))
            conv.bias.zero_()
        net.bias.zero_()
    return net.eval()


def _as_batch(img) -> torch.Tensor:
    if isinstance(img, np.ndarray):
        arr = to_real(img) if img.dtype == np.uint8 else np.asarray(img, dtype=np.float32)
        t = torch.from_numpy(np.ascontiguousarray(arr))
    else:
        t = img
    if t.ndim == 2:
        t = t[None, None]
    elif t.ndim == 3:
        t = t[None]
    return t


def extract_features(params: Backbone, img) -> FeatureMap:
    """Forward one image (uint8 Image, float RealImage, or tensor) to a (C, H, W) feature map."""
    x = _as_batch(img)
    side = min(x.shape[-2:])
    if side < params.receptive_field:
        raise ImageTooSmallError(f"image side {side} below minimum side {params.receptive_field}")
    with torch.no_grad():
        return params(x.to(next(params.parameters()).dtype))[0]


def cross_correlate(template: FeatureMap, search: FeatureMap, bias=0.0) -> torch.Tensor:
    """Valid cross-correlation with the template as kernel: ``sum t(c,u,v) s(c,i+u,j+v) + bias``."""
    if template.ndim != 3 or search.ndim != 3:
        raise ShapeMismatchError("feature maps must be (C, H, W)")
    if template.shape[0] != search.shape[0]:
        raise ShapeMismatchError(f"channel mismatch: template {template.shape[0]} vs search {search.shape[0]}")
    if template.shape[1] > search.shape[1] or template.shape[2] > search.shape[2]:
        raise ShapeMismatchError(f"template {tuple(template.shape)} larger than search {tuple(search.shape)}")
    return F.conv2d(search[None], template[None])[0, 0] + bias


def batch_cross_correlate(templates: torch.Tensor, searches: torch.Tensor) -> torch.Tensor:
    """Pairwise correlation of (B, C, h, w) templates with (B, C, H, W) searches -> (B, H', W')."""
    b, c = searches.shape[:2]
    out = F.conv2d(searches.reshape(1, b * c, *searches.shape[2:]), templates, groups=b)
    return out[0]


def peak_offset(score: torch.Tensor) -> tuple[float, float]:
    """(row, col) offset of the maximum from the map centre; ties go to the first row-major index."""
    flat = score.reshape(-1)
    idx = int(torch.nonzero(flat == flat.max())[0])
    h, w = score.shape
    r, c = divmod(idx, w)
    return r - (h - 1) / 2.0, c - (w - 1) / 2.0


def argmax_to_bbox(score: torch.Tensor, prev: BBox, stride: float, scale: float) -> BBox:
    """Translate ``prev`` by the peak displacement; ``scale`` is image pixels per search-crop pixel."""
    dr, dc = peak_offset(score)
    return prev.translated(dc * stride * scale, dr * stride * scale)


# ---------------------------------------------------------------- matcher training


@dataclass
class MatcherConfig:
    epochs: int = 6
    pairs_per_epoch: int = 2048
    batch_size: int = 32
    lr: float = 3e-3
    max_gap: int = 8
    max_shift: float = 0.35
    positive_radius: float = 1.0
    response_scale: float = 0.02
    context: float = 2.0
    template_side: int = 64
    search_side: int = 128
    seed: int = 0


def _pair_sampler(sequences, cfg: MatcherConfig, rng: np.random.Generator):
    names = sorted(sequences)
    while True:
        frames, anns = sequences[names[int(rng.integers(len(names)))]]
        n = len(frames)
        i = int(rng.integers(n))
        j = int(np.clip(i + rng.integers(-cfg.max_gap, cfg.max_gap + 1), 0, n - 1))
        zbox = anns[i].gt_box
        xbox = anns[j].gt_box
        crop_side = cfg.context * max(xbox.w, xbox.h)
        shift = rng.uniform(-cfg.max_shift, cfg.max_shift, 2) * crop_side
        cx, cy = xbox.center
        center_box = BBox.from_center(cx - shift[0], cy - shift[1], xbox.w, xbox.h)
        z = crop_and_resize(frames[i], zbox, cfg.context, cfg.template_side)
        x = crop_and_resize(frames[j], center_box, cfg.context * cfg.search_side / cfg.template_side, cfg.search_side)
        # target displacement in score-map cells
        search_crop = cfg.context * max(xbox.w, xbox.h) * cfg.search_side / cfg.template_side
        cells = shift / (search_crop / cfg.search_side) / Backbone.stride
        yield z, x, cells


def train_matcher(sequences: dict, cfg: MatcherConfig | None = None, log_path: str | Path | None = None) -> Backbone:
    """Train backbone and bias with a logistic loss on positive/negative score-map cells."""
    cfg = cfg or MatcherConfig()
    if not sequences:
        raise InsufficientDataError("no sequences to train the matcher on")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    net = init_backbone(cfg.seed).train()
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    sampler = _pair_sampler(sequences, cfg, rng)
    size = net.output_side(cfg.search_side) - net.output_side(cfg.template_side) + 1
    ctr = (size - 1) / 2.0
    grid_r, grid_c = np.mgrid[0:size, 0:size]
    logs = []
    for epoch in range(cfg.epochs):
        total = 0.0
        steps = cfg.pairs_per_epoch // cfg.batch_size
        for _ in range(steps):
            zs, xs, labels = [], [], []
            for _ in range(cfg.batch_size):
                z, x, (dc, dr) = next(sampler)
                zs.append(to_real(z))
                xs.append(to_real(x))
                dist = np.hypot(grid_r - (ctr + dr), grid_c - (ctr + dc))
                labels.append((dist <= cfg.positive_radius).astype(np.float32))
            z = torch.from_numpy(np.stack(zs))[:, None]
            x = torch.from_numpy(np.stack(xs))[:, None]
            y = torch.from_numpy(np.stack(labels))
            score = cfg.response_scale * (batch_cross_correlate(net(z), net(x)) + net.bias)
            pos = y.sum().clamp(min=1)
            neg = (1 - y).sum()
            weight = y / pos + (1 - y) / neg
            loss = F.binary_cross_entropy_with_logits(score, y, weight=weight, reduction="sum") / cfg.batch_size
            if not torch.isfinite(loss):
                raise DivergenceError(f"matcher loss became non-finite at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach())
        logs.append({"epoch": epoch, "loss": total / steps})
        log.info("matcher epoch %d loss %.5f", epoch, total / steps)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in logs:
                fh.write(json.dumps(rec) + "\n")
    return net.eval()


def matcher_config_dict(cfg: MatcherConfig) -> dict:
    return asdict(cfg)
