"""Raster image and bounding-box primitives.

Images are numpy ``uint8`` arrays shaped ``(H, W)`` (grayscale) or
``(H, W, 3)``. Real images are ``float32`` arrays in ``[0, 1]`` of the same
shape. Boxes use pixel-edge coordinates: pixel ``(r, c)`` covers
``[c, c+1) x [r, r+1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidBoxError, ShapeMismatchError


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidBoxError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"box must have positive size, got w={self.w}, h={self.h}")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.w), float(self.h)]

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    def clipped(self, width: int, height: int) -> "BBox":
        """Shift the box inside ``[0, width] x [0, height]``, shrinking only if it is larger than the frame."""
        w = min(self.w, float(width))
        h = min(self.h, float(height))
        x = min(max(self.x, 0.0), width - w)
        y = min(max(self.y, 0.0), height - h)
        return BBox(x, y, w, h)


def validate_image(img: np.ndarray) -> None:
    if img.dtype != np.uint8:
        raise TypeError(f"expected uint8 image, got {img.dtype}")
    if img.ndim not in (2, 3) or img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeMismatchError(f"bad image shape {img.shape}")
    if img.ndim == 3 and img.shape[2] not in (1, 3):
        raise ShapeMismatchError(f"image must have 1 or 3 channels, got {img.shape[2]}")


def to_real(img: np.ndarray) -> np.ndarray:
    validate_image(img)
    return img.astype(np.float32) / np.float32(255.0)


def to_uint8(real: np.ndarray) -> np.ndarray:
    """Quantize a ``[0, 1]`` image back to ``uint8`` (round half up)."""
    return np.clip(np.floor(np.asarray(real, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _bilinear(src: np.ndarray, ys: np.ndarray, xs: np.ndarray, fill: np.ndarray) -> np.ndarray:
    """Sample ``src`` (H, W, C) at pixel-centre coordinates; taps outside the image read ``fill``."""
    H, W = src.shape[:2]
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    def tap(yi, xi):
        yy = yi[:, None]
        xx = xi[None, :]
        inside = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
        vals = src[np.clip(yy, 0, H - 1), np.clip(xx, 0, W - 1)]
        return np.where(inside[..., None], vals, fill)

    top = tap(y0, x0) * (1 - wx) + tap(y0, x0 + 1) * wx
    bot = tap(y0 + 1, x0) * (1 - wx) + tap(y0 + 1, x0 + 1) * wx
    return top * (1 - wy) + bot * wy


def crop_and_resize(frame: np.ndarray, box: BBox, context: float, out_side: int) -> np.ndarray:
    """Square crop of side ``context * max(w, h)`` centred on ``box``, resized to ``out_side``.

    Out-of-frame area is filled with the frame's per-channel mean intensity.
    Resampling is bilinear with the align-corners-false convention: output
    pixel ``j`` samples source coordinate ``left + (j + 0.5) * side / out_side - 0.5``.
    """
    validate_image(frame)
    if not isinstance(box, BBox):
        box = BBox(*box)
    if out_side < 4:
        raise ValueError(f"out_side must be >= 4, got {out_side}")
    if context < 1.0:
        raise ValueError(f"context must be >= 1.0, got {context}")

    src = frame.astype(np.float64)
    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    fill = src.reshape(-1, src.shape[2]).mean(axis=0)

    side = context * max(box.w, box.h)
    cx, cy = box.center
    step = side / out_side
    grid = (np.arange(out_side) + 0.5) * step - 0.5
    xs = cx - side / 2.0 + grid
    ys = cy - side / 2.0 + grid
    out = _bilinear(src, ys, xs, fill)
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out[:, :, 0] if squeeze else out


def iou(a: BBox, b: BBox) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    # clamp: (x + w) - x need not equal w in floating point
    return float(min(1.0, inter / union)) if union > 0 else 0.0


def blend(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """Per-pixel ``alpha * a + (1 - alpha) * b`` rounded to the nearest integer (half up)."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"cannot blend {a.shape} with {b.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 1.0:
        return a.copy()
    if alpha == 0.0:
        return b.copy()
    mixed = alpha * a.astype(np.float64) + (1.0 - alpha) * b.astype(np.float64)
    return np.clip(np.floor(mixed + 0.5), 0, 255).astype(np.uint8)
