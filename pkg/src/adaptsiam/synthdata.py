"""Deterministic synthetic tracking sequences and their on-disk format.

Every random draw comes from numpy's PCG64 generator seeded through a
``SeedSequence`` built from ``(spec.seed, entity-id, ...)``, so each scene
entity (background, target motion, each distractor, each occluder, per-frame
sensor noise) owns an independent substream and frames are a pure function
of the :class:`SequenceSpec`.

Dataset layout::

    <dataset>/<seq-name>/frame_000000.pnm ...   binary PGM (P5) / PPM (P6)
    <dataset>/<seq-name>/annotations.jsonl      one Annotation per line
    <dataset>/<seq-name>/spec.json              the SequenceSpec used
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError
from .imaging import BBox

SHAPES = ("ellipse", "rectangle", "blob")

# entity ids for substream derivation
_BACKGROUND, _MOTION, _DISTRACTOR, _OCCLUDER, _NOISE, _TEXTURE = 1, 2, 3, 4, 5, 6


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


@dataclass
class SequenceSpec:
    name: str
    length: int
    frame_side: int = 96
    shape: str = "ellipse"
    size: tuple[float, float] = (20.0, 20.0)
    texture_seed: int = 0
    start: tuple[float, float] | None = None
    velocity: tuple[float, float] = (0.0, 0.0)
    # (frame, vx, vy): velocity switches to (vx, vy) at that frame
    turns: list[tuple[int, float, float]] = field(default_factory=list)
    # appearance keyframes traversed per frame
    drift_rate: float = 0.0
    # (start_frame, end_frame exclusive, coverage fraction of the target box)
    occlusions: list[tuple[int, int, float]] = field(default_factory=list)
    clutter_count: int = 0
    clutter_contrast: float = 0.5
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.size = tuple(float(v) for v in self.size)
        self.velocity = tuple(float(v) for v in self.velocity)
        if self.start is not None:
            self.start = tuple(float(v) for v in self.start)
        self.turns = [(int(f), float(vx), float(vy)) for f, vx, vy in self.turns]
        self.occlusions = [(int(s), int(e), float(c)) for s, e, c in self.occlusions]
        self.validate()

    def validate(self) -> None:
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        w, h = self.size
        if not (0 < w < self.frame_side and 0 < h < self.frame_side):
            raise ValueError(f"target size {self.size} does not fit a {self.frame_side}px frame")
        for s, e, c in self.occlusions:
            if not (0 <= s < e <= self.length):
                raise ValueError(f"occlusion interval [{s},{e}) outside [0,{self.length})")
            if not 0 < c <= 1:
                raise ValueError(f"occlusion coverage must be in (0, 1], got {c}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceSpec":
        return cls(**d)


@dataclass(frozen=True)
class Annotation:
    frame_index: int
    gt_box: BBox
    occluded: bool
    drift_event: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "frame_index": self.frame_index,
                "gt_box": [float(v) for v in self.gt_box.as_list()],
                "occluded": self.occluded,
                "drift_event": self.drift_event,
            }
        )


# ---------------------------------------------------------------- rendering


@dataclass
class _Texture:
    base: float
    freqs: np.ndarray
    angles: np.ndarray
    amps: np.ndarray
    phases: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, n_gratings: int = 3) -> "_Texture":
        return cls(
            base=float(rng.uniform(30.0, 225.0)),
            freqs=rng.uniform(0.5, 2.0, n_gratings),
            angles=rng.uniform(0.0, math.pi, n_gratings),
            amps=rng.uniform(15.0, 45.0, n_gratings),
            phases=rng.uniform(0.0, 2 * math.pi, n_gratings),
        )

    def render(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.full(u.shape, self.base)
        for f, a, amp, ph in zip(self.freqs, self.angles, self.amps, self.phases):
            out += amp * np.sin(2 * math.pi * f * (u * math.cos(a) + v * math.sin(a)) + ph)
        return out


def _shape_mask(kind: str, du: np.ndarray, dv: np.ndarray, half_w: float, half_h: float, harmonics) -> np.ndarray:
    """Anti-aliased coverage in [0, 1]; ``du, dv`` are offsets normalised by the half extents."""
    scale = min(half_w, half_h)
    if kind == "rectangle":
        inner = np.minimum((1 - np.abs(du)) * half_w, (1 - np.abs(dv)) * half_h)
        return np.clip(inner + 0.5, 0.0, 1.0)
    rho = np.hypot(du, dv)
    if kind == "blob":
        theta = np.arctan2(dv, du)
        r = np.full(du.shape, 0.82)
        for k, (amp, ph) in enumerate(harmonics, start=2):
            r += amp * np.cos(k * theta + ph)
        rho = rho / np.minimum(r, 1.0)
    return np.clip((1 - rho) * scale + 0.5, 0.0, 1.0)


class _Sprite:
    """A textured shape with its own (possibly morphing) appearance."""

    def __init__(self, kind, w, h, textures, rate, harmonics):
        self.kind, self.w, self.h = kind, w, h
        self.textures = textures
        self.rate = rate
        self.harmonics = harmonics

    def phase(self, t: int) -> tuple[int, float]:
        u = self.rate * t
        i = int(math.floor(u))
        return i, u - i

    def draw(self, canvas, xs, ys, cx, cy, t, contrast=1.0, ref=0.0):
        hw, hh = self.w / 2.0, self.h / 2.0
        x0, x1 = max(int(math.floor(cx - hw)) - 1, 0), min(int(math.ceil(cx + hw)) + 1, canvas.shape[1])
        y0, y1 = max(int(math.floor(cy - hh)) - 1, 0), min(int(math.ceil(cy + hh)) + 1, canvas.shape[0])
        if x0 >= x1 or y0 >= y1:
            return
        du = (xs[x0:x1][None, :] - cx) / hw
        dv = (ys[y0:y1][:, None] - cy) / hh
        du, dv = np.broadcast_arrays(du, dv)
        mask = _shape_mask(self.kind, du, dv, hw, hh, self.harmonics)
        i, lam = self.phase(t)
        n = len(self.textures)
        tex = self.textures[i % n].render(du, dv)
        if lam > 0:
            tex = (1 - lam) * tex + lam * self.textures[(i + 1) % n].render(du, dv)
        tex = ref + contrast * (tex - ref)
        region = canvas[y0:y1, x0:x1]
        canvas[y0:y1, x0:x1] = region * (1 - mask) + tex * mask


def _background(spec: SequenceSpec) -> np.ndarray:
    rng = _rng(spec.seed, _BACKGROUND)
    side = spec.frame_side
    coarse = rng.uniform(85.0, 165.0, (5, 5))
    grid = np.linspace(0, 4, side)
    i0 = np.clip(np.floor(grid).astype(int), 0, 3)
    f = grid - i0
    rows = coarse[i0] * (1 - f)[:, None] + coarse[i0 + 1] * f[:, None]
    bg = rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]
    fine = rng.normal(0.0, 6.0, (side, side))
    return bg + fine


def _trajectory(spec: SequenceSpec) -> np.ndarray:
    """Target centres per frame, reflected at the frame borders."""
    rng = _rng(spec.seed, _MOTION)
    w, h = spec.size
    side = spec.frame_side
    lo = np.array([w / 2.0, h / 2.0])
    hi = np.array([side - w / 2.0, side - h / 2.0])
    if spec.start is None:
        pos = rng.uniform(lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo))
    else:
        pos = np.array(spec.start, dtype=float)
    vel = np.array(spec.velocity, dtype=float)
    turns = {f: (vx, vy) for f, vx, vy in spec.turns}
    out = np.zeros((spec.length, 2))
    for t in range(spec.length):
        if t in turns:
            vel = np.array(turns[t], dtype=float)
        if t > 0:
            pos = pos + vel
            for d in range(2):
                if pos[d] < lo[d]:
                    pos[d] = 2 * lo[d] - pos[d]
                    vel[d] = -vel[d]
                elif pos[d] > hi[d]:
                    pos[d] = 2 * hi[d] - pos[d]
                    vel[d] = -vel[d]
                pos[d] = min(max(pos[d], lo[d]), hi[d])
        out[t] = pos
    return out


def _harmonics(rng) -> list[tuple[float, float]]:
    return [(float(rng.uniform(0.02, 0.08)), float(rng.uniform(0, 2 * math.pi))) for _ in range(3)]


def _target_sprite(spec: SequenceSpec) -> _Sprite:
    rng = _rng(spec.texture_seed, _TEXTURE)
    n_keys = max(2, int(math.ceil(spec.drift_rate * spec.length)) + 2)
    textures = [_Texture.draw(rng) for _ in range(n_keys)]
    return _Sprite(spec.shape, spec.size[0], spec.size[1], textures, spec.drift_rate, _harmonics(rng))


class _Distractor:
    def __init__(self, spec: SequenceSpec, index: int):
        rng = _rng(spec.seed, _DISTRACTOR, index)
        scale = rng.uniform(0.7, 1.2)
        w, h = spec.size[0] * scale, spec.size[1] * scale
        kind = SHAPES[int(rng.integers(len(SHAPES)))]
        self.sprite = _Sprite(kind, w, h, [_Texture.draw(rng)], 0.0, _harmonics(rng))
        side = spec.frame_side
        self.lo = np.array([w / 2, h / 2])
        self.hi = np.array([side - w / 2, side - h / 2])
        self.pos = rng.uniform(self.lo, self.hi)
        ang = rng.uniform(0, 2 * math.pi)
        speed = rng.uniform(0.1, 0.6)
        self.vel = speed * np.array([math.cos(ang), math.sin(ang)])

    def advance(self):
        self.pos = self.pos + self.vel
        for d in range(2):
            if self.pos[d] < self.lo[d] or self.pos[d] > self.hi[d]:
                self.vel[d] = -self.vel[d]
                self.pos[d] = min(max(self.pos[d], self.lo[d]), self.hi[d])


class _Occluder:
    """Striped bar glued over one side of the target during its interval, then sliding away."""

    EXIT_FRAMES = 15

    def __init__(self, spec: SequenceSpec, index: int, interval):
        rng = _rng(spec.seed, _OCCLUDER, index)
        self.start, self.end, self.coverage = interval
        self.side = int(rng.integers(4))  # 0 top, 1 bottom, 2 left, 3 right
        self.period = float(rng.uniform(3.0, 6.0))
        self.angle = float(rng.uniform(0, math.pi))
        self.lo_val, self.hi_val = float(rng.uniform(10, 50)), float(rng.uniform(200, 245))
        # leaves away from the side it covers so it never sweeps back over the target
        away = {0: (0.0, -1.0), 1: (0.0, 1.0), 2: (-1.0, 0.0), 3: (1.0, 0.0)}[self.side]
        self.exit_vel = float(rng.uniform(3.0, 5.0)) * np.array(away)

    def rect(self, box: BBox) -> tuple[float, float, float, float]:
        """Occluder rectangle (x0, y0, x1, y1) for a target box; covers >= coverage of the box area."""
        x0, y0, x1, y1 = box.x - 1, box.y - 1, box.x + box.w + 1, box.y + box.h + 1
        if self.side == 0:
            y1 = box.y + math.ceil(self.coverage * box.h) + 1
        elif self.side == 1:
            y0 = box.y + box.h - math.ceil(self.coverage * box.h) - 1
        elif self.side == 2:
            x1 = box.x + math.ceil(self.coverage * box.w) + 1
        else:
            x0 = box.x + box.w - math.ceil(self.coverage * box.w) - 1
        return (x0, y0, x1, y1)

    def draw(self, canvas, xs, ys, rect):
        x0, y0, x1, y1 = rect
        inside_x = np.clip(np.minimum(xs - x0, x1 - xs) + 0.5, 0, 1)
        inside_y = np.clip(np.minimum(ys - y0, y1 - ys) + 0.5, 0, 1)
        mask = inside_y[:, None] * inside_x[None, :]
        proj = xs[None, :] * math.cos(self.angle) + ys[:, None] * math.sin(self.angle)
        stripes = np.where(np.floor(proj / self.period) % 2 == 0, self.lo_val, self.hi_val)
        canvas[:] = canvas * (1 - mask) + stripes * mask
        return mask


def _render(spec: SequenceSpec, with_masks: bool = False):
    side = spec.frame_side
    xs = np.arange(side) + 0.5
    ys = np.arange(side) + 0.5
    bg = _background(spec)
    bg_mean = float(bg.mean())
    centers = _trajectory(spec)
    target = _target_sprite(spec)
    distractors = [_Distractor(spec, i) for i in range(spec.clutter_count)]
    occluders = [_Occluder(spec, i, iv) for i, iv in enumerate(spec.occlusions)]
    w, h = spec.size

    frames, annotations, masks = [], [], []
    exit_state: dict[int, tuple[tuple[float, float, float, float], int]] = {}
    prev_key = target.phase(0)[0]
    for t in range(spec.length):
        canvas = bg.copy()
        for d in distractors:
            if t > 0:
                d.advance()
            d.sprite.draw(canvas, xs, ys, d.pos[0], d.pos[1], t, spec.clutter_contrast, bg_mean)
        cx, cy = centers[t]
        box = BBox.from_center(cx, cy, w, h)
        target.draw(canvas, xs, ys, cx, cy, t)

        occluded = False
        occ_mask = np.zeros((side, side))
        for i, occ in enumerate(occluders):
            if occ.start <= t < occ.end:
                rect = occ.rect(box)
                exit_state[i] = (rect, t)
                occluded = True
            elif t >= occ.end and i in exit_state and t - occ.end < _Occluder.EXIT_FRAMES:
                (x0, y0, x1, y1), t_last = exit_state[i]
                vel = np.diff(centers[max(t_last - 1, 0) : t_last + 1], axis=0)
                vel = vel[0] if len(vel) else np.zeros(2)
                shift = (t - t_last) * (vel + occ.exit_vel)
                rect = (x0 + shift[0], y0 + shift[1], x1 + shift[0], y1 + shift[1])
            else:
                continue
            occ_mask = np.maximum(occ_mask, occ.draw(canvas, xs, ys, rect))

        if spec.noise > 0:
            canvas = canvas + _rng(spec.seed, _NOISE, t).normal(0.0, spec.noise, canvas.shape)
        frames.append(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8))

        key = target.phase(t)[0]
        annotations.append(Annotation(t, box, occluded, key != prev_key))
        prev_key = key
        if with_masks:
            masks.append(occ_mask)
    if with_masks:
        return frames, annotations, masks
    return frames, annotations


def generate_sequence(spec: SequenceSpec) -> tuple[list[np.ndarray], list[Annotation]]:
    """Render ``spec`` into grayscale frames and per-frame annotations."""
    spec.validate()
    return _render(spec)


def occluder_masks(spec: SequenceSpec) -> list[np.ndarray]:
    """Per-frame occluder coverage masks (for measuring occlusion fractions)."""
    return _render(spec, with_masks=True)[2]


# ---------------------------------------------------------------- suites


def _random_spec(rng, name, length, *, side, drift, occlusions, clutter, seed,
                 contrast=(0.6, 1.0)) -> SequenceSpec:
    size = float(rng.uniform(16, 22))
    aspect = float(rng.uniform(0.8, 1.25))
    ang = rng.uniform(0, 2 * math.pi)
    speed = rng.uniform(0.4, 1.4)
    turns = []
    for f in range(int(rng.integers(25, 45)), length, int(rng.integers(30, 60))):
        a = rng.uniform(0, 2 * math.pi)
        s = rng.uniform(0.4, 1.4)
        turns.append((f, round(s * math.cos(a), 4), round(s * math.sin(a), 4)))
    return SequenceSpec(
        name=name,
        length=length,
        frame_side=side,
        shape=SHAPES[int(rng.integers(len(SHAPES)))],
        size=(round(size * aspect, 3), round(size / aspect, 3)),
        texture_seed=int(rng.integers(2**31)),
        velocity=(round(speed * math.cos(ang), 4), round(speed * math.sin(ang), 4)),
        turns=turns,
        drift_rate=round(float(rng.uniform(*drift)), 5),
        occlusions=occlusions,
        clutter_count=int(rng.integers(clutter[0], clutter[1] + 1)),
        clutter_contrast=round(float(rng.uniform(*contrast)), 4),
        noise=3.0,
        seed=seed,
    )


def _occlusion_events(rng, length, n, coverage, dur=(8, 14)) -> list[tuple[int, int, float]]:
    events = []
    slot = (length - 40) // n
    if slot < dur[1] + 11:
        raise ValueError(f"length {length} is too short for {n} occlusion events; need >= {40 + n * (dur[1] + 11)}")
    for i in range(n):
        d = int(rng.integers(dur[0], dur[1] + 1))
        lo = 30 + i * slot
        s = int(rng.integers(lo, lo + slot - d - 10))
        events.append((s, s + d, round(float(rng.uniform(*coverage)), 3)))
    return events


def training_suite(seed: int = 0, count: int = 60, length: int = 120, side: int = 96) -> list[SequenceSpec]:
    rng = _rng(seed, 100)
    return [
        _random_spec(rng, f"train_{i:03d}", length, side=side, drift=(0.005, 0.02), occlusions=[],
                     clutter=(2, 4), seed=seed * 100_000 + 1000 + i)
        for i in range(count)
    ]


def drift_suite(seed: int = 0, count: int = 20, length: int = 200, side: int = 96) -> list[SequenceSpec]:
    rng = _rng(seed, 200)
    specs = []
    for i in range(count):
        events = _occlusion_events(rng, length, 2, (0.5, 0.8))
        specs.append(_random_spec(rng, f"drift_{i:03d}", length, side=side, drift=(0.01, 0.025),
                                  occlusions=events, clutter=(1, 2), contrast=(0.3, 0.6),
                                  seed=seed * 100_000 + 2000 + i))
    return specs


def occlusion_suite(seed: int = 0, count: int = 10, length: int = 200, side: int = 96) -> list[SequenceSpec]:
    rng = _rng(seed, 300)
    specs = []
    for i in range(count):
        events = _occlusion_events(rng, length, 4, (0.7, 0.9), dur=(10, 16))
        specs.append(_random_spec(rng, f"occl_{i:03d}", length, side=side, drift=(0.005, 0.015),
                                  occlusions=events, clutter=(1, 2), contrast=(0.3, 0.6),
                                  seed=seed * 100_000 + 3000 + i))
    return specs


SUITES = {"train": training_suite, "drift": drift_suite, "occlusion": occlusion_suite}


# ---------------------------------------------------------------- file io


def write_pnm(path: Path, img: np.ndarray) -> None:
    if img.dtype != np.uint8:
        raise TypeError("PNM writer expects uint8")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"unsupported image shape {img.shape}")
    header = b"%s\n%d %d\n255\n" % (magic, img.shape[1], img.shape[0])
    Path(path).write_bytes(header + np.ascontiguousarray(img).tobytes())


def read_pnm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DatasetFormatError(f"{path}: truncated PNM header")
        tokens.append(data[start:pos])
    pos += 1
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise DatasetFormatError(f"{path}: unsupported PNM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DatasetFormatError(f"{path}: malformed PNM header") from None
    if maxval != 255:
        raise DatasetFormatError(f"{path}: only maxval 255 is supported")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    body = data[pos:]
    if len(body) != need:
        raise DatasetFormatError(f"{path}: expected {need} pixel bytes, found {len(body)} (truncated?)")
    img = np.frombuffer(body, dtype=np.uint8).reshape((height, width, channels) if channels == 3 else (height, width))
    return img.copy()


_ANNOTATION_FIELDS = ("frame_index", "gt_box", "occluded", "drift_event")


def _parse_annotation(path: Path, lineno: int, line: str) -> Annotation:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    for name in _ANNOTATION_FIELDS:
        if name not in rec:
            raise DatasetFormatError(f"{path}:{lineno}: missing field '{name}'")
    box = rec["gt_box"]
    if not (isinstance(box, list) and len(box) == 4):
        raise DatasetFormatError(f"{path}:{lineno}: field 'gt_box' must be [x, y, w, h]")
    try:
        return Annotation(int(rec["frame_index"]), BBox(*map(float, box)), bool(rec["occluded"]), bool(rec["drift_event"]))
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None


def frame_name(i: int) -> str:
    return f"frame_{i:06d}.pnm"


def write_sequence(path: str | Path, frames, annotations, spec: SequenceSpec | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if len(frames) != len(annotations):
        raise ValueError("frames and annotations differ in length")
    for i, img in enumerate(frames):
        write_pnm(path / frame_name(i), img)
    with open(path / "annotations.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for ann in annotations:
            fh.write(ann.to_json() + "\n")
    if spec is not None:
        (path / "spec.json").write_text(json.dumps(asdict(spec), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_sequence(path: str | Path) -> tuple[list[np.ndarray], list[Annotation]]:
    path = Path(path)
    ann_path = path / "annotations.jsonl"
    if not ann_path.exists():
        raise FileNotFoundError(f"missing {ann_path}")
    annotations = []
    for lineno, line in enumerate(ann_path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            annotations.append(_parse_annotation(ann_path, lineno, line))
    frames = []
    for i in range(len(annotations)):
        fp = path / frame_name(i)
        if not fp.exists():
            raise DatasetFormatError(f"{fp}: missing frame file for annotation {i}")
        frames.append(read_pnm(fp))
    return frames, annotations


def read_spec(path: str | Path) -> SequenceSpec | None:
    fp = Path(path) / "spec.json"
    if not fp.exists():
        return None
    return SequenceSpec.from_dict(json.loads(fp.read_text(encoding="utf-8")))


def write_dataset(path: str | Path, sequences: dict[str, tuple]) -> None:
    """Write ``{name: (frames, annotations[, spec])}`` under ``path``."""
    for name, seq in sorted(sequences.items()):
        write_sequence(Path(path) / name, *seq)


def read_dataset(path: str | Path) -> dict[str, tuple[list[np.ndarray], list[Annotation]]]:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {path}")
    out = {}
    for seq_dir in sorted(p for p in path.iterdir() if p.is_dir()):
        out[seq_dir.name] = read_sequence(seq_dir)
    return out


def sequence_names(path: str | Path) -> list[str]:
    return sorted(p.name for p in Path(path).iterdir() if (p / "annotations.jsonl").exists())


def synthesize(path: str | Path, specs: list[SequenceSpec]) -> None:
    for spec in specs:
        frames, annotations = generate_sequence(spec)
        write_sequence(Path(path) / spec.name, frames, annotations, spec)
