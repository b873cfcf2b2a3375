"""Checkpoint io shared by every learned module.

A checkpoint is a directory holding ``manifest.txt`` and ``weights.bin``.
Each manifest line reads ``name shape dtype byte-offset`` where shape is
``x``-joined (``scalar`` for 0-d tensors) and dtype is always ``float32``.
The blob is the concatenation of little-endian float32 tensors in manifest order.
"""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError

MANIFEST = "manifest.txt"
BLOB = "weights.bin"
_LE_F32 = np.dtype("<f4")


def _shape_str(shape) -> str:
    return "x".join(str(int(s)) for s in shape) if len(shape) else "scalar"


def _parse_shape(text: str) -> tuple[int, ...]:
    if text == "scalar":
        return ()
    return tuple(int(s) for s in text.split("x"))


def save_tensors(path: str | Path, tensors: "OrderedDict[str, np.ndarray]") -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = []
    offset = 0
    with open(path / BLOB, "wb") as blob:
        for name, arr in tensors.items():
            if any(ch.isspace() for ch in name):
                raise CheckpointError(f"tensor name may not contain whitespace: {name!r}")
            data = np.asarray(arr, dtype=_LE_F32).copy(order="C")  # keeps 0-d shapes
            blob.write(data.tobytes())
            lines.append(f"{name} {_shape_str(data.shape)} float32 {offset}")
            offset += data.nbytes
    (path / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_tensors(path: str | Path) -> "OrderedDict[str, np.ndarray]":
    path = Path(path)
    manifest = path / MANIFEST
    if not manifest.exists():
        raise FileNotFoundError(f"missing checkpoint manifest: {manifest}")
    raw = (path / BLOB).read_bytes()
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4 or parts[2] != "float32":
            raise CheckpointError(f"{manifest}:{lineno}: malformed entry {line!r}")
        name, shape, offset = parts[0], _parse_shape(parts[1]), int(parts[3])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(f"{manifest}:{lineno}: tensor {name} runs past end of blob")
        out[name] = np.frombuffer(raw, dtype=_LE_F32, count=count, offset=offset).reshape(shape).astype(np.float32)
    return out


def save_module(module: torch.nn.Module, path: str | Path) -> None:
    state = OrderedDict(
        (k, v.detach().cpu().numpy()) for k, v in module.state_dict().items() if v.is_floating_point()
    )
    save_tensors(path, state)


def load_module(module: torch.nn.Module, path: str | Path) -> torch.nn.Module:
    tensors = load_tensors(path)
    own = module.state_dict()
    missing = [k for k, v in own.items() if v.is_floating_point() and k not in tensors]
    if missing:
        raise CheckpointError(f"{path}: checkpoint lacks tensors {missing}")
    with torch.no_grad():
        for name, arr in tensors.items():
            if name not in own:
                raise CheckpointError(f"{path}: unexpected tensor {name}")
            if tuple(own[name].shape) != arr.shape:
                raise CheckpointError(f"{path}: shape mismatch for {name}: {arr.shape} vs {tuple(own[name].shape)}")
            own[name].copy_(torch.from_numpy(arr.copy()).to(own[name].dtype))
    return module
