"""Report, curve and ablation-table emission (UTF-8, LF newlines, 6-decimal fixed-point reals)."""

from __future__ import annotations

import json
import math
from pathlib import Path

HEADER = (
    "eao_lite is the mean over sequences of the mean per-segment overlap of a supervised run "
    "(re-initialised 5 frames after each zero-overlap failure); robustness is failures per 1000 frames. "
    "Both are simplified stand-ins for the official VOT expected-average-overlap and robustness, "
    "which bucket overlaps by sequence length; they preserve ordering between arms, not absolute values."
)

SEQUENCE_FIELDS = ("frames", "mean_iou", "success_auc", "precision_at_20", "failures", "robustness", "eao_lite")
TABLE_COLUMNS = ("arm", "mode", "tau", "alpha", "eao_lite", "robustness", "mean_iou", "success_auc")


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v} cannot be reported")
        return f"{v:.6f}"
    raise TypeError(type(v))


def _json(obj, indent: int = 0) -> str:
    """Deterministic JSON writer: sorted keys, two-space indent, fixed-point floats."""
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_json(str(k))}: {_json(v, indent + 1)}' for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(_json(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if obj is None:
        return "null"
    return fmt(obj)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _sequence_entry(r, timing: bool) -> dict:
    entry = {name: getattr(r, name) for name in SEQUENCE_FIELDS}
    entry["failures"] = int(entry["failures"])
    if timing:
        entry["runtime"] = float(r.runtime)
    return entry


def write_curves(path: Path, result) -> None:
    lines = ["frame,overlap,regularity,change"]
    for out, ov in zip(result.outputs, result.overlaps):
        lines.append(f"{out.frame_index},{fmt(float(ov))},{fmt(float(out.regularity))},{int(out.change)}")
    _write(path, "\n".join(lines) + "\n")


def emit_report(results, path: str | Path, config: dict | None = None, timing: bool = False) -> dict:
    """Write ``report.json`` and ``curves/<seq>.csv``; returns the aggregate block.

    Wall-clock runtime is only included when ``timing`` is set so default outputs are byte-stable.
    """
    from .experiment import aggregate

    if not results:
        raise ValueError("empty result set: nothing to report")
    path = Path(path)
    results = sorted(results, key=lambda r: r.name)
    agg = aggregate(results)
    if not timing:
        agg.pop("runtime")
    doc = {
        "header": HEADER,
        "config": config or {},
        "sequences": {r.name: _sequence_entry(r, timing) for r in results},
        "aggregate": agg,
    }
    _write(path / "report.json", _json(doc) + "\n")
    for r in results:
        write_curves(path / "curves" / f"{r.name}.csv", r)
    return agg


def write_table(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("empty ablation table")
    lines = [",".join(TABLE_COLUMNS)]
    for row in rows:
        lines.append(",".join(row[c] if isinstance(row[c], str) else fmt(row[c]) for c in TABLE_COLUMNS))
    _write(Path(path) / "table.csv", "\n".join(lines) + "\n")
