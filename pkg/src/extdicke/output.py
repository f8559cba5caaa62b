"""Deterministic CSV / JSON / binary writers used by the command line."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(value)


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_csv(path: Path, header: list[str], rows, comments: list[str] = ()) -> Path:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_json(path: Path, obj) -> Path:
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_matrix(path: Path, matrix: np.ndarray, sidecar: dict) -> tuple[Path, Path]:
    """Row-major float64 dump with a JSON description next to it."""
    arr = np.ascontiguousarray(matrix, dtype="<f8")
    path.write_bytes(arr.tobytes(order="C"))
    meta = {"rows": arr.shape[0], "cols": arr.shape[1], "dtype": "float64-le", **sidecar}
    side = path.with_suffix(path.suffix + ".json")
    write_json(side, meta)
    return path, side


def read_matrix(path: Path) -> np.ndarray:
    meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    return data.reshape(meta["rows"], meta["cols"])
