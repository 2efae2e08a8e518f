from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
import orjson

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY


def _atomic_write(path: Path, data: bytes) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path: str | Path, header: list[str], rows: np.ndarray) -> Path:
    """Comma-separated table, 17 significant digits."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[1] != len(header):
        raise ValueError(f"{len(header)} columns named but rows have {rows.shape[1]}")
    buffer = io.StringIO()
    np.savetxt(buffer, rows, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
    return _atomic_write(Path(path), buffer.getvalue().encode("utf-8"))


def dump_json(data: Any) -> bytes:
    if hasattr(data, "model_dump"):
        data = data.model_dump(mode="json")
    return orjson.dumps(data, option=JSON_OPTIONS) + b"\n"


def write_json(path: str | Path, data: Any) -> Path:
    return _atomic_write(Path(path), dump_json(data))
