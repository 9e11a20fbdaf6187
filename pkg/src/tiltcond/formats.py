"""On-disk formats: CSV tables, the TCND path dump, and 17-digit JSON."""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

PATHS_MAGIC = b"TCND"
PATHS_VERSION = 1
_PATHS_HEADER = struct.Struct("<4sHQQ")


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    """Header row, comma separator, LF endings, floats at 17 significant digits."""
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def paths_header(k: int) -> list[str]:
    return [f"y_{j}" for j in range(1, k + 1)] + ["t_last"]


def write_paths_csv(path, paths: np.ndarray, last_tilt: np.ndarray) -> None:
    k = paths.shape[1]
    write_csv(path, paths_header(k), [paths[:, j] for j in range(k)] + [last_tilt])


def write_paths_tcnd(path, n: int, paths: np.ndarray, last_tilt: np.ndarray) -> None:
    """Columnar dump: header, then columns y_1..y_k and t_last as little-endian f64."""
    k = paths.shape[1]
    data = np.column_stack([paths, last_tilt]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_PATHS_HEADER.pack(PATHS_MAGIC, PATHS_VERSION, n, k))
        fh.write(np.asfortranarray(data).tobytes(order="F"))


def read_paths_tcnd(path) -> tuple[int, np.ndarray, np.ndarray]:
    """Returns ``(n, paths, last_tilt)``."""
    raw = Path(path).read_bytes()
    magic, version, n, k = _PATHS_HEADER.unpack_from(raw)
    if magic != PATHS_MAGIC or version != PATHS_VERSION:
        raise ValueError(f"{path}: not a version-{PATHS_VERSION} TCND file")
    body = np.frombuffer(raw, dtype="<f8", offset=_PATHS_HEADER.size)
    rows = body.size // (k + 1)
    data = body[: rows * (k + 1)].reshape((k + 1, rows)).T
    return int(n), data[:, :k].copy(), data[:, k].copy()


def json_dumps(obj) -> str:
    """JSON with every float written at 17 significant digits.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``,
    matching how bounds are written in family configs.
    """
    return _enc(obj)


def _enc(o) -> str:
    import json

    if o is None or isinstance(o, (bool, np.bool_)):
        return json.dumps(bool(o) if o is not None else None)
    if isinstance(o, (int, np.integer)):
        return str(int(o))
    if isinstance(o, (float, np.floating)):
        f = float(o)
        if math.isnan(f):
            return '"nan"'
        if math.isinf(f):
            return '"inf"' if f > 0 else '"-inf"'
        return format(f, ".17g")
    if isinstance(o, str):
        return json.dumps(o)
    if isinstance(o, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_enc(v)}" for k, v in o.items()) + "}"
    if isinstance(o, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_enc(v) for v in o) + "]"
    raise TypeError(f"cannot serialise {type(o).__name__}")
