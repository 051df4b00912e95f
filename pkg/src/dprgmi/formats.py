"""On-disk formats: embedding matrices, label CSVs and deterministic JSON.

Embedding file layout (little-endian)::

    b"DPRG" | u16 version=1 | u16 flags=0 | u64 N | u64 d | N*d float32 row-major
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, TruncationError, VersionError

EMB_MAGIC = b"DPRG"
EMB_VERSION = 1
_EMB_HEADER = struct.Struct("<4sHHQQ")
MAX_ELEMENTS = 1 << 40


def write_embeddings(Z, path) -> None:
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
        raise InputError(f"embedding matrix must be N x d with N, d >= 1; got {Z.shape}")
    header = _EMB_HEADER.pack(EMB_MAGIC, EMB_VERSION, 0, Z.shape[0], Z.shape[1])
    payload = np.ascontiguousarray(Z, dtype="<f4").tobytes()
    try:
        Path(path).write_bytes(header + payload)
    except OSError as exc:
        raise FormatError(f"cannot write embeddings {path}: {exc}") from exc


def read_embeddings(path) -> np.ndarray:
    """Read an embedding file; values come back as float32."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read embeddings {path}: {exc}") from exc
    if len(data) < _EMB_HEADER.size:
        raise TruncationError(f"{path}: file shorter than the header")
    magic, version, flags, n, d = _EMB_HEADER.unpack_from(data)
    if magic != EMB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != EMB_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    if flags != 0:
        raise FormatError(f"{path}: unknown flags {flags:#x}")
    if n < 1 or d < 1:
        raise FormatError(f"{path}: empty embedding matrix ({n} x {d})")
    if n > MAX_ELEMENTS or d > MAX_ELEMENTS or n * d > MAX_ELEMENTS:
        raise FormatError(f"{path}: declared size {n} x {d} overflows")
    expected = _EMB_HEADER.size + 4 * n * d
    if len(data) != expected:
        raise TruncationError(f"{path}: header declares {n} x {d} values but payload has "
                              f"{len(data) - _EMB_HEADER.size} bytes")
    return np.frombuffer(data, dtype="<f4", offset=_EMB_HEADER.size).reshape(n, d).astype(np.float32)


def write_labels(Y, path) -> None:
    Y = np.asarray(Y)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id"] + [f"label_{l}" for l in range(Y.shape[1])])
            for i, row in enumerate(Y):
                w.writerow([i] + [int(v) for v in row])
    except OSError as exc:
        raise FormatError(f"cannot write labels {path}: {exc}") from exc


def read_labels(path) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read labels {path}: {exc}") from exc
    if not rows or rows[0][:1] != ["id"]:
        raise FormatError(f"{path}: missing 'id,label_0,...' header")
    L = len(rows[0]) - 1
    if L < 1 or rows[0][1:] != [f"label_{l}" for l in range(L)]:
        raise FormatError(f"{path}: malformed label header")
    try:
        Y = np.array([[int(v) for v in r[1:]] for r in rows[1:] if r], dtype=np.int8)
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer label") from exc
    if Y.ndim != 2 or Y.shape[1] != L:
        raise FormatError(f"{path}: ragged label rows")
    if not np.isin(Y, (0, 1)).all():
        raise FormatError(f"{path}: labels must be 0 or 1")
    return Y


# --- deterministic JSON -----------------------------------------------------

def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and insertion-ordered keys.

    Non-finite floats are written as the strings ``"inf"``, ``"-inf"``, ``"nan"``.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def parse_float(v) -> float:
    if isinstance(v, str):
        if v in ("inf", "-inf", "nan", "Infinity", "-Infinity", "NaN"):
            return float(v)
        raise FormatError(f"not a number: {v!r}")
    return float(v)
