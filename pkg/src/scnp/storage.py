"""Binary containers for propagation matrices and model checkpoints.

Matrix record (all little-endian)::

    b"SCNPMAT1" | u64 rows | u64 cols | f64 alpha | f64 epsilon
    | rows*cols f64 payload (row-major) | u64 FNV-1a checksum of the payload

``alpha``/``epsilon`` are NaN when not applicable.  A checkpoint is
``b"SCNPCKP1" | u64 header length | JSON header`` followed by one matrix
record per parameter tensor, in the order listed in the header.
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import CorruptFile, IoError, VersionMismatch
from .propagation import PprMatrix, SigmaMatrix

MATRIX_MAGIC = b"SCNPMAT1"
CHECKPOINT_MAGIC = b"SCNPCKP1"
_HEADER = struct.Struct("<8sQQdd")

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)


@numba.njit(cache=True)
def _fnv1a(data, h, prime):
    for b in data:
        h = (h ^ np.uint64(b)) * prime
    return h


def fnv1a64(data) -> int:
    """64-bit FNV-1a hash of a bytes-like object."""
    buf = np.frombuffer(memoryview(data).cast("B"), dtype=np.uint8)
    return int(_fnv1a(buf, FNV_OFFSET, FNV_PRIME))


@dataclass(frozen=True)
class MatrixFile:
    values: np.ndarray
    alpha: float
    epsilon: float


def _payload(values):
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def write_matrix_record(fh, values, alpha=math.nan, epsilon=math.nan):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    if values.ndim != 2:
        raise ValueError("only 1-d and 2-d arrays can be stored")
    payload = _payload(values)
    fh.write(_HEADER.pack(MATRIX_MAGIC, values.shape[0], values.shape[1], float(alpha), float(epsilon)))
    fh.write(payload)
    fh.write(struct.pack("<Q", fnv1a64(payload)))


def _read_exact(fh, k, what):
    data = fh.read(k)
    if len(data) != k:
        raise CorruptFile(f"truncated file while reading {what}")
    return data


def read_matrix_record(fh) -> MatrixFile:
    head = fh.read(_HEADER.size)
    if len(head) >= 8 and head[:8] != MATRIX_MAGIC:
        raise VersionMismatch(f"unrecognized magic {head[:8]!r}, expected {MATRIX_MAGIC!r}")
    if len(head) != _HEADER.size:
        raise CorruptFile("truncated file while reading header")
    _, rows, cols, alpha, epsilon = _HEADER.unpack(head)
    payload = _read_exact(fh, rows * cols * 8, "payload")
    (stored,) = struct.unpack("<Q", _read_exact(fh, 8, "checksum"))
    if stored != fnv1a64(payload):
        raise CorruptFile("payload checksum mismatch")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
    return MatrixFile(values, alpha, epsilon)


def _atomic_write(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror}") from e


def save_matrix(m, path):
    """Write a :class:`PprMatrix`, :class:`SigmaMatrix` or plain array."""
    if isinstance(m, SigmaMatrix):
        values, alpha, eps = m.values, m.alpha, m.epsilon
    elif isinstance(m, PprMatrix):
        values, alpha, eps = m.values, m.alpha, math.nan
    elif isinstance(m, MatrixFile):
        values, alpha, eps = m.values, m.alpha, m.epsilon
    else:
        values, alpha, eps = m, math.nan, math.nan
    buf = io.BytesIO()
    write_matrix_record(buf, values, alpha, eps)
    _atomic_write(path, buf.getvalue())


def load_matrix(path) -> MatrixFile:
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise IoError(f"cannot open {path}: {e.strerror}") from e
    with fh:
        rec = read_matrix_record(fh)
        if fh.read(1):
            raise CorruptFile(f"{path}: trailing bytes after matrix record")
    return rec


def load_ppr(path) -> PprMatrix:
    rec = load_matrix(path)
    if math.isnan(rec.alpha):
        raise CorruptFile(f"{path}: no teleport probability recorded")
    return PprMatrix(rec.values, rec.alpha)


def load_sigma(path) -> SigmaMatrix:
    rec = load_matrix(path)
    if math.isnan(rec.epsilon):
        raise CorruptFile(f"{path}: no pruning threshold recorded")
    literal = rec.values.size > 0 and not np.all(np.diag(rec.values) == 1.0)
    return SigmaMatrix(rec.values, rec.epsilon, rec.alpha, bool(literal))


def save_checkpoint(path, tensors: dict, header: dict):
    """Write named tensors plus a JSON-serializable header (config echo)."""
    meta = dict(header, sections=list(tensors), shapes={k: list(np.shape(v)) for k, v in tensors.items()})
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    for value in tensors.values():
        write_matrix_record(buf, value)
    _atomic_write(path, buf.getvalue())


def load_checkpoint(path):
    """Return ``(tensors, header)``; 1-d tensors come back as 1-d arrays."""
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise IoError(f"cannot open {path}: {e.strerror}") from e
    with fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise VersionMismatch(f"unrecognized checkpoint magic {magic!r}")
        (k,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, k, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CorruptFile(f"{path}: bad checkpoint header") from e
        shapes = header.get("shapes", {})
        tensors = {}
        for name in header["sections"]:
            values = read_matrix_record(fh).values
            if len(shapes.get(name, [0, 0])) == 1:
                values = values.ravel()
            tensors[name] = values
    return tensors, header
