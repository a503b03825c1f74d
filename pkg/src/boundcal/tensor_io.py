"""Byte-exact file formats: an NPY v1.0 subset, binary PGM, and the BCQR model blob."""

from __future__ import annotations

import ast
import math
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    FortranOrderUnsupported,
    IoFailure,
    LengthMismatch,
    SizeMismatch,
    TruncatedPayload,
    UnsupportedDtype,
    ValueOutOfRange,
    VersionMismatch,
)

NPY_MAGIC = b"\x93NUMPY"
NPY_ALIGN = 64
_NPY_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}

MODEL_MAGIC = b"BCQR"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIIII")  # magic, version, k, hidden, channels


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _write_bytes(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------- NPY

def npy_header(shape) -> bytes:
    """Magic, version 1.0, length field and space-padded dict, 64-byte aligned."""
    shape = tuple(int(s) for s in shape)
    text = "{'descr': '<f8', 'fortran_order': False, 'shape': %r, }" % (shape,)
    # 6 magic + 2 version + 2 length + text + 1 newline
    pad = -(10 + len(text) + 1) % NPY_ALIGN
    text = text + " " * pad + "\n"
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(text)) + text.encode("latin1")


def encode_npy(shape, values) -> bytes:
    shape = tuple(int(s) for s in shape)
    flat = np.asarray(values, dtype="<f8").reshape(-1)
    if flat.size != math.prod(shape):
        raise LengthMismatch(f"{flat.size} values cannot fill shape {shape}")
    return npy_header(shape) + flat.tobytes()


def decode_npy(data: bytes) -> np.ndarray:
    if data[:6] != NPY_MAGIC:
        raise BadMagic(f"not an NPY file (magic {data[:6]!r})")
    if len(data) < 10:
        raise TruncatedPayload("NPY header truncated")
    major = data[6]
    if major == 1:
        (hlen,) = struct.unpack("<H", data[8:10])
        start = 10
    elif major in (2, 3):
        if len(data) < 12:
            raise TruncatedPayload("NPY header truncated")
        (hlen,) = struct.unpack("<I", data[8:12])
        start = 12
    else:
        raise BadMagic(f"unsupported NPY version {major}.{data[7]}")
    if len(data) < start + hlen:
        raise TruncatedPayload("NPY header truncated")
    try:
        header = ast.literal_eval(data[start:start + hlen].decode("latin1"))
        descr, fortran, shape = header["descr"], header["fortran_order"], tuple(header["shape"])
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise BadMagic(f"malformed NPY header: {exc}") from exc
    if descr not in _NPY_DTYPES:
        raise UnsupportedDtype(f"dtype {descr!r} unsupported (want little-endian float32/float64)")
    if fortran:
        raise FortranOrderUnsupported("Fortran-ordered arrays are not supported")
    dtype = _NPY_DTYPES[descr]
    nbytes = math.prod(shape) * dtype.itemsize
    payload = data[start + hlen:]
    if len(payload) < nbytes:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, shape {shape} needs {nbytes}")
    arr = np.frombuffer(payload[:nbytes], dtype=dtype).astype(np.float64)
    return arr.reshape(shape)


def read_npy(path) -> np.ndarray:
    """Read a float32/float64 NPY file as a C-ordered float64 array."""
    return decode_npy(_read_bytes(path))


def write_npy(path, shape, values=None) -> None:
    """Write ``values`` as an NPY v1.0 ``<f8`` file.

    ``write_npy(path, array)`` is shorthand for ``write_npy(path, array.shape, array)``.
    """
    if values is None:
        values = np.asarray(shape)
        shape = values.shape
    _write_bytes(path, encode_npy(shape, values))


# --------------------------------------------------------------------- PGM

def encode_pgm(grid) -> bytes:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueOutOfRange(f"PGM grid must be 2-D, got shape {g.shape}")
    flat = g.reshape(-1)
    bad = ~(np.isfinite(flat) & (flat >= 0.0) & (flat <= 1.0))
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueOutOfRange(f"PGM value {flat[i]!r} at flat index {i} outside [0, 1]", index=i)
    h, w = g.shape
    # round half up
    pixels = np.floor(255.0 * flat + 0.5).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(path, grid) -> None:
    """Write an ``(H, W)`` grid in ``[0, 1]`` as an 8-bit binary PGM."""
    _write_bytes(path, encode_pgm(grid))


def read_pgm(path) -> np.ndarray:
    """Parse a P5 file written by :func:`write_pgm`; returns uint8 ``(H, W)``."""
    data = _read_bytes(path)
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise BadMagic("not a binary PGM")
    w, h = (int(t) for t in parts[1].split())
    payload = parts[3]
    if len(payload) != w * h:
        raise TruncatedPayload(f"PGM payload has {len(payload)} bytes, expected {w * h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w)


# ------------------------------------------------------------------- model

def _model_sizes(k, hidden, channels):
    d = k * k * channels
    return [(hidden, d), (hidden,), (3, hidden), (3,)]


def encode_model(model) -> bytes:
    header = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.k, model.hidden, model.channels)
    parts = [model.w1, model.b1, model.w2, model.b2]
    payload = b"".join(np.asarray(p, dtype="<f4").tobytes() for p in parts)
    return header + payload


def decode_model(data: bytes):
    from .qr_trainer import QrModel

    if data[:4] != MODEL_MAGIC:
        raise BadMagic(f"not a BCQR model (magic {data[:4]!r})")
    if len(data) < _MODEL_HEADER.size:
        raise SizeMismatch("model header truncated")
    _, version, k, hidden, channels = _MODEL_HEADER.unpack_from(data)
    if version != MODEL_VERSION:
        raise VersionMismatch(f"model format version {version}, expected {MODEL_VERSION}")
    sizes = _model_sizes(k, hidden, channels)
    counts = [math.prod(s) for s in sizes]
    payload = data[_MODEL_HEADER.size:]
    if len(payload) != 4 * sum(counts):
        raise SizeMismatch(
            f"header declares k={k}, hidden={hidden}, channels={channels} "
            f"({4 * sum(counts)} payload bytes) but payload has {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    arrays, pos = [], 0
    for shape, n in zip(sizes, counts):
        arrays.append(flat[pos:pos + n].reshape(shape).copy())
        pos += n
    return QrModel(k, channels, *arrays)


def write_model(path, model) -> None:
    _write_bytes(path, encode_model(model))


def read_model(path):
    return decode_model(_read_bytes(path))
