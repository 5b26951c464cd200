"""Binary container for spectrogram and label matrices.

Layout: 16-byte header (4-byte magic, u32 rows, u32 cols, u32 reserved,
little-endian) followed by the row-major payload. Spectrograms ("SFUS")
store 32-bit little-endian floats; label matrices ("SFUL") store bytes.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC_SPECTROGRAM = b"SFUS"
MAGIC_LABELS = b"SFUL"

_HEADER = struct.Struct("<4sIII")


def _write(path, magic: bytes, data: np.ndarray, dtype: str) -> None:
    if data.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {data.shape}")
    payload = np.ascontiguousarray(data, dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, data.shape[0], data.shape[1], 0))
        fh.write(payload.tobytes())


def _read(path, magic: bytes, dtype: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        got_magic, rows, cols, _ = _HEADER.unpack(header)
        if got_magic != magic:
            raise ValueError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
        raw = fh.read()
    expected = rows * cols * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise ValueError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype=dtype).reshape(rows, cols)


def write_spectrogram(path, data: np.ndarray) -> None:
    _write(path, MAGIC_SPECTROGRAM, data, "<f4")


def read_spectrogram(path) -> np.ndarray:
    return _read(path, MAGIC_SPECTROGRAM, "<f4").astype(np.float32)


def write_labels(path, data: np.ndarray) -> None:
    arr = np.asarray(data)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("label matrices must be binary")
    _write(path, MAGIC_LABELS, arr, "u1")


def read_labels(path) -> np.ndarray:
    return _read(path, MAGIC_LABELS, "u1").astype(np.uint8)
