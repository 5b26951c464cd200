"""Weights file: JSON manifest plus a raw little-endian float32 blob.

Layout: magic b"SFUW", u32 manifest length (little-endian), UTF-8 JSON,
then the concatenated tensor data. The manifest lists name/shape/offset for
every tensor (trainable parameters and running batchnorm statistics alike)
and carries arbitrary extra metadata such as the model description.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SFUW"


def save_tensors(path, tensors: list[tuple[str, np.ndarray]], extra: dict | None = None) -> None:
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors:
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": "float32",
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = dict(extra or {})
    manifest["format"] = 1
    manifest["tensors"] = entries
    payload = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for raw in blobs:
            fh.write(raw)


def load_tensors(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (manifest, name -> float32 array)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a weights file (bad magic {magic!r})")
        (length,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(length).decode("utf-8"))
        blob = fh.read()
    tensors = {}
    for entry in manifest["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(blob[start : start + nbytes], dtype="<f4")
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
    return manifest, tensors
