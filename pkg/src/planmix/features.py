"""Binary container for frame features, codebooks, and embeddings.

Byte layout (little-endian throughout)::

    offset  size  field
    0       4     magic  b"PMFC"
    4       4     version (u32, currently 1)
    8       4     rows N (u32)
    12      4     dim D (u32)
    16      8     frame_rate in Hz (f64; 0.0 for rate-less data, e.g. codebooks)
    24      4*N*D row-major float32 payload

A JSON sidecar ``<path>.json`` carries the same metadata plus free-form
extras so the files stay inspectable without this library.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"PMFC"
VERSION = 1
_HEADER = struct.Struct("<4sIIId")


def write_features(
    path: str | Path,
    data: np.ndarray,
    frame_rate: float = 0.0,
    extra: dict | None = None,
) -> None:
    """Write a (N, D) float array with its JSON sidecar."""
    array = np.ascontiguousarray(np.asarray(data, dtype=np.float32))
    if array.ndim != 2:
        raise FormatError("feature data must be 2-D (rows, dim)")
    n, d = array.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d, float(frame_rate)))
        fh.write(array.tobytes())
    sidecar = {"rows": n, "dim": d, "frame_rate": float(frame_rate)}
    if extra:
        sidecar.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def read_features(path: str | Path) -> tuple[np.ndarray, float]:
    """Read a container; returns (float32 array of shape (N, D), frame_rate)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("feature container too small for its header")
    magic, version, n, d, frame_rate = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise FormatError(f"container is {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d).copy()
    return data, frame_rate
