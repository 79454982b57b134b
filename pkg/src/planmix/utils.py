"""Small shared helpers."""

from __future__ import annotations

import hashlib


def stable_hash(*parts: object, bits: int = 64) -> int:
    """Deterministic cross-process hash of the given parts.

    Python's builtin hash() is salted per process; seeds, stub frequencies
    and scripted-response keys all need a hash that is stable across runs.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[: bits // 8], "big")


def stable_digest(text: str) -> str:
    """Hex digest used to key scripted planner responses."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
