"""Deterministic derivation of stage and cell seeds from one master seed."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *parts: str) -> int:
    """Stable 63-bit seed for a named consumer of the master seed."""
    text = str(int(master)) + "|" + "|".join(parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)
