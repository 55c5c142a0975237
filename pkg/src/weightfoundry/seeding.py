"""Deterministic seed derivation so every random stream is reproducible."""
from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from any tuple of labels and numbers."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def hash_bucket(key: str, buckets: int = 10) -> int:
    """Stable bucket assignment for dataset splits."""
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % buckets
