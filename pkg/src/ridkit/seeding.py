"""Deterministic sub-seed derivation.

Every pipeline stage gets its own RNG stream derived from the master seed
and a role tag, so stages can be rerun or reordered without perturbing each
other's draws: sub-seed = first 8 bytes of sha256("{seed}:{role}").
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, role: str) -> int:
    digest = hashlib.sha256(f"{int(master)}:{role}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
