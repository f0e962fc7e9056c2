"""Deterministic RNG derivation.

All randomness in the pipeline flows from one root seed. Sub-streams are
named: ``derive_seed(root, "walks", node, walk_index)`` gives a stable
64-bit seed regardless of platform or process, so parallel work can be
re-seeded per unit without losing reproducibility.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *parts: object) -> int:
    """Derive a 64-bit sub-seed from a root seed and a stream name."""
    name = ":".join(str(p) for p in (root, *parts))
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(root: int, *parts: object) -> np.random.Generator:
    """Generator for the named sub-stream of ``root``."""
    return np.random.default_rng(derive_seed(root, *parts))
