"""Seeded, named random substreams.

All randomness in the package flows from a single root seed through
counter-based Philox streams keyed by (label, replica).  Replicas can run
concurrently and be merged in index order without affecting results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, label: str, replica: int = 0) -> np.random.Generator:
    """Generator for the (label, replica) substream of a root seed."""
    if replica < 0:
        raise ValueError("replica index must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(_label_key(label), int(replica)))
    return np.random.Generator(np.random.Philox(ss))
