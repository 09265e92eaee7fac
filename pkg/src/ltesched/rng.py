"""Labeled PRNG streams derived from one master seed.

Every random purpose in a run (placement, mobility, fading, ...) gets its
own generator keyed by (seed, crc32(label), index).  Adding a new stream
later never perturbs the draws of existing ones, which keeps seeded runs
bit-reproducible across versions.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Return the generator for one named stream of a master seed."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = zlib.crc32(label.encode("ascii"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, key, index))))
