"""Deterministic seed derivation.

All randomness in the toolkit flows from one root seed.  Sub-seeds are
derived by hashing the root seed together with a string label (subcommand
name, clip id, ...) through BLAKE2b, so independent pipeline stages stay
reproducible when re-run in isolation.  Generators are numpy PCG64, a named
portable algorithm: the same (seed, draw sequence) yields the same values on
any platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, *labels: str) -> int:
    """64-bit sub-seed for the given label chain."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(label.encode())
    return int.from_bytes(h.digest(), "little")


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))
