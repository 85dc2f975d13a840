"""Deterministic seed derivation for independent RNG streams.

Every source of randomness (weight init, dropout, split sampling, graph
generation) gets its own stream derived from a master seed plus a purpose
tag, so adding a method or a gamma value to an experiment never perturbs
the random draws of the others.

Derivation: SHA-256 over ``"<master>|<tag1>|<tag2>|..."`` (UTF-8), first
8 bytes big-endian as an unsigned integer. That integer seeds
``numpy.random.default_rng``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *tags: int | str) -> int:
    """Collapse (master seed, purpose tags) into a 64-bit stream seed."""
    key = "|".join([str(int(master))] + [str(t) for t in tags])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream(master: int, *tags: int | str) -> np.random.Generator:
    """A fresh generator for the stream named by ``tags``."""
    return np.random.default_rng(derive_seed(master, *tags))
