"""Deterministic random-stream plumbing.

Every sampler in the toolkit accepts either a 64-bit master seed or a ready
``numpy.random.Generator``.  Streams are counter-based (Philox) and keyed by
``(master_seed, *key)`` through ``SeedSequence`` spawn keys, so any partition
of work across workers that respects the keying reproduces the single-threaded
result bit for bit.  Within one stream, draws are laid out in a fixed
(path, node) order, which makes the draw position a pure function of
(path index, node index).
"""

from __future__ import annotations

import numpy as np

SeedLike = "int | np.random.Generator"


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream keyed by (master_seed, *key)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def normalize_rng(seed_or_rng) -> np.random.Generator:
    """Accept a master seed or a Generator; return a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return stream(int(seed_or_rng))
