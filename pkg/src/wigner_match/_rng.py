"""Named, reproducible random streams.

Every stochastic stage of the pipeline draws from its own generator,
derived from the master seed and a tuple of stage tags.  Two streams with
different tags are statistically independent, and the derivation is stable
across platforms and runs.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 63) - 1


def _tag_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK
    digest = hashlib.blake2s(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & _MASK


def seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    """SeedSequence for the stream named by ``tags`` under ``seed``."""
    return np.random.SeedSequence([int(seed) & _MASK] + [_tag_int(t) for t in tags])


def stream(seed: int, *tags) -> np.random.Generator:
    """Generator for the stream named by ``tags`` under ``seed``."""
    return np.random.default_rng(seed_sequence(seed, *tags))
