"""Splittable random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.
Sub-streams are derived from a master seed plus integer keys through
``SeedSequence.spawn_key``, so the stream for a given key tuple does not
depend on which thread (or in what order) it is consumed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_rng", "as_rng"]


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator for sub-stream ``keys`` of master ``seed``.

    >>> a = derive_rng(7, 0, 3).standard_normal()
    >>> b = derive_rng(7, 0, 3).standard_normal()
    >>> a == b
    True
    """
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError("seed and stream keys must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
