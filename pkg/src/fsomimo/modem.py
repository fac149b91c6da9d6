"""QAM constellations, one-hot encodings and energy normalization.

All constellations, whether from the square-QAM mapper or from a learned
transmitter, are scaled to unit average symbol energy so that Es = 1 and
Es/N0 is set through the noise variance alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Constellation",
    "qam_constellation",
    "one_hot",
    "modulate",
    "normalize_constellation",
    "nearest_point",
]


@dataclass(frozen=True)
class Constellation:
    """``order`` complex points with unit average energy."""

    points: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.points, dtype=complex).reshape(-1)
        if p.size < 2:
            raise ValueError("a constellation needs at least 2 points")
        if not np.all(np.isfinite(p)):
            raise ValueError("constellation points must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def min_distance(self) -> float:
        d = np.abs(self.points[:, None] - self.points[None, :])
        return float(d[~np.eye(self.order, dtype=bool)].min())


def _gray(n: int) -> np.ndarray:
    k = np.arange(n)
    return k ^ (k >> 1)


def qam_constellation(order: int) -> Constellation:
    """Square M-QAM with Gray-ordered axes and unit average energy.

    Symbol index ``k`` is split into an in-phase part (high bits) and a
    quadrature part (low bits); each part selects a PAM level through a
    Gray code, so adjacent levels differ in one bit.

    Parameters
    ----------
    order : int
        A perfect square >= 4 (4, 16, 64, ...).

    Raises
    ------
    ValueError
        If ``order`` is not a supported square.
    """
    side = math.isqrt(order) if isinstance(order, (int, np.integer)) and order > 0 else 0
    if order < 4 or side * side != order or side & (side - 1):
        raise ValueError(f"unsupported QAM order {order!r}; need a square power of two >= 4")
    levels = 2 * np.arange(side) - (side - 1)
    # position of each Gray label along an axis
    pos = np.empty(side, dtype=int)
    pos[_gray(side)] = np.arange(side)
    k = np.arange(order)
    i_lab, q_lab = k // side, k % side
    raw = levels[pos[i_lab]] + 1j * levels[pos[q_lab]]
    return normalize_constellation(raw)


def one_hot(index, order: int) -> np.ndarray:
    """One-hot row(s) of length ``order``; ``index`` may be an int or array.

    >>> one_hot(2, 4)
    array([0., 0., 1., 0.])
    """
    idx = np.asarray(index)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("index must be integer")
    if np.any((idx < 0) | (idx >= order)):
        raise ValueError(f"index out of range [0, {order})")
    return np.eye(order)[idx]


def modulate(index, c: Constellation):
    """Constellation point(s) for symbol index(es)."""
    idx = np.asarray(index)
    if np.any((idx < 0) | (idx >= c.order)):
        raise ValueError(f"symbol index out of range [0, {c.order})")
    out = c.points[idx]
    return complex(out) if np.ndim(out) == 0 else out


def normalize_constellation(raw_points) -> Constellation:
    """Scale ``raw_points`` by one positive factor to unit average energy.

    Raises
    ------
    ValueError
        If every point is zero.
    """
    p = np.asarray(raw_points, dtype=complex).reshape(-1)
    energy = np.mean(np.abs(p) ** 2)
    if not energy > 0:
        raise ValueError("cannot normalize an all-zero constellation")
    return Constellation(p / np.sqrt(energy))


def nearest_point(y, c: Constellation) -> np.ndarray:
    """Index of the closest constellation point (ties to the lowest index)."""
    y = np.asarray(y, dtype=complex)
    return np.argmin(np.abs(y[..., None] - c.points) ** 2, axis=-1)
