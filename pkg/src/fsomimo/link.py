"""Turbulent FSO link: transmission, combining and classical detection.

Every user sends ``N_t`` copies of its symbol with the power split evenly
across apertures, so aperture ``i`` observes

    y_i = (eta / N_t) * sum_j I_ij * x + n_i

with ``eta`` the photodetector conversion gain and ``n_i`` circularly
symmetric complex Gaussian noise of total variance ``sigma^2``.

Functions accept leading batch axes: a symbol array of shape ``(...,)``
pairs with gains of shape ``(..., n_rx, n_tx)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from fsomimo.modem import Constellation

__all__ = [
    "Combiner",
    "LinkConfig",
    "noise_variance_from_es_n0",
    "faded_signal",
    "complex_noise",
    "transmit",
    "superpose_interference",
    "egc_combine",
    "sc_select",
    "effective_gain",
    "combined_noise_variance",
    "ml_detect",
    "ml_detect_egc",
    "ml_detect_sc",
    "blind_gain_estimate",
    "allocate_best_user",
]


class Combiner(str, enum.Enum):
    EGC = "egc"
    SC = "sc"


def noise_variance_from_es_n0(es_n0_db: float) -> float:
    """Total complex noise variance ``N0`` for unit symbol energy.

    ``+inf`` dB maps to a noiseless link.
    """
    if np.isposinf(es_n0_db):
        return 0.0
    return float(10.0 ** (-es_n0_db / 10.0))


@dataclass(frozen=True)
class LinkConfig:
    """Physical link constants.

    Parameters
    ----------
    conversion_gain : float
        Photodetector responsivity (optical-to-electrical gain).
    n_tx, n_rx, n_users : int
        Aperture and user counts.
    noise_variance : float
        Total complex noise variance ``sigma^2``; zero gives a noiseless link.
    """

    conversion_gain: float = 1.0
    n_tx: int = 1
    n_rx: int = 1
    n_users: int = 1
    noise_variance: float = 0.1

    def __post_init__(self) -> None:
        if not self.conversion_gain > 0:
            raise ValueError("conversion_gain must be positive")
        if not self.noise_variance >= 0 or not np.isfinite(self.noise_variance):
            raise ValueError("noise_variance must be finite and non-negative")
        if min(self.n_tx, self.n_rx, self.n_users) < 1:
            raise ValueError("aperture and user counts must be >= 1")

    def at_es_n0(self, es_n0_db: float) -> "LinkConfig":
        return replace(self, noise_variance=noise_variance_from_es_n0(es_n0_db))


def faded_signal(x, gains, cfg: LinkConfig) -> np.ndarray:
    """Noiseless per-aperture contribution of symbol(s) ``x``."""
    g = np.asarray(gains, dtype=float)
    row = g.sum(axis=-1) * (cfg.conversion_gain / g.shape[-1])
    return row * np.asarray(x, dtype=complex)[..., None]


def complex_noise(shape, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly symmetric Gaussian noise, ``variance / 2`` per component."""
    s = np.sqrt(variance / 2.0)
    return s * rng.standard_normal(shape) + 1j * (s * rng.standard_normal(shape))


def transmit(x, gains, cfg: LinkConfig, rng: np.random.Generator) -> np.ndarray:
    """Received vector(s) for one user's symbol(s) ``x``.

    Returns an array of shape ``(..., n_rx)``.
    """
    y = faded_signal(x, gains, cfg)
    return y + complex_noise(y.shape, cfg.noise_variance, rng)


def superpose_interference(contributions, cfg: LinkConfig, rng: np.random.Generator) -> np.ndarray:
    """Sum all users' noiseless contributions and add one noise draw.

    Parameters
    ----------
    contributions : array_like or sequence of array_like
        Either an array of shape ``(..., n_users, n_rx)`` or a sequence of
        per-user arrays of identical shape ``(..., n_rx)``.

    Raises
    ------
    ValueError
        If per-user vectors differ in length.
    """
    if isinstance(contributions, (list, tuple)):
        shapes = {np.shape(c) for c in contributions}
        if len(shapes) != 1:
            raise ValueError(f"received vectors have mismatched shapes: {sorted(shapes)}")
        total = np.sum([np.asarray(c, dtype=complex) for c in contributions], axis=0)
    else:
        total = np.asarray(contributions, dtype=complex).sum(axis=-2)
    return total + complex_noise(total.shape, cfg.noise_variance, rng)


def egc_combine(y) -> np.ndarray | complex:
    """Equal gain combining: for a real channel this is a plain sum."""
    y = np.asarray(y, dtype=complex)
    if y.ndim == 0 or y.shape[-1] == 0:
        raise ValueError("cannot combine an empty received vector")
    out = y.sum(axis=-1)
    return complex(out) if out.ndim == 0 else out


def sc_select(y, gains):
    """Selection combining.

    Picks the aperture with the largest squared row-gain sum (ties go to
    the lowest index).

    Returns
    -------
    p : int or ndarray of int
        Selected aperture.
    y_p : complex or ndarray of complex
        Sample observed on that aperture.
    """
    y = np.asarray(y, dtype=complex)
    metric = np.asarray(gains, dtype=float).sum(axis=-1) ** 2
    p = np.argmax(metric, axis=-1)
    y_p = np.take_along_axis(y, np.asarray(p)[..., None], axis=-1)[..., 0]
    if y_p.ndim == 0:
        return int(p), complex(y_p)
    return p, y_p


def effective_gain(gains, combiner: Combiner, cfg: LinkConfig):
    """Real gain seen by the detector after combining.

    EGC sums every link; SC keeps only the row of the selected aperture.
    """
    g = np.asarray(gains, dtype=float)
    rows = g.sum(axis=-1)
    scale = cfg.conversion_gain / g.shape[-1]
    if Combiner(combiner) is Combiner.EGC:
        out = scale * rows.sum(axis=-1)
    else:
        out = scale * rows.max(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def combined_noise_variance(cfg: LinkConfig, combiner: Combiner) -> float:
    """Noise variance of the combined sample."""
    if Combiner(combiner) is Combiner.EGC:
        return cfg.noise_variance * cfg.n_rx
    return cfg.noise_variance


def ml_detect(y, gain, c: Constellation):
    """``argmin_k |y - gain * c_k|^2`` with ties going to the lowest ``k``."""
    y = np.asarray(y, dtype=complex)
    g = np.asarray(gain, dtype=float)
    d = np.abs(y[..., None] - g[..., None] * c.points) ** 2
    out = np.argmin(d, axis=-1)
    return int(out) if out.ndim == 0 else out


def ml_detect_egc(y, gains, cfg: LinkConfig, c: Constellation):
    """ML decision on an EGC output given the full ``(n_rx, n_tx)`` gains."""
    return ml_detect(y, effective_gain(gains, Combiner.EGC, cfg), c)


def ml_detect_sc(y_p, gains_row, cfg: LinkConfig, c: Constellation):
    """ML decision on the SC output given the selected aperture's ``n_tx`` gains."""
    row = np.asarray(gains_row, dtype=float)
    g = (cfg.conversion_gain / row.shape[-1]) * row.sum(axis=-1)
    return ml_detect(y_p, g, c)


def blind_gain_estimate(block, noise_variance: float):
    """Second-moment gain estimate from a block of combined samples.

    With unit-energy symbols ``E|y|^2 = g^2 + sigma^2``, so
    ``g_hat = sqrt(max(mean|y|^2 - sigma^2, 0))``.  The mean is taken over
    the last axis.

    Raises
    ------
    ValueError
        If the block holds fewer than two samples.
    """
    b = np.asarray(block, dtype=complex)
    if b.ndim == 0 or b.shape[-1] < 2:
        raise ValueError("blind estimation needs a block of at least 2 samples")
    power = np.mean(b.real**2 + b.imag**2, axis=-1)
    out = np.sqrt(np.maximum(power - noise_variance, 0.0))
    return float(out) if out.ndim == 0 else out


def allocate_best_user(gains, combiner: Combiner, cfg: LinkConfig):
    """User with the largest post-combining gain (ties to the lowest index).

    ``gains`` has shape ``(..., n_users, n_rx, n_tx)``.
    """
    eff = effective_gain(gains, combiner, cfg)
    out = np.argmax(np.asarray(eff), axis=-1)
    return int(out) if np.ndim(out) == 0 else out
