"""Free-space optical MIMO link simulation with learned detectors.

Submodules
----------
turbulence
    Gamma-Gamma intensity sampling, density and channel draws.
modem
    QAM constellations, one-hot encodings and energy normalization.
link
    Faded transmission, noise, EGC/SC combining and ML detection.
neuralnet
    Small numpy MLP engine with backprop and Adam.
pipelines
    Receiver-only and end-to-end training, SER evaluation.
harness
    Config parsing, experiment commands, CSV/SVG export.
"""

__version__ = "0.1.0"

from fsomimo.turbulence import (
    STRONG,
    MODERATE,
    WEAK,
    REGIMES,
    TurbulenceRegime,
    ChannelMatrix,
    sample_gamma_gamma,
    gamma_gamma_pdf,
    gamma_gamma_cdf,
    scintillation_index,
    draw_channel,
)
from fsomimo.modem import Constellation, qam_constellation, one_hot, modulate, normalize_constellation
from fsomimo.link import LinkConfig, Combiner

__all__ = [
    "STRONG",
    "MODERATE",
    "WEAK",
    "REGIMES",
    "TurbulenceRegime",
    "ChannelMatrix",
    "sample_gamma_gamma",
    "gamma_gamma_pdf",
    "gamma_gamma_cdf",
    "scintillation_index",
    "draw_channel",
    "Constellation",
    "qam_constellation",
    "one_hot",
    "modulate",
    "normalize_constellation",
    "LinkConfig",
    "Combiner",
]
