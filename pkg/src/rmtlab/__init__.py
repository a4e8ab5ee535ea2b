"""Desk-scale laboratory for local spectral statistics of Wigner matrices.

Builds symmetric and hermitian Wigner ensembles, checks local semicircle
behaviour, eigenvector delocalization, level repulsion and sine-kernel
correlations by Monte Carlo, and simulates Dyson Brownian motion together
with the local relaxation flow.
"""

__version__ = "0.1.0"

from rmtlab.errors import (
    ConfigurationError,
    DomainError,
    NumericalError,
    StiffnessError,
    TuningError,
    CFLError,
)
from rmtlab.ensembles import EntryDistribution, EnsembleConfig, WignerMatrix, sample_wigner
from rmtlab.spectral import Spectrum, eigen_decompose

__all__ = [
    "ConfigurationError",
    "DomainError",
    "NumericalError",
    "StiffnessError",
    "TuningError",
    "CFLError",
    "EntryDistribution",
    "EnsembleConfig",
    "WignerMatrix",
    "sample_wigner",
    "Spectrum",
    "eigen_decompose",
]
