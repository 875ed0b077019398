"""Quasistatic core-shell-matrix structures: layer-potential solutions, spectra and resonance sweeps."""

from .calr import (
    BracketError,
    SweepReport,
    classify,
    energy,
    estimate_critical_radius,
    fit_slope,
    potential,
    resonant_subsequence,
    solve,
    sweep,
)
from .common import (
    AccuracyWarning,
    EnergyResult,
    LayerDensities,
    ResonanceError,
    TruncationError,
    UnsupportedRegime,
)
from .np_spectrum import np_eigenpairs_2d, np_eigenpairs_3d, spectral_gap_asymptotics
from .sources import ModeCoefficients, SourceError, SourceSpec, exterior_coefficients
from .structure import (
    ConfigError,
    ContrastPair,
    StructureConfig,
    bounded_safe_radius,
    contrast_parameters,
    critical_radius,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyWarning", "BracketError", "ConfigError", "ContrastPair", "EnergyResult",
    "LayerDensities", "ModeCoefficients", "ResonanceError", "SourceError", "SourceSpec",
    "StructureConfig", "SweepReport", "TruncationError", "UnsupportedRegime",
    "bounded_safe_radius", "classify", "contrast_parameters", "critical_radius", "energy",
    "estimate_critical_radius", "exterior_coefficients", "fit_slope", "np_eigenpairs_2d",
    "np_eigenpairs_3d", "potential", "resonant_subsequence", "solve", "spectral_gap_asymptotics",
    "sweep",
]
