"""Multifractal spectral width of audio and synthetic time series."""

from .core import (
    AnalysisConfig,
    FluctuationSurface,
    HurstSpectrum,
    Series,
    SingularitySpectrum,
    analyze,
    analyze_with_fallback,
    build_profile,
    fluctuation_function,
    hurst_exponents,
    local_fluctuation,
    segment_bounds,
    singularity_spectrum,
)
from .surrogate import shuffle, shuffle_test

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "FluctuationSurface",
    "HurstSpectrum",
    "Series",
    "SingularitySpectrum",
    "analyze",
    "analyze_with_fallback",
    "build_profile",
    "fluctuation_function",
    "hurst_exponents",
    "local_fluctuation",
    "segment_bounds",
    "shuffle",
    "shuffle_test",
    "singularity_spectrum",
]
