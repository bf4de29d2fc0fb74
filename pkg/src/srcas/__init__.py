"""Sampled-data steady-state, small-signal and simulation tools for the
audiosusceptibility of a series resonant converter."""

from .core import (BelowResonanceError, ConverterParams, DerivedParams, ParameterError,
                   StateVector, SubintervalTimes, derive_params, experimental_design,
                   from_design, nominal_design)
from .small_signal import (as_resonance_frequency, as_transfer_function, build_full_model,
                           build_simplified_model, evaluate_gain)
from .steady_state import OperatingPoint, solve_cyclic_steady_state

__all__ = [
    "BelowResonanceError", "ConverterParams", "DerivedParams", "ParameterError", "StateVector",
    "SubintervalTimes", "derive_params", "experimental_design", "from_design", "nominal_design",
    "as_resonance_frequency", "as_transfer_function", "build_full_model",
    "build_simplified_model", "evaluate_gain", "OperatingPoint", "solve_cyclic_steady_state",
]
__version__ = "0.1.0"
