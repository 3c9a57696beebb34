"""Susceptibility-based detection of dissipative phase transitions.

Steady states of Lindblad master equations, fidelity and trace-distance
susceptibilities between neighbouring steady states, and finite-size /
nonlinearity scaling of their extrema.
"""

from importlib.metadata import PackageNotFoundError, version

from .liouville import (DegenerateSteadyState, LindbladModel, NotConverged, ResidualTooLarge,
                        StepInstability, Superoperator, build_liouvillian, liouvillian_spectrum,
                        steady_state_ed, steady_state_evolve)
from .metrics import (fidelity, fidelity_susceptibility, trace_distance,
                      trace_distance_susceptibility)
from .scaling import (BoundaryExtremum, ScalingFit, SusceptibilityCurve, fit_linear_extrapolate,
                      fit_power_law, locate_extremum, sweep)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

__all__ = [
    "BoundaryExtremum", "DegenerateSteadyState", "LindbladModel", "NotConverged",
    "ResidualTooLarge", "ScalingFit", "StepInstability", "Superoperator", "SusceptibilityCurve",
    "__version__", "build_liouvillian", "fidelity", "fidelity_susceptibility",
    "fit_linear_extrapolate", "fit_power_law", "liouvillian_spectrum", "locate_extremum",
    "steady_state_ed", "steady_state_evolve", "sweep", "trace_distance",
    "trace_distance_susceptibility",
]
