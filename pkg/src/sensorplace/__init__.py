"""Bi-objective pressure-sensor placement for water distribution networks."""

from .errors import (ConvergenceError, InfeasibleError, InputError, NetworkParseError,
                     NumericalError, SensorPlaceError, SingularInformationError,
                     ValidationError)
from .network import Network, load_network, parse_network
from .pareto import brute_force_pareto, chebyshev_front
from .problem import SensorProblem, build_problem
from .roundswap import convex_heuristic

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "InfeasibleError", "InputError", "NetworkParseError",
    "NumericalError", "SensorPlaceError", "SingularInformationError", "ValidationError",
    "Network", "load_network", "parse_network", "brute_force_pareto", "chebyshev_front",
    "SensorProblem", "build_problem", "convex_heuristic",
]
