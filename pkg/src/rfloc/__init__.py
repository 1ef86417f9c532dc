"""Relative positioning from RF signals in GPS-denied settings.

Doppler range estimation, TDOA hyperbolic emitter localization, 2D/3D
trilateration, the two-step team relative-position pipeline, and a forward
scenario simulator with brute-force oracles to verify every solve.
"""

__version__ = "0.1.0"

from . import errors
from .doppler import DopplerRange, DopplerReading, doppler_distance, doppler_shift
from .geometry import (
    DirectionVector,
    Point,
    average_direction,
    direction_unit,
    distance,
    renormalize,
)
from .simulate import (
    ArrivalSet,
    DistanceMatrix,
    Scenario,
    perturb_arrivals,
    simulate_arrivals,
    true_distance_matrix,
)
from .solver import (
    SolveResult,
    SolverOptions,
    finite_difference_jacobian,
    gauss_newton,
    grid_search,
)
from .tdoa import (
    RangeDelta,
    RangeDifferenceSet,
    arrival_deltas,
    combined_direction,
    hyperbolic_jacobian,
    hyperbolic_objective,
    hyperbolic_residuals,
    locate_emitter_2d,
    locate_emitter_3d,
)
from .trilat import (
    TrilaterationProblem,
    team_relative_position,
    trilaterate_2d,
    trilaterate_3d,
    trilaterate_lsq,
    trilateration_jacobian,
    trilateration_objective,
    trilateration_residuals,
)

__all__ = [
    "__version__",
    "errors",
    "Point",
    "DirectionVector",
    "distance",
    "direction_unit",
    "average_direction",
    "renormalize",
    "DopplerReading",
    "DopplerRange",
    "doppler_shift",
    "doppler_distance",
    "Scenario",
    "ArrivalSet",
    "DistanceMatrix",
    "true_distance_matrix",
    "simulate_arrivals",
    "perturb_arrivals",
    "SolverOptions",
    "SolveResult",
    "gauss_newton",
    "finite_difference_jacobian",
    "grid_search",
    "RangeDelta",
    "RangeDifferenceSet",
    "arrival_deltas",
    "hyperbolic_residuals",
    "hyperbolic_jacobian",
    "hyperbolic_objective",
    "locate_emitter_2d",
    "locate_emitter_3d",
    "combined_direction",
    "TrilaterationProblem",
    "trilateration_residuals",
    "trilateration_jacobian",
    "trilateration_objective",
    "trilaterate_2d",
    "trilaterate_3d",
    "trilaterate_lsq",
    "team_relative_position",
]
