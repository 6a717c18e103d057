"""First-order methods for Wasserstein barycenters of Gaussian measures."""

from .estimators import BuresBarycenter
from .exceptions import (
    BuresError,
    DatasetError,
    DegenerateFit,
    DimensionMismatch,
    ExpNotAdmissible,
    InvalidSchedule,
    NonConvergence,
    NotPsd,
    NotRegular,
    NotSymmetric,
    ScheduleExhausted,
    SingularMatrix,
)
from .geometry import (
    AffineMap,
    BuresDistribution,
    GaussianMeasure,
    TangentMap,
    exp_map,
    generalized_geodesic_point,
    geodesic_point,
    log_map,
    transport_map,
    w2_distance,
    w2_distance_sq,
)
from .io import read_dataset, read_measure, write_dataset
from .schedules import StepSchedule, parse_schedule, step_size
from .solvers import (
    SolverResult,
    SolverTrace,
    averaged_sgd,
    barycenter,
    gd,
    gradient,
    objective,
    sgd,
    sgd_with_replacement,
    variance,
)

__version__ = "0.1.0"
