"""Wirtinger Flow and Incremental Wirtinger Flow for Poisson phase retrieval
with a known background."""
from .errors import (
    DegenerateEnsembleError,
    ExcludedDirectionError,
    InvalidParameterError,
    OutOfTheoryRangeError,
    PoissonWFError,
    ShapeError,
    SingularEvaluationError,
)
from .measurement import (
    MeasurementEnsemble,
    ObservationSet,
    build_gaussian_observations,
    build_observations,
    generate_measurements,
    generate_signal,
    sample_background,
    sample_poisson,
)
from .objective import (
    Constant,
    FisherInfo,
    Heuristic,
    ModelKind,
    align_and_distance,
    distance,
    gradient,
    gradient_single,
    nrmse,
    objective,
    parse_rule,
    step_size,
)
from .rng import RngStream
from .solvers import OraclePerturbation, PowerSpectral, SolverConfig, SolverTrace, initialize, iwf_solve, wf_solve
from .theory import (
    CurvatureConstants,
    ProbeReport,
    curvature_constants,
    empirical_concentration,
    empirical_curvature,
    empirical_gradient_lipschitz,
    empirical_smoothness,
    smoothness_constant,
)

__version__ = "0.1.0"
