"""Hybrid intensity-plus-tracks multi-target filter.

Undetected targets live on a gridded Poisson intensity; detected targets are
Bernoulli tracks. Scans are associated by belief propagation (or an exact
recursion on small problems), track coalescence is countered by an optimal
probability transfer toward the MAP assignment, and weak tracks are recycled
back into the intensity under a divergence budget.
"""

from .assoc import (
    AssociationMarginals,
    AssociationProblem,
    clustered_marginals,
    exact_marginals,
    lbp_marginals,
    lemma1_check,
    make_random_problem,
)
from .assignment import auction_assignment
from .coalescence import MapAssignment, TransferSolution, apply_transfer, map_assignment, solve_transfer
from .errors import (
    BpmtfError,
    CapacityError,
    ConfigurationError,
    ConvergenceError,
    DegenerateMeasurementError,
    DomainError,
    InvariantViolation,
    NumericalError,
)
from .experiments import grid_accuracy_experiment, standard_scenario
from .filter import (
    Estimate,
    FilterParams,
    FilterState,
    ScanRecord,
    extract_estimates,
    initialize,
    measurement_row_track,
    run_scans,
    step,
    step_member,
    validate_state,
)
from .finite_rfs import bernoulli_rfs, convolve, kl_divergence, poisson_rfs
from .gaussians import (
    GaussianDensity,
    GaussianMixture,
    kalman_predict,
    kalman_update,
    mixture_moments,
    mixture_reduce,
)
from .grid import (
    GridIntensity,
    birth_track_params,
    deposit_intensity,
    predict_intensity,
    steady_state,
    update_missed,
    zero_intensity,
)
from .metrics import ospa, summarize
from .models import (
    BirthModel,
    ModelBundle,
    MotionModel,
    Region,
    SensorModel,
    make_cv_motion,
    make_position_sensor,
    make_static_motion,
    uniform_birth,
    validate_model,
)
from .recycling import (
    RecycleDecision,
    bernoulli_poisson_kl,
    kl_subadditivity_check,
    recycle,
    select_recycle,
)
from .sim import Truth, generate_measurements, generate_scenario, generate_truth
from .tracks import (
    Track,
    build_association_problem,
    collapse_track,
    gate,
    gate_threshold,
    predict_track,
    update_detected_hypothesis,
    update_missed_hypothesis,
)

__version__ = "0.1.0"

__all__ = [
    "AssociationMarginals",
    "AssociationProblem",
    "BirthModel",
    "BpmtfError",
    "CapacityError",
    "ConfigurationError",
    "ConvergenceError",
    "DegenerateMeasurementError",
    "DomainError",
    "Estimate",
    "FilterParams",
    "FilterState",
    "GaussianDensity",
    "GaussianMixture",
    "GridIntensity",
    "InvariantViolation",
    "MapAssignment",
    "ModelBundle",
    "MotionModel",
    "NumericalError",
    "Region",
    "ScanRecord",
    "SensorModel",
    "RecycleDecision",
    "Track",
    "TransferSolution",
    "Truth",
    "apply_transfer",
    "bernoulli_poisson_kl",
    "bernoulli_rfs",
    "auction_assignment",
    "birth_track_params",
    "build_association_problem",
    "clustered_marginals",
    "collapse_track",
    "convolve",
    "deposit_intensity",
    "exact_marginals",
    "extract_estimates",
    "generate_measurements",
    "generate_scenario",
    "gate",
    "gate_threshold",
    "generate_truth",
    "grid_accuracy_experiment",
    "initialize",
    "kl_divergence",
    "kl_subadditivity_check",
    "kalman_predict",
    "kalman_update",
    "lbp_marginals",
    "lemma1_check",
    "make_cv_motion",
    "make_position_sensor",
    "make_random_problem",
    "make_static_motion",
    "map_assignment",
    "measurement_row_track",
    "mixture_moments",
    "mixture_reduce",
    "ospa",
    "poisson_rfs",
    "predict_intensity",
    "predict_track",
    "recycle",
    "run_scans",
    "select_recycle",
    "solve_transfer",
    "standard_scenario",
    "steady_state",
    "summarize",
    "step",
    "step_member",
    "uniform_birth",
    "update_detected_hypothesis",
    "update_missed",
    "update_missed_hypothesis",
    "validate_model",
    "validate_state",
    "zero_intensity",
]
