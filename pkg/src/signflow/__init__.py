"""Finite-volume simulation and sign-change steering for degenerate parabolic equations on (-1, 1)."""

from .errors import (
    SignflowError,
    ConfigError,
    UnderResolvedGrid,
    InvalidCoefficient,
    InvalidBoundary,
    RegistrationRejected,
    StepRejected,
    BlowUp,
    EigenFailure,
    UnsupportedPropagation,
    SlopeFault,
    SeparationViolation,
    SignPatternMismatch,
    InvalidAmplification,
    DomainFault,
    ControllerFailure,
    SteeringFailure,
)
from .grid import (
    BoundaryKind,
    BoundarySpec,
    CoefficientField,
    CoefficientSpec,
    Degeneracy,
    Norms,
    SpatialGrid,
    StateProfile,
    build_grid,
    classify_degeneracy,
    eval_coefficient,
    l2_norm,
    natural_boundary,
    weighted_norms,
)
from .solver import (
    ControlSchedule,
    DiscreteOperator,
    NonlinearitySpec,
    SchedulePiece,
    Trajectory,
    assemble_operator,
    cubic_damping,
    dt_max,
    evolve,
    linear_decay,
    step,
    zero_nonlinearity,
)
from .spectral import EigenSystem, eigenpairs, eigenpairs_of_operator, propagate_mild
from .zeros import (
    CurveStatus,
    CurveTrace,
    SignChangePattern,
    TargetSpec,
    curve_ode_rhs,
    detect_sign_changes,
    gap_functional,
    target_distance,
    track_curves,
)
from .synthesis import (
    DatumPrescription,
    PreservingPlan,
    amplification_control,
    build_initial_datum,
    preserving_controller,
    shape_control,
)
from .climate import BudykoParams, SellersParams, make_ebm_nonlinearity
from .steering import SteeringConfig, SteeringFamily, calibrate_speed_constant, steer_diffusion, steer_full

__version__ = "0.1.0"

__all__ = [
    "SignflowError",
    "ConfigError",
    "UnderResolvedGrid",
    "InvalidCoefficient",
    "InvalidBoundary",
    "RegistrationRejected",
    "StepRejected",
    "BlowUp",
    "EigenFailure",
    "UnsupportedPropagation",
    "SlopeFault",
    "SeparationViolation",
    "SignPatternMismatch",
    "InvalidAmplification",
    "DomainFault",
    "ControllerFailure",
    "SteeringFailure",
    "BoundaryKind",
    "BoundarySpec",
    "CoefficientField",
    "CoefficientSpec",
    "Degeneracy",
    "Norms",
    "SpatialGrid",
    "StateProfile",
    "build_grid",
    "classify_degeneracy",
    "eval_coefficient",
    "l2_norm",
    "natural_boundary",
    "weighted_norms",
    "ControlSchedule",
    "DiscreteOperator",
    "NonlinearitySpec",
    "SchedulePiece",
    "Trajectory",
    "assemble_operator",
    "cubic_damping",
    "dt_max",
    "evolve",
    "linear_decay",
    "step",
    "zero_nonlinearity",
    "EigenSystem",
    "eigenpairs",
    "eigenpairs_of_operator",
    "propagate_mild",
    "CurveStatus",
    "CurveTrace",
    "SignChangePattern",
    "TargetSpec",
    "curve_ode_rhs",
    "detect_sign_changes",
    "gap_functional",
    "target_distance",
    "track_curves",
    "DatumPrescription",
    "PreservingPlan",
    "amplification_control",
    "build_initial_datum",
    "preserving_controller",
    "shape_control",
    "BudykoParams",
    "SellersParams",
    "make_ebm_nonlinearity",
    "SteeringConfig",
    "SteeringFamily",
    "calibrate_speed_constant",
    "steer_diffusion",
    "steer_full",
]
