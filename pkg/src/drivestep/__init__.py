"""State estimation for hybrid driving-stepping quadruped locomotion.

Wheel-aware leg kinematics, a contact trust model and a linear Kalman filter
that splits body motion into stepping and driving contributions, plus a
synthetic kinematic oracle and a scenario-runner CLI.
"""

from .estimator import (
    Estimate,
    FilterState,
    NoiseParams,
    NonFiniteError,
    SensorFrame,
    SingularInnovationError,
    StateEstimator,
)
from .gait import ContactState, GaitSchedule, contact_schedule
from .kinematics import (
    LEG_NAMES,
    BaseAttitude,
    ContactKinematics,
    LegGeometry,
    LegJointState,
    NearSingularError,
    RobotModel,
    UnreachableError,
    contact_position,
    contact_velocity,
    effective_radius,
    leg_ik,
    leg_jacobian,
)
from .sim import (
    IkFailureError,
    NoiseSpec,
    Scenario,
    SlipEvent,
    Terrain,
    estimator_for_scenario,
    generate,
    metrics,
    run_estimator,
)
from .trust import TrustParams, covariance_gain, height_trust, phase_trust, trust_matrix

__version__ = "1.0.0"

__all__ = [
    "BaseAttitude",
    "ContactKinematics",
    "ContactState",
    "Estimate",
    "FilterState",
    "GaitSchedule",
    "IkFailureError",
    "LEG_NAMES",
    "LegGeometry",
    "LegJointState",
    "NearSingularError",
    "NoiseParams",
    "NoiseSpec",
    "NonFiniteError",
    "RobotModel",
    "Scenario",
    "SensorFrame",
    "SingularInnovationError",
    "SlipEvent",
    "StateEstimator",
    "Terrain",
    "TrustParams",
    "UnreachableError",
    "contact_position",
    "contact_schedule",
    "contact_velocity",
    "covariance_gain",
    "effective_radius",
    "estimator_for_scenario",
    "generate",
    "height_trust",
    "leg_ik",
    "leg_jacobian",
    "metrics",
    "phase_trust",
    "run_estimator",
    "trust_matrix",
]
