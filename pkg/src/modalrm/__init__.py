"""Modal decomposition of spacecraft relative motion.

Fundamental solutions of the linearized relative dynamics about periodic
chief orbits (Keplerian and CR3BP halo), variation of parameters on their
modal constants, and impulsive and continuous control in constants space.
"""

from .control import (
    ImpulsivePlanProblem,
    LqrPolicy,
    ManeuverPlan,
    default_lqr_weights,
    extract_plan,
    lqr_cspace,
    plan_impulsive,
    simulate_lqr,
    solve_dual_socp,
    two_burn_baseline,
)
from .cr3bp import find_periodic_orbit
from .errors import (
    ConvergenceError,
    IntegrationError,
    ModalError,
    NumericalError,
    SingularityError,
    ValidationError,
)
from .floquet import FloquetBasis, analyze_monodromy, build_modal_basis, compute_lti
from .keplerian import CWBasis, EccentricBasis, cw_constants, eccentric_constants
from .modal import ModalBasis
from .orbits import LvlhState, OrbitElements, elements_to_state, relative_state
from .periodic import PeriodicOrbit, keplerian_orbit
from .socp import solve_socp
from .vop import (
    PerturbationModel,
    propagate_constants_full,
    propagate_constants_linear,
)

__all__ = [
    "CWBasis",
    "ConvergenceError",
    "EccentricBasis",
    "FloquetBasis",
    "ImpulsivePlanProblem",
    "IntegrationError",
    "LqrPolicy",
    "LvlhState",
    "ManeuverPlan",
    "ModalBasis",
    "ModalError",
    "NumericalError",
    "OrbitElements",
    "PeriodicOrbit",
    "PerturbationModel",
    "SingularityError",
    "ValidationError",
    "analyze_monodromy",
    "build_modal_basis",
    "compute_lti",
    "cw_constants",
    "default_lqr_weights",
    "eccentric_constants",
    "elements_to_state",
    "extract_plan",
    "find_periodic_orbit",
    "keplerian_orbit",
    "lqr_cspace",
    "plan_impulsive",
    "propagate_constants_full",
    "propagate_constants_linear",
    "relative_state",
    "simulate_lqr",
    "solve_dual_socp",
    "solve_socp",
    "two_burn_baseline",
]
