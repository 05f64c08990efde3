"""Competitive-equilibrium solvers for linear and quasi-linear Fisher markets."""
from .adaptive import AdaptiveConfig, ExactResult, adaptive_solve, k_bound
from .apm import ApmParams, ApmState, SolveReport, apm_params, apm_solve, apm_step, approx_allocation
from .baselines import BaselineConfig, proportional_response_solve, tatonnement_solve
from .certify import Certificate, build_network, exact_allocation, max_flow, test_optimality
from .errors import (
    DegenerateMatrix,
    DimensionMismatch,
    EpsilonOutOfRange,
    FisherMarketError,
    MissingGood,
    NonFiniteIterate,
    NonpositiveBudget,
    NotCertified,
)
from .generate import Dist, GenSpec, generate
from .market import (
    Kind,
    MarketInstance,
    PriceBounds,
    eval_F,
    eval_F_delta,
    grad_F_delta,
    make_instance,
    price_bounds,
    project_box,
    subgrad_F,
    validate_instance,
)
from .recovery import IndexFamily, classify, gap_Delta, recover, relaxed_active_sets, solve_classes

__version__ = "0.1.0"
