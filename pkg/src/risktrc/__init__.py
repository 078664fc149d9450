"""Entropic risk (ERM) and EVaR optimization of total reward in transient MDPs."""

from .benchmarks import (
    ChainParams,
    GamblersRuinParams,
    InitialDistribution,
    analytic_chain_erm,
    gamblers_ruin,
    nested_cvar_chain_values,
    random_transient_mdp,
    single_state_chain,
)
from .erm import (
    SolveReport,
    finite_horizon_solve,
    lp_solve,
    policy_iteration,
    policy_values,
    risk_neutral_solve,
    solve_erm,
    value_iteration,
)
from .errors import (
    InvalidModelError,
    ModelFormatError,
    NotTransientError,
    RiskTrcError,
    UnboundedPolicyError,
    UnboundedRiskError,
)
from .evar import EvarSolution, build_beta_grid, evar_solve, grid_error_audit
from .model import SINK, DecisionRule, TransientMdp, discount_to_trc, validate_model
from .modelio import read_model, write_model
from .risk import aggregate_initial, empirical_erm, erm, evar_of_samples
from .simulate import RolloutConfig, rollout
from .spectral import check_transient_exhaustive, check_transient_policy, spectral_radius

__version__ = "0.1.0"

__all__ = [
    "ChainParams",
    "DecisionRule",
    "EvarSolution",
    "GamblersRuinParams",
    "InitialDistribution",
    "InvalidModelError",
    "ModelFormatError",
    "NotTransientError",
    "RiskTrcError",
    "RolloutConfig",
    "SINK",
    "SolveReport",
    "TransientMdp",
    "UnboundedPolicyError",
    "UnboundedRiskError",
    "aggregate_initial",
    "analytic_chain_erm",
    "build_beta_grid",
    "check_transient_exhaustive",
    "check_transient_policy",
    "discount_to_trc",
    "empirical_erm",
    "erm",
    "evar_of_samples",
    "evar_solve",
    "finite_horizon_solve",
    "gamblers_ruin",
    "grid_error_audit",
    "lp_solve",
    "nested_cvar_chain_values",
    "policy_iteration",
    "policy_values",
    "random_transient_mdp",
    "read_model",
    "risk_neutral_solve",
    "rollout",
    "single_state_chain",
    "solve_erm",
    "spectral_radius",
    "validate_model",
    "value_iteration",
    "write_model",
    "__version__",
]
