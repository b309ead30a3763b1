"""phacklab: simulate and diagnose sequential research with p-hacking.

A sequence of researchers choose projects that trade off generated
information against success probability; a small hacking intensity inflates
observed success rates while observers update beliefs as if results were
clean.  The package provides the closed-form primitives, the per-period
optimizer, the distorted belief dynamics, convergence diagnostics, and a
reproducible experiment harness.
"""

__version__ = "0.1.0"

from .beliefs import (
    BeliefState,
    belief_from_log_ratio,
    belief_from_weight,
    information,
    information_derivative,
    information_sup,
    update_on_failure,
    update_on_success,
)
from .diagnostics import (
    azuma_check,
    classify_convergence,
    clt_probe,
    doob_decompose,
    ensemble_diagnostics,
    epsilon_threshold,
    escape_threshold,
)
from .dynamics import (
    ScenarioConfig,
    Trajectory,
    drift,
    sigma_sq,
    simulate,
    simulate_ensemble,
    step,
)
from .errors import (
    BeliefSaturationError,
    BracketError,
    ConfigError,
    DiagnosticsError,
    DomainError,
    ModelValidationError,
    PayoffOverflowError,
    PhacklabError,
    PolicyClassError,
)
from .optimize import (
    FeasibleBracket,
    PolicyInterpolator,
    PolicyPoint,
    feasible_bracket,
    foc_residual,
    optimal_project,
    policy_table,
)
from .payoffs import (
    BoundedExpPayoff,
    FastReciprocalPayoff,
    GrowthOrder,
    eval_payoff,
    expected_payoff,
    growth_compare,
)
from .success import SuccessModel, peaks, success_probs, validate

__all__ = [
    "__version__",
    "BeliefState",
    "belief_from_log_ratio",
    "belief_from_weight",
    "information",
    "information_derivative",
    "information_sup",
    "update_on_success",
    "update_on_failure",
    "SuccessModel",
    "success_probs",
    "peaks",
    "validate",
    "BoundedExpPayoff",
    "FastReciprocalPayoff",
    "GrowthOrder",
    "eval_payoff",
    "expected_payoff",
    "growth_compare",
    "FeasibleBracket",
    "PolicyPoint",
    "PolicyInterpolator",
    "feasible_bracket",
    "optimal_project",
    "foc_residual",
    "policy_table",
    "ScenarioConfig",
    "Trajectory",
    "drift",
    "sigma_sq",
    "step",
    "simulate",
    "simulate_ensemble",
    "doob_decompose",
    "classify_convergence",
    "azuma_check",
    "clt_probe",
    "epsilon_threshold",
    "escape_threshold",
    "ensemble_diagnostics",
    "PhacklabError",
    "DomainError",
    "BeliefSaturationError",
    "ModelValidationError",
    "PayoffOverflowError",
    "BracketError",
    "PolicyClassError",
    "DiagnosticsError",
    "ConfigError",
]
