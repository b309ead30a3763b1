"""State-contingent success probabilities of research projects.

The shipped family is ``p_A(l) = kappa * l**alpha / (1 + l)**(alpha + beta)``
with ``p_B(l) = l * p_A(l)`` forced exactly by consistency of the likelihood
ratio.  Both curves are bell shaped with vanishing tails and closed-form
peaks ``l_A = alpha / beta`` and ``l_B = (alpha + 1) / (beta - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["SuccessModel", "ModelValidation", "success_probs", "peaks", "validate"]


@dataclass(frozen=True)
class SuccessModel:
    alpha: float = 2.0
    beta: float = 3.0
    kappa: float = 8.0

    def __post_init__(self):
        for name in ("alpha", "beta", "kappa"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"SuccessModel.{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, float(value))


def success_probs(sm: SuccessModel, l):
    """Success probabilities (p_A, p_B) of project ``l`` under the two states.

    ``p_B == l * p_A`` holds exactly by construction.
    """
    l = np.asarray(l, dtype=float)
    if np.any(~np.isfinite(l)) or np.any(l <= 0.0):
        raise DomainError("likelihood ratio must be a finite positive number")
    p_a = sm.kappa * l**sm.alpha / (1.0 + l) ** (sm.alpha + sm.beta)
    p_b = l * p_a
    if np.ndim(l) == 0:
        return float(p_a), float(p_b)
    return p_a, p_b


def _log_p_a(sm: SuccessModel, log_l):
    """log p_A evaluated from log(l); safe for ratios far outside float range."""
    log_l = np.asarray(log_l, dtype=float)
    # log(1 + l) = max(log_l, 0) + log1p(exp(-|log_l|))
    softplus = np.maximum(log_l, 0.0) + np.log1p(np.exp(-np.abs(log_l)))
    return math.log(sm.kappa) + sm.alpha * log_l - (sm.alpha + sm.beta) * softplus


def _log_p_b(sm: SuccessModel, log_l):
    return np.asarray(log_l, dtype=float) + _log_p_a(sm, log_l)


def peaks(sm: SuccessModel) -> tuple[float, float]:
    """Unique stationary points (l_A, l_B) of the two success curves."""
    if sm.beta <= 1.0:
        raise DomainError(
            f"p_B has no interior peak for beta={sm.beta!r} <= 1 (tail does not vanish)"
        )
    return sm.alpha / sm.beta, (sm.alpha + 1.0) / (sm.beta - 1.0)


@dataclass(frozen=True)
class ModelValidation:
    ok: bool
    violations: tuple[str, ...]


def validate(sm: SuccessModel, p: float, eps: float) -> ModelValidation:
    """Check the model against the shape and probability-bound requirements.

    Returns a structured result instead of raising, so invalid parameter
    combinations can be reported field by field.
    """
    violations: list[str] = []
    if not (0.0 < p < 1.0):
        violations.append(f"arrival: p={p!r} must lie strictly inside (0, 1)")
    if not (eps >= 0.0 and math.isfinite(eps)):
        violations.append(f"hacking: eps={eps!r} must be a finite number >= 0")
    if sm.beta <= 1.0:
        violations.append(
            f"tail: beta={sm.beta!r} <= 1, so p_B(l) = l*p_A(l) does not vanish as l -> inf"
        )
        return ModelValidation(False, tuple(violations))

    l_a, l_b = peaks(sm)
    if not l_a < 1.0:
        violations.append(f"peak: l_A={l_a!r} must lie below 1 (needs alpha < beta)")
    if not l_b > 1.0:
        violations.append(f"peak: l_B={l_b!r} must lie above 1 (needs alpha > beta - 2)")
    if violations:
        return ModelValidation(False, tuple(violations))

    sup_a, _ = success_probs(sm, l_a)
    _, sup_b = success_probs(sm, l_b)
    if not sup_a + eps <= 1.0:
        violations.append(
            f"probability: max p_A + eps = {sup_a + eps!r} exceeds 1 near l_A={l_a!r}"
        )
    if 0.0 < p < 1.0 and not p * sup_b < 1.0:
        violations.append(
            f"probability: p * max p_B = {p * sup_b!r} reaches 1 near l_B={l_b!r}"
        )
    return ModelValidation(not violations, tuple(violations))
