"""Two-state beliefs, the information measure, and the belief-update laws.

Beliefs over the two states A and B are carried primarily as the log-odds
``lam = log((1 - u) / u)`` where ``u`` is the weight on A.  Both weights are
stored explicitly so that quantities like ``1 - u`` stay accurate when the
odds are extreme and ``u`` itself rounds to 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BeliefSaturationError, DomainError, ModelValidationError

__all__ = [
    "LAMBDA_MAX",
    "BeliefState",
    "belief_from_log_ratio",
    "belief_from_weight",
    "information",
    "information_derivative",
    "information_sup",
    "update_on_success",
    "update_on_failure",
]

# Log-odds magnitude beyond which one of the two weights underflows float64.
LAMBDA_MAX = 744.4


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@dataclass(frozen=True)
class BeliefState:
    """Public belief: weight ``u`` on state A, ``weight_b`` on B, log-odds ``lam``.

    ``lam == log(weight_b / u)``; at extreme odds ``u`` or ``weight_b`` may be
    the correctly rounded value 1.0 while the other carries the precision.
    """

    u: float
    weight_b: float
    lam: float


def belief_from_log_ratio(lam: float) -> BeliefState:
    """Build a belief from the log-likelihood ratio of B over A."""
    lam = float(lam)
    if not math.isfinite(lam):
        raise DomainError(f"log-odds must be finite, got {lam!r}")
    u = _sigmoid(-lam)
    v = _sigmoid(lam)
    if u <= 0.0 or v <= 0.0:
        raise BeliefSaturationError(
            f"log-odds {lam:.6g} leaves the representable open interval "
            f"(|lam| > {LAMBDA_MAX})"
        )
    return BeliefState(u=u, weight_b=v, lam=lam)


def belief_from_weight(u: float) -> BeliefState:
    """Build a belief from the weight on state A."""
    u = float(u)
    if not (0.0 < u < 1.0) or not math.isfinite(u):
        raise DomainError(f"weight on A must lie strictly inside (0, 1), got {u!r}")
    v = 1.0 - u
    lam = math.log1p(-u) - math.log(u)
    return BeliefState(u=u, weight_b=v, lam=lam)


def _check_weight(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(u)) or np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DomainError("belief weight must lie strictly inside (0, 1)")
    return u


def _check_ratio(l) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    if np.any(~np.isfinite(l)) or np.any(l <= 0.0):
        raise DomainError("likelihood ratio must be a finite positive number")
    return l


def _posterior_denominator(u, v, l):
    """Return (d, log_d) for d = u + v*l, accurate for d near 1 and d near 0."""
    dm1 = (u - 1.0) + v * l
    near_one = dm1 > -0.5
    d_direct = u + v * l
    d = np.where(near_one, 1.0 + dm1, d_direct)
    log_d = np.where(
        near_one,
        np.log1p(np.where(near_one, dm1, 0.0)),
        np.log(np.where(near_one, 1.0, d_direct)),
    )
    return d, log_d


def _information_uv(u, v, l):
    d, log_d = _posterior_denominator(u, v, l)
    return v * l * np.log(l) / d - log_d


def information(u, l):
    """Information generated by a successful project ``l`` under belief ``u``.

    KL divergence (nats) between the posterior after observing the success
    and the prior.  Zero exactly at the uninformative project ``l == 1``;
    cancellation noise below float resolution is clamped to +0.0 so the
    value is never negative.
    """
    u = _check_weight(u)
    l = _check_ratio(l)
    return np.maximum(_information_uv(u, 1.0 - u, l), 0.0)


def information_derivative(u, l):
    """Partial derivative of :func:`information` with respect to ``l``.

    Vanishes only at ``l == 1`` and shares the sign of ``log(l)``.
    """
    u = _check_weight(u)
    l = _check_ratio(l)
    v = 1.0 - u
    d, _ = _posterior_denominator(u, v, l)
    return u * v * np.log(l) / (d * d)


class InformationSup(NamedTuple):
    sup_low: float
    sup_high: float
    m: float


def information_sup(u) -> InformationSup:
    """Suprema of the information over projects, for a fixed belief.

    ``sup_low`` is the limit as ``l -> 0`` (-log u), ``sup_high`` the limit as
    ``l -> +inf`` (-log(1 - u)); ``m`` is their maximum.  The information of
    any actual project is strictly below ``m``.
    """
    u = _check_weight(np.asarray(u, dtype=float))
    sup_low = -np.log(u)
    sup_high = -np.log1p(-u)
    m = np.maximum(sup_low, sup_high)
    if np.ndim(u) == 0:
        return InformationSup(float(sup_low), float(sup_high), float(m))
    return InformationSup(sup_low, sup_high, m)


def update_on_success(b: BeliefState, l: float) -> BeliefState:
    """Posterior after project ``l`` succeeds: log-odds shift by ``log(l)``."""
    l = float(l)
    if not math.isfinite(l) or l <= 0.0:
        raise DomainError(f"likelihood ratio must be positive and finite, got {l!r}")
    return belief_from_log_ratio(b.lam + math.log(l))


def update_on_failure(b: BeliefState, l: float, p: float, sm) -> BeliefState:
    """Posterior after project ``l`` fails, under arrival probability ``p``.

    The failure of a project is informative because the two states assign it
    different success probabilities; the log-odds shift is
    ``log((1 - p*p_B(l)) / (1 - p*p_A(l)))``.
    """
    from .success import success_probs

    l = float(l)
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"arrival probability must lie in (0, 1), got {p!r}")
    p_a, p_b = success_probs(sm, l)
    if p * p_a >= 1.0 or p * p_b >= 1.0:
        raise ModelValidationError(
            f"success probabilities reach 1 at l={l!r} (p*p_A={p * p_a!r}, "
            f"p*p_B={p * p_b!r})"
        )
    shift = math.log1p(-p * p_b) - math.log1p(-p * p_a)
    return belief_from_log_ratio(b.lam + shift)
