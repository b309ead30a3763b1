"""Payoff families over generated information, sharing a base salary.

Two families are shipped: a bounded one (learning-friendly incentives) and a
fast-growing one built from the reciprocal of the success-probability decay,
which rewards contrarian projects enough to break learning.  Both satisfy
``P(0) == c`` exactly and are strictly increasing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, PayoffOverflowError
from .success import SuccessModel, _log_p_a, success_probs

__all__ = [
    "BoundedExpPayoff",
    "FastReciprocalPayoff",
    "PayoffSpec",
    "GrowthOrder",
    "eval_payoff",
    "expected_payoff",
    "growth_compare",
]

_LOG4 = math.log(4.0)


@dataclass(frozen=True)
class BoundedExpPayoff:
    """c + gamma * (1 - exp(-i)): strictly increasing, bounded by c + gamma."""

    c: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise DomainError(f"base salary c must be positive, got {self.c!r}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise DomainError(f"amplitude gamma must be positive, got {self.gamma!r}")


@dataclass(frozen=True)
class FastReciprocalPayoff:
    """c + d * (1/p_A(4*e**(2i)) - 1/p_A(4)): unbounded, reciprocal-decay growth.

    The scale ``d > c`` is the limit of ``p_A(4*e**(2i)) * P(i)`` as
    ``i -> inf``, which is what makes extreme contrarian projects pay.
    """

    c: float
    d: float
    sm: SuccessModel

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise DomainError(f"base salary c must be positive, got {self.c!r}")
        if not (self.d > self.c and math.isfinite(self.d)):
            raise DomainError(f"scale d must exceed the base salary c, got d={self.d!r}")

    @property
    def reciprocal_at_zero(self) -> float:
        """1 / p_A(4), the subtracted constant that pins P(0) = c."""
        sm = self.sm
        return (1.0 + 4.0) ** (sm.alpha + sm.beta) / (sm.kappa * 4.0**sm.alpha)


PayoffSpec = Union[BoundedExpPayoff, FastReciprocalPayoff]


def _check_information(i) -> np.ndarray:
    i = np.asarray(i, dtype=float)
    if np.any(~np.isfinite(i)) or np.any(i < 0.0):
        raise DomainError("information must be a finite number >= 0")
    return i


def _fast_log_reciprocal(ps: FastReciprocalPayoff, i):
    """log of 1/p_A(4*e**(2i)), stable for any i."""
    return -_log_p_a(ps.sm, _LOG4 + 2.0 * np.asarray(i, dtype=float))


def eval_payoff(ps: PayoffSpec, i):
    """Payment for generated information ``i``; equals the base salary at 0."""
    i = _check_information(i)
    if isinstance(ps, BoundedExpPayoff):
        value = ps.c + ps.gamma * (-np.expm1(-i))
        return float(value) if np.ndim(i) == 0 else value
    log_r = _fast_log_reciprocal(ps, i)
    if np.any(log_r > 709.0):
        i_bad = float(np.max(i))
        raise PayoffOverflowError(
            f"fast payoff exceeds the float64 range at information i={i_bad:.6g}; "
            f"the reciprocal term needs exp({float(np.max(log_r)):.1f})"
        )
    value = ps.c + ps.d * (np.exp(log_r) - ps.reciprocal_at_zero)
    return float(value) if np.ndim(i) == 0 else value


def _log_eval_payoff(ps: PayoffSpec, i):
    """log P(i), finite even where the fast family overflows the float range."""
    i = _check_information(i)
    if isinstance(ps, BoundedExpPayoff):
        return np.log(ps.c + ps.gamma * (-np.expm1(-i)))
    log_r = _fast_log_reciprocal(ps, i)
    offset = ps.c - ps.d * ps.reciprocal_at_zero
    return log_r + math.log(ps.d) + np.log1p(offset * np.exp(-log_r) / ps.d)


def expected_payoff(ps: PayoffSpec, sm: SuccessModel, u, l):
    """P(I(u, l)) times the belief-weighted success probability of ``l``."""
    from .beliefs import information

    i = information(u, l)
    payment = eval_payoff(ps, i)
    p_a, p_b = success_probs(sm, l)
    u = np.asarray(u, dtype=float)
    value = payment * (u * p_a + (1.0 - u) * p_b)
    return float(value) if np.ndim(value) == 0 else value


class GrowthOrder(enum.Enum):
    SLOWER = "slower"
    EQUIVALENT = "equivalent"
    FASTER = "faster"
    INDETERMINATE = "indeterminate"


_GROWTH_STAGES = np.array([20.0, 40.0, 80.0])


def growth_compare(ps_a: PayoffSpec, ps_b: PayoffSpec) -> GrowthOrder:
    """Classify the relative asymptotic growth of two payoff families.

    The ratio P_a(i)/P_b(i) is evaluated at staged information levels and
    classified once the trend has settled; a non-contracting trend is
    reported as indeterminate rather than guessed.
    """
    bounded_a = isinstance(ps_a, BoundedExpPayoff)
    bounded_b = isinstance(ps_b, BoundedExpPayoff)
    if bounded_a and not bounded_b:
        return GrowthOrder.SLOWER
    if not bounded_a and bounded_b:
        return GrowthOrder.FASTER

    log_ratio = _log_eval_payoff(ps_a, _GROWTH_STAGES) - _log_eval_payoff(
        ps_b, _GROWTH_STAGES
    )
    r1, r2, r3 = np.exp(log_ratio)
    settled = abs(r3 - r2) <= 0.5 * abs(r2 - r1) + 1e-9
    if not settled:
        return GrowthOrder.INDETERMINATE
    if abs(r3 - 1.0) <= 1e-6:
        return GrowthOrder.EQUIVALENT
    return GrowthOrder.SLOWER if r3 < 1.0 else GrowthOrder.FASTER
