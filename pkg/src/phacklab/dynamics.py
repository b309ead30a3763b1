"""The distorted learning process: per-period steps and full trajectories.

Researchers optimize against the undistorted model (hacking never enters the
objective), outcomes are drawn from the true law where hacking adds ``eps``
to the success probability, and observers update as if there were no
hacking.  The log-odds process therefore carries a closed-form conditional
drift that splits into an undistorted part and an ``eps``-proportional
distortion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .beliefs import LAMBDA_MAX, BeliefState, belief_from_log_ratio
from .errors import DomainError, ModelValidationError
from .optimize import PolicyInterpolator, optimal_project_at
from .payoffs import PayoffSpec
from .success import SuccessModel, success_probs, validate

__all__ = [
    "DriftParts",
    "ScenarioConfig",
    "StepRecord",
    "Trajectory",
    "drift",
    "sigma_sq",
    "step",
    "simulate",
    "simulate_ensemble",
    "trajectory_rng",
]


class DriftParts(NamedTuple):
    base: float
    distortion: float
    total: float


def _increments(sm, p, l):
    """(log l, failure log-odds shift) for project l; array friendly."""
    p_a, p_b = success_probs(sm, l)
    log_l = np.log(l)
    fail = np.log1p(-p * p_b) - np.log1p(-p * p_a)
    return p_a, p_b, log_l, fail


def _drift_parts(p, eps, log_l, fail, p_true):
    base = p * p_true * log_l + (1.0 - p * p_true) * fail
    distortion = eps * p * (log_l - fail)
    return base, distortion


def drift(sm: SuccessModel, p: float, eps: float, l) -> DriftParts:
    """Conditional expected one-period log-odds change at project ``l``.

    ``base`` is the change without hacking, ``distortion`` the
    eps-proportional term; their sum equals the direct two-branch
    expectation under the hacked success probability.
    """
    if not (0.0 < p < 1.0):
        raise DomainError(f"arrival probability must lie in (0, 1), got {p!r}")
    if eps < 0.0:
        raise DomainError(f"hacking intensity must be >= 0, got {eps!r}")
    p_a, _, log_l, fail = _increments(sm, p, l)
    base, distortion = _drift_parts(p, eps, log_l, fail, p_a)
    total = base + distortion
    if np.ndim(total) == 0:
        return DriftParts(float(base), float(distortion), float(total))
    return DriftParts(base, distortion, total)


def sigma_sq(sm: SuccessModel, p: float, eps: float, l):
    """Conditional variance of the one-period martingale increment."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"arrival probability must lie in (0, 1), got {p!r}")
    if eps < 0.0:
        raise DomainError(f"hacking intensity must be >= 0, got {eps!r}")
    p_a, _, log_l, fail = _increments(sm, p, l)
    q = p * (p_a + eps)
    if np.any(q >= 1.0):
        raise ModelValidationError("hacked success probability reaches 1")
    value = (1.0 - q) * q * (log_l - fail) ** 2
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a reproducible run needs; immutable once validated."""

    sm: SuccessModel
    ps: PayoffSpec
    p: float
    eps: float
    lambda0: float = 0.0
    horizon: int = 1
    seed: int = 0
    true_state: str = "A"

    def __post_init__(self):
        result = validate(self.sm, self.p, self.eps)
        if not result.ok:
            raise ModelValidationError("; ".join(result.violations))
        if not (isinstance(self.horizon, int) and self.horizon >= 0):
            raise DomainError(f"horizon must be an integer >= 0, got {self.horizon!r}")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise DomainError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not (math.isfinite(self.lambda0) and abs(self.lambda0) < LAMBDA_MAX):
            raise DomainError(f"initial log-odds must be finite, got {self.lambda0!r}")
        if self.true_state not in ("A", "B"):
            raise DomainError(f"true_state must be 'A' or 'B', got {self.true_state!r}")
        if self.true_state == "B":
            from .success import peaks

            _, l_b = peaks(self.sm)
            _, sup_b = success_probs(self.sm, l_b)
            if sup_b + self.eps > 1.0:
                raise ModelValidationError(
                    f"max p_B + eps = {sup_b + self.eps!r} exceeds 1 under true state B"
                )


@dataclass(frozen=True)
class StepRecord:
    l_star: float
    success: bool
    q: float
    lam_after: float
    drift_base: float
    drift_distortion: float
    drift_total: float
    sigma_sq: float


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory, keyed by (seed, index).

    Streams for distinct indices are independent regardless of how
    trajectories are batched across workers; the t-th draw of a stream
    decides period t.
    """
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def step(cfg: ScenarioConfig, b: BeliefState, rng: np.random.Generator):
    """One period: choose the optimal project, draw the hacked outcome, update.

    The project solves the researcher's problem at the observer belief (no
    eps in the objective); the outcome is drawn with probability
    ``p * (p_true(l*) + eps)`` under the true state; the belief update uses
    the undistorted likelihoods.
    """
    point = optimal_project_at(cfg.ps, cfg.sm, b)
    l = point.l_star
    p_a, p_b, log_l, fail = _increments(cfg.sm, cfg.p, l)
    p_true = p_a if cfg.true_state == "A" else p_b
    q = cfg.p * (p_true + cfg.eps)
    success = bool(rng.random() < q)
    lam_after = b.lam + (log_l if success else fail)
    base, distortion = _drift_parts(cfg.p, cfg.eps, log_l, fail, p_true)
    record = StepRecord(
        l_star=float(l),
        success=success,
        q=float(q),
        lam_after=float(lam_after),
        drift_base=float(base),
        drift_distortion=float(distortion),
        drift_total=float(base + distortion),
        sigma_sq=float((1.0 - q) * q * (log_l - fail) ** 2),
    )
    return belief_from_log_ratio(lam_after), record


@dataclass
class Trajectory:
    """Per-period history of one simulated run.

    Row ``t`` of the per-period arrays describes the transition into
    ``lam[t + 1]``: the project chosen at ``lam[t]``, its outcome, and the
    conditional drift and variance evaluated at that choice.
    """

    index: int
    lam: np.ndarray
    l_star: np.ndarray
    outcome: np.ndarray
    drift_base: np.ndarray
    drift_distortion: np.ndarray
    sigma_sq: np.ndarray
    terminated_early: bool = False
    label: str | None = field(default=None)

    @property
    def horizon(self) -> int:
        return self.lam.size - 1

    @property
    def lambda_end(self) -> float:
        return float(self.lam[-1])

    @property
    def lam_min(self) -> float:
        return float(self.lam.min())

    @property
    def lam_max(self) -> float:
        return float(self.lam.max())

    @property
    def u(self) -> np.ndarray:
        return expit(-self.lam)

    @property
    def drift_total(self) -> np.ndarray:
        return self.drift_base + self.drift_distortion

    @property
    def n_successes(self) -> int:
        return int(self.outcome.sum())


PolicyFn = Callable[[np.ndarray], np.ndarray]


def simulate_ensemble(
    cfg: ScenarioConfig,
    n_trajectories: int = 1,
    *,
    indices: Sequence[int] | None = None,
    policy: PolicyFn | None = None,
) -> list[Trajectory]:
    """Simulate independent trajectories in vectorized lockstep.

    Trajectory ``index`` determines its random stream, so results are
    bit-identical however the set of indices is split across calls or
    processes.  ``policy`` defaults to a dense interpolation of the exact
    per-belief optimizer.
    """
    if indices is None:
        indices = range(n_trajectories)
    indices = [int(i) for i in indices]
    n = len(indices)
    if policy is None:
        policy = PolicyInterpolator.build(cfg.ps, cfg.sm)
    T = cfg.horizon

    uniforms = np.empty((n, T))
    for row, idx in enumerate(indices):
        uniforms[row] = trajectory_rng(cfg.seed, idx).random(T)

    lam = np.full(n, float(cfg.lambda0))
    lam_path = np.empty((n, T + 1))
    lam_path[:, 0] = lam
    l_star = np.full((n, T), np.nan)
    outcome = np.zeros((n, T), dtype=bool)
    d_base = np.full((n, T), np.nan)
    d_dist = np.full((n, T), np.nan)
    sig = np.full((n, T), np.nan)
    active = np.ones(n, dtype=bool)
    end_at = np.full(n, T, dtype=int)

    for t in range(T):
        if active.all():
            rows = slice(None)
            lam_act = lam
        elif not active.any():
            lam_path[:, t + 1] = lam
            continue
        else:
            rows = active
            lam_act = lam[active]

        l = np.asarray(policy(lam_act), dtype=float)
        p_a, p_b, log_l, fail = _increments(cfg.sm, cfg.p, l)
        p_true = p_a if cfg.true_state == "A" else p_b
        q = cfg.p * (p_true + cfg.eps)
        succ = uniforms[rows, t] < q
        inc = np.where(succ, log_l, fail)
        base, dist = _drift_parts(cfg.p, cfg.eps, log_l, fail, p_true)

        l_star[rows, t] = l
        outcome[rows, t] = succ
        d_base[rows, t] = base
        d_dist[rows, t] = dist
        sig[rows, t] = (1.0 - q) * q * (log_l - fail) ** 2

        lam_new = lam.copy()
        lam_new[rows] = lam_act + inc
        lam_path[:, t + 1] = lam_new
        lam = lam_new

        saturated = active & (np.abs(lam) > LAMBDA_MAX)
        if saturated.any():
            end_at[saturated] = t + 1
            active &= ~saturated

    out = []
    for row, idx in enumerate(indices):
        k = end_at[row]
        out.append(
            Trajectory(
                index=idx,
                lam=lam_path[row, : k + 1].copy(),
                l_star=l_star[row, :k].copy(),
                outcome=outcome[row, :k].copy(),
                drift_base=d_base[row, :k].copy(),
                drift_distortion=d_dist[row, :k].copy(),
                sigma_sq=sig[row, :k].copy(),
                terminated_early=bool(k < T),
            )
        )
    return out


def simulate(cfg: ScenarioConfig, *, index: int = 0, policy: PolicyFn | None = None) -> Trajectory:
    """Simulate one trajectory; identical config and index reproduce it bit for bit."""
    return simulate_ensemble(cfg, indices=[index], policy=policy)[0]
