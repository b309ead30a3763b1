"""Per-period project choice: feasible bracket, maximization, policy tables.

The search space for a project is the open half line, but everything outside
a computable compact bracket is dominated by interior anchors, so the
maximization runs on the bracket only.  All optimization is carried out in
log-project coordinates and on log expected payoff, which keeps the fast
payoff family inside the float range even when raw payments overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .beliefs import _information_uv, _posterior_denominator
from .errors import BracketError, DomainError
from .payoffs import (
    BoundedExpPayoff,
    PayoffSpec,
    _log_eval_payoff,
    eval_payoff,
)
from .success import SuccessModel, _log_p_a, _log_p_b, peaks, success_probs

__all__ = [
    "FeasibleBracket",
    "PolicyPoint",
    "PolicyTable",
    "PolicyInterpolator",
    "feasible_bracket",
    "optimal_project",
    "optimal_project_at",
    "foc_terms",
    "foc_residual",
    "policy_table",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_LOG_CAP = math.log(1e30)
_LOG_CAP_RETRY = math.log(1e60)
_N_GRID = 2048
_GOLDEN_ITERS = 45
_TIE_REL = 1e-12


@dataclass(frozen=True)
class FeasibleBracket:
    """Compact project interval outside of which no project can be optimal."""

    l_lo: float
    l_hi: float
    l1: float
    l2: float


@dataclass(frozen=True)
class PolicyPoint:
    u: float
    lam: float
    l_star: float
    ep_star: float
    foc: float


@dataclass(frozen=True)
class PolicyTable:
    points: tuple[PolicyPoint, ...]
    failures: tuple[tuple[float, str], ...]
    l_star_min: float
    l_star_max: float


def _uv_from_lam(lam):
    lam = np.asarray(lam, dtype=float)
    return expit(-lam), expit(lam)


def _lam_from_u(u: float) -> float:
    return math.log1p(-u) - math.log(u)


def _log_expected_payoff(ps, sm, u, v, log_l):
    """log EP; u, v broadcast against log_l."""
    l = np.exp(log_l)
    i = np.maximum(_information_uv(u, v, l), 0.0)
    _, log_d = _posterior_denominator(u, v, l)
    return _log_eval_payoff(ps, i) + _log_p_a(sm, log_l) + log_d


def _sup_log_information(lam):
    """log-odds form of max{-log u, -log(1-u)}: softplus(|lam|)."""
    lam = np.asarray(lam, dtype=float)
    a = np.abs(lam)
    return a + np.log1p(np.exp(-a))


def _bisect_root(f, lo, hi, iters=60):
    """Vector bisection of a decreasing-in-x sign change with f(lo) > 0 > f(hi)."""
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


def _expand_until_negative(f, start, direction, cap):
    """Grow |x - start| geometrically until f(x) < 0 or the cap is reached."""
    step = np.full_like(start, 2.0)
    clip = np.minimum if direction > 0 else np.maximum
    x = clip(start + direction * step, cap)
    for _ in range(16):
        at_cap = x >= cap if direction > 0 else x <= cap
        todo = (f(x) >= 0.0) & ~at_cap
        if not np.any(todo):
            break
        step = np.where(todo, step * 2.0, step)
        x = np.where(todo, clip(start + direction * step, cap), x)
    return x


def _solve_bracket_arrays(ps, sm, lam):
    """Vectorized bracket: returns (log_l_lo, log_l_hi, l1, l2) for a lam array."""
    lam = np.asarray(lam, dtype=float)
    u, v = _uv_from_lam(lam)
    l_a, l_b = peaks(sm)
    l1 = 2.0 * max(l_b, 1.0)
    l2 = 0.5 * min(1.0, l_a)
    log_l1 = math.log(l1)
    log_l2 = math.log(l2)

    log_pm = _log_eval_payoff(ps, _sup_log_information(lam))
    log_ep1 = _log_expected_payoff(ps, sm, u, v, np.full_like(lam, log_l1))
    log_ep2 = _log_expected_payoff(ps, sm, u, v, np.full_like(lam, log_l2))

    def g_hi(x):
        return log_pm + _log_p_b(sm, x) - log_ep1

    def g_lo(x):
        return log_pm + _log_p_a(sm, x) - log_ep2

    lo_anchor = np.full_like(lam, log_l1)
    hi_anchor = np.full_like(lam, log_l2)
    if np.any(g_hi(lo_anchor) <= 0.0) or np.any(g_lo(hi_anchor) <= 0.0):
        raise BracketError("anchor payoff fails to dominate; bracket construction invalid")

    for cap in (_LOG_CAP, _LOG_CAP_RETRY):
        hi_end = _expand_until_negative(g_hi, lo_anchor, +1.0, cap)
        if np.all(g_hi(hi_end) < 0.0):
            break
    bad = g_hi(hi_end) >= 0.0
    if np.any(bad):
        raise BracketError(
            f"upper bracket root not contained below l = {math.exp(_LOG_CAP_RETRY):.3g} "
            f"for log-odds {lam[bad][:4]!r}"
        )
    log_hi = _bisect_root(g_hi, lo_anchor, hi_end)

    for cap in (-_LOG_CAP, -_LOG_CAP_RETRY):
        lo_end = _expand_until_negative(g_lo, hi_anchor, -1.0, cap)
        if np.all(g_lo(lo_end) < 0.0):
            break
    bad = g_lo(lo_end) >= 0.0
    if np.any(bad):
        raise BracketError(
            f"lower bracket root not contained above l = {math.exp(-_LOG_CAP_RETRY):.3g} "
            f"for log-odds {lam[bad][:4]!r}"
        )

    # g_lo increases in x; bisect on the mirrored axis to reuse the helper.
    def g_lo_mirror(x):
        return g_lo(-x)

    log_lo = -_bisect_root(g_lo_mirror, -hi_anchor, -lo_end)
    return log_lo, log_hi, l1, l2


def _local_maxima_candidates(f, k=3):
    """Indices of the k best interior/endpoint local maxima per row of f."""
    is_max = np.ones_like(f, dtype=bool)
    is_max[:, 1:] &= f[:, 1:] >= f[:, :-1]
    is_max[:, :-1] &= f[:, :-1] >= f[:, 1:]
    masked = np.where(is_max, f, -np.inf)
    return np.argpartition(-masked, kth=k - 1, axis=1)[:, :k]


def _golden_refine(fun, a, b, iters=_GOLDEN_ITERS):
    """Vector golden-section maximization on [a, b]; returns (x, fun(x))."""
    a = a.copy()
    b = b.copy()
    for _ in range(iters):
        h = b - a
        c = b - _INVPHI * h
        d = a + _INVPHI * h
        fc = fun(c)
        fd = fun(d)
        right = fc < fd
        a = np.where(right, c, a)
        b = np.where(right, b, d)
    x = 0.5 * (a + b)
    return x, fun(x)


def _solve_policy_arrays(ps, sm, lam):
    """Vectorized optimum: (l_star, log_ep_star, log_l_lo, log_l_hi)."""
    lam = np.asarray(lam, dtype=float)
    u, v = _uv_from_lam(lam)
    log_lo, log_hi, _, _ = _solve_bracket_arrays(ps, sm, lam)

    t = np.linspace(0.0, 1.0, _N_GRID)
    log_grid = log_lo[:, None] * (1.0 - t) + log_hi[:, None] * t
    f = _log_expected_payoff(ps, sm, u[:, None], v[:, None], log_grid)
    cand = _local_maxima_candidates(f, k=3)

    rows = np.arange(lam.size)[:, None]
    lo_idx = np.maximum(cand - 1, 0)
    hi_idx = np.minimum(cand + 1, _N_GRID - 1)
    a = log_grid[rows, lo_idx]
    b = log_grid[rows, hi_idx]

    def fun(x):
        return _log_expected_payoff(ps, sm, u[:, None], v[:, None], x)

    xs, fs = _golden_refine(fun, a, b)

    # Ties within 1e-12 relative payoff break toward the smallest project.
    best = np.max(fs, axis=1, keepdims=True)
    tie = fs >= best - _TIE_REL
    pick = np.argmin(np.where(tie, xs, np.inf), axis=1)
    flat = np.arange(lam.size)
    x_star = xs[flat, pick]
    log_ep_star = fs[flat, pick]
    return np.exp(x_star), log_ep_star, log_lo, log_hi


def feasible_bracket(ps: PayoffSpec, sm: SuccessModel, u: float) -> FeasibleBracket:
    """Compact interval [l_lo, l_hi] containing every optimal project at belief u.

    The endpoints solve P(sup I) * p_B(l_hi) = EP(u, l1) on the decreasing
    branch of p_B and P(sup I) * p_A(l_lo) = EP(u, l2) on the increasing
    branch of p_A, for fixed anchors l1 > max(l_B, 1) and l2 < min(1, l_A).
    """
    if not (0.0 < u < 1.0):
        raise DomainError(f"belief must lie strictly inside (0, 1), got {u!r}")
    lam = np.array([_lam_from_u(float(u))])
    log_lo, log_hi, l1, l2 = _solve_bracket_arrays(ps, sm, lam)
    return FeasibleBracket(
        l_lo=float(np.exp(log_lo[0])), l_hi=float(np.exp(log_hi[0])), l1=l1, l2=l2
    )


def _policy_point(ps, sm, lam: float) -> PolicyPoint:
    arr = np.array([float(lam)])
    l_star, log_ep, log_lo, log_hi = _solve_policy_arrays(ps, sm, arr)
    l = float(l_star[0])
    u, _ = _uv_from_lam(arr)
    u = float(u[0])
    interior = math.log(l) - float(log_lo[0]) > 1e-7 and float(log_hi[0]) - math.log(l) > 1e-7
    foc = foc_residual(ps, sm, u, l) if interior and 0.0 < u < 1.0 else math.nan
    return PolicyPoint(
        u=u, lam=float(lam), l_star=l, ep_star=float(np.exp(log_ep[0])), foc=foc
    )


def optimal_project(ps: PayoffSpec, sm: SuccessModel, u: float) -> PolicyPoint:
    """Maximize expected payoff over the feasible bracket at belief ``u``.

    Grid scan in log-project coordinates followed by golden-section
    refinement of the best bracketing triples; value ties within 1e-12
    relative are broken toward the smallest project.
    """
    if not (0.0 < u < 1.0):
        raise DomainError(f"belief must lie strictly inside (0, 1), got {u!r}")
    return _policy_point(ps, sm, _lam_from_u(float(u)))


def optimal_project_at(ps: PayoffSpec, sm: SuccessModel, belief) -> PolicyPoint:
    """Like :func:`optimal_project` but taking a BeliefState; safe at extreme odds."""
    return _policy_point(ps, sm, belief.lam)


def foc_terms(ps: PayoffSpec, sm: SuccessModel, u: float, l: float) -> tuple[float, float]:
    """The two addends of the first-order condition dEP/dl at (u, l).

    Derivatives of the payoff and of p_A are taken by central finite
    differences; no closed-form derivative of a general payoff is assumed.
    """
    u = float(u)
    l = float(l)
    v = 1.0 - u
    from .beliefs import information

    i = float(information(u, l))
    h_i = 1e-6 * max(1.0, i)
    i_lo = max(i - h_i, 0.0)
    p_prime = (eval_payoff(ps, i + h_i) - eval_payoff(ps, i_lo)) / (i + h_i - i_lo)
    payment = eval_payoff(ps, i)

    h_l = min(1e-6 * max(1.0, l), 0.5 * l)
    pa_hi, _ = success_probs(sm, l + h_l)
    pa_lo, _ = success_probs(sm, l - h_l)
    pa_prime = (pa_hi - pa_lo) / (2.0 * h_l)
    p_a, _ = success_probs(sm, l)

    d = u + v * l
    term1 = p_prime * (u * v * math.log(l) / d) * p_a
    term2 = payment * (d * pa_prime + v * p_a)
    return float(term1), float(term2)


def foc_residual(ps: PayoffSpec, sm: SuccessModel, u: float, l: float) -> float:
    """Stationarity residual dEP/dl at (u, l); near zero at an interior optimum."""
    t1, t2 = foc_terms(ps, sm, u, l)
    return t1 + t2


def policy_table(ps: PayoffSpec, sm: SuccessModel, u_grid) -> PolicyTable:
    """Optimal project per belief on a grid, with per-point failures recorded."""
    points: list[PolicyPoint] = []
    failures: list[tuple[float, str]] = []
    for u in np.asarray(u_grid, dtype=float):
        try:
            points.append(optimal_project(ps, sm, float(u)))
        except Exception as exc:  # noqa: BLE001 - failures are part of the table
            failures.append((float(u), f"{type(exc).__name__}: {exc}"))
    stars = [pt.l_star for pt in points]
    return PolicyTable(
        points=tuple(points),
        failures=tuple(failures),
        l_star_min=min(stars) if stars else math.nan,
        l_star_max=max(stars) if stars else math.nan,
    )


class PolicyInterpolator:
    """Dense precomputed policy lam -> l*, linear in (lam, log l*) between nodes.

    Adjacent nodes whose projects differ by more than a factor ~e**0.5 mark a
    jump of the policy correspondence; inside such a cell the nearer side is
    used instead of interpolating through projects that belong to neither
    branch.  Outside the grid the policy either clamps to the end values
    (bounded payoffs, whose policy has finite limits) or falls back to the
    exact optimizer.
    """

    _JUMP_LOG_GAP = 0.5

    def __init__(self, ps, sm, lam_grid, log_l_grid, mode):
        self.ps = ps
        self.sm = sm
        self.lam_grid = lam_grid
        self.log_l_grid = log_l_grid
        self.mode = mode
        self._jump = np.abs(np.diff(log_l_grid)) > self._JUMP_LOG_GAP

    @classmethod
    def build(cls, ps, sm, lam_lo=None, lam_hi=None, n=None) -> "PolicyInterpolator":
        bounded = isinstance(ps, BoundedExpPayoff)
        if lam_lo is None:
            lam_lo = -40.0 if bounded else -18.0
        if lam_hi is None:
            lam_hi = 40.0 if bounded else 18.0
        if n is None:
            n = 4097 if bounded else 2049
        lam_grid = np.linspace(float(lam_lo), float(lam_hi), int(n))
        l_star, _, _, _ = _solve_policy_arrays(ps, sm, lam_grid)
        mode = "clamp" if bounded else "exact"
        return cls(ps, sm, lam_grid, np.log(l_star), mode)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        scalar = np.ndim(lam) == 0
        lam = np.atleast_1d(lam)
        grid = self.lam_grid
        clipped = np.clip(lam, grid[0], grid[-1])
        idx = np.clip(np.searchsorted(grid, clipped, side="right") - 1, 0, grid.size - 2)
        t = (clipped - grid[idx]) / (grid[idx + 1] - grid[idx])
        left = self.log_l_grid[idx]
        right = self.log_l_grid[idx + 1]
        log_l = np.where(
            self._jump[idx], np.where(t < 0.5, left, right), (1.0 - t) * left + t * right
        )
        out = np.exp(log_l)

        if self.mode == "exact":
            outside = (lam < grid[0]) | (lam > grid[-1])
            if np.any(outside):
                l_exact, _, _, _ = _solve_policy_arrays(self.ps, self.sm, lam[outside])
                out[outside] = l_exact
        return float(out[0]) if scalar else out
