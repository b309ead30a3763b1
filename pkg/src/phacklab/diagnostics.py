"""Post-hoc and ensemble analysis of simulated learning trajectories.

Covers the decomposition of the log-odds process into martingale and
predictable parts, an empirical concentration-bound check, a CLT probe at
variance stopping times, finite-horizon convergence labels, and the two
threshold quantities: the largest hacking intensity that preserves a
uniform negative drift margin, and the belief/project thresholds below
which the drift of a diverging policy turns positive.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .dynamics import ScenarioConfig, Trajectory, _increments, drift, sigma_sq
from .errors import DiagnosticsError, DomainError, PolicyClassError
from .optimize import _solve_policy_arrays
from .payoffs import BoundedExpPayoff, PayoffSpec
from .success import SuccessModel, peaks, success_probs

__all__ = [
    "DoobDecomposition",
    "ConvergenceLabel",
    "AzumaReport",
    "CltReport",
    "EpsilonThreshold",
    "EscapeThreshold",
    "doob_decompose",
    "classify_convergence",
    "azuma_check",
    "clt_probe",
    "epsilon_threshold",
    "escape_threshold",
    "ensemble_diagnostics",
]


@dataclass(frozen=True)
class DoobDecomposition:
    """lam - lam0 split into martingale part M and predictable part A."""

    M: np.ndarray
    A: np.ndarray
    sigma_cum: np.ndarray


def doob_decompose(traj: Trajectory) -> DoobDecomposition:
    """Exact per-period split; ``lam[t] == lam[0] + M[t] + A[t]`` by construction.

    ``A`` cumulates the recorded conditional drifts, ``sigma_cum`` the
    recorded conditional variances of the martingale increments.
    """
    k = traj.lam.size - 1
    if traj.drift_base.size != k or traj.sigma_sq.size != k:
        raise DiagnosticsError(
            f"trajectory {traj.index}: {k} transitions but "
            f"{traj.drift_base.size} drift / {traj.sigma_sq.size} variance records"
        )
    a = np.concatenate(([0.0], np.cumsum(traj.drift_total)))
    m = traj.lam - traj.lam[0] - a
    sig = np.concatenate(([0.0], np.cumsum(traj.sigma_sq)))
    return DoobDecomposition(M=m, A=a, sigma_cum=sig)


@dataclass(frozen=True)
class ConvergenceLabel:
    label: str
    terminal_lambda: float
    final_window_max: float
    dipped: bool
    recrossed: bool


def classify_convergence(
    traj: Trajectory, learned_cut: float = -30.0, window: int | None = None
) -> ConvergenceLabel:
    """Finite-horizon surrogate for the asymptotic learning dichotomy.

    ``learned``: the terminal log-odds clears ``learned_cut`` and the final
    window never rises above ``learned_cut / 2``.  ``failed``: the path
    dipped below ``learned_cut / 2`` but later re-crossed 0.  Everything
    else is ``undecided``.
    """
    lam = traj.lam
    horizon = lam.size - 1
    if window is None:
        window = max(1, horizon // 10)
    if horizon < window:
        raise DomainError(f"horizon {horizon} shorter than window {window}")
    terminal = float(lam[-1])
    final_window_max = float(lam[-window:].max())
    half = learned_cut / 2.0

    below = lam < half
    dipped = bool(below.any())
    recrossed = False
    if dipped:
        first = int(np.argmax(below))
        recrossed = bool((lam[first + 1 :] > 0.0).any())

    if terminal < learned_cut and final_window_max < half:
        label = "learned"
    elif dipped and recrossed:
        label = "failed"
    else:
        label = "undecided"
    return ConvergenceLabel(label, terminal, final_window_max, dipped, recrossed)


def _recorded_l_range(trajs: list[Trajectory], lam_cut: float | None = None):
    """Min/max recorded project, optionally only where the choice was made
    at log-odds <= lam_cut."""
    lo, hi, count = math.inf, -math.inf, 0
    for traj in trajs:
        ls = traj.l_star
        if lam_cut is not None:
            ls = ls[traj.lam[:-1] <= lam_cut]
        ls = ls[np.isfinite(ls)]
        if ls.size:
            lo = min(lo, float(ls.min()))
            hi = max(hi, float(ls.max()))
            count += ls.size
    return lo, hi, count


def _increment_bound(sm: SuccessModel, p: float, l_lo: float, l_hi: float) -> float:
    """Almost-sure bound on |one-period log-odds change| over a project range."""
    grid = np.geomspace(l_lo, l_hi, 2001)
    _, _, log_l, fail = _increments(sm, p, grid)
    return float(np.maximum(np.abs(log_l), np.abs(fail)).max())


@dataclass(frozen=True)
class AzumaRow:
    t: int
    frequency: float
    bound: float
    stderr: float
    violated: bool


@dataclass(frozen=True)
class AzumaReport:
    applicable: bool
    reason: str
    delta: float
    increment_bound: float
    rows: tuple[AzumaRow, ...]


def azuma_check(
    ensemble: list[Trajectory],
    delta: float,
    cfg: ScenarioConfig,
    times: tuple[int, ...] | None = None,
) -> AzumaReport:
    """Compare empirical tail frequencies of the drift-compensated process
    against the concentration bound for bounded-increment supermartingales.

    Applicable only when every recorded conditional drift is <= -delta; the
    checked event is ``lam_t - lam_0 >= -delta * t / 4`` and the bound is
    ``exp(-delta**2 * t / (32 * (d + delta / 2)**2))`` with ``d`` the
    increment bound over the recorded project range.
    """
    if delta <= 0.0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    if not ensemble:
        raise DiagnosticsError("empty ensemble")
    max_drift = max(float(traj.drift_total.max()) for traj in ensemble if traj.drift_total.size)
    if max_drift > -delta:
        return AzumaReport(
            applicable=False,
            reason=(
                f"supermartingale margin not met: max recorded drift {max_drift:.6g} "
                f"> -delta = {-delta:.6g}"
            ),
            delta=delta,
            increment_bound=math.nan,
            rows=(),
        )
    l_lo, l_hi, _ = _recorded_l_range(ensemble)
    d = _increment_bound(cfg.sm, cfg.p, l_lo, l_hi)

    horizon = min(traj.horizon for traj in ensemble)
    if times is None:
        times = (1000, 5000)
    times = tuple(int(t) for t in times if 1 <= t <= horizon)

    rows = []
    n = len(ensemble)
    for t in times:
        excess = np.array([traj.lam[t] - traj.lam[0] for traj in ensemble])
        freq = float((excess >= -delta * t / 4.0).mean())
        bound = math.exp(-(delta**2) * t / (32.0 * (d + delta / 2.0) ** 2))
        se = math.sqrt(max(bound * (1.0 - bound), 1e-300) / n)
        rows.append(AzumaRow(t, freq, bound, se, freq > bound + 3.0 * se))
    return AzumaReport(True, "", delta, d, tuple(rows))


@dataclass(frozen=True)
class CltRow:
    nu: float
    n_included: int
    n_excluded: int
    degenerate: bool
    ks_distance: float
    tau_min: int
    tau_max: int
    tau_bound_ok: bool


@dataclass(frozen=True)
class CltReport:
    variance_bound: float
    rows: tuple[CltRow, ...]


def clt_probe(
    ensemble: list[Trajectory], nu_list, cfg: ScenarioConfig
) -> CltReport:
    """Distribution of the martingale at variance stopping times.

    For each variance level nu, stop each trajectory once its cumulative
    conditional variance reaches nu and collect M_tau / sqrt(nu); report the
    Kolmogorov-Smirnov distance to the standard normal.  Trajectories whose
    variance never reaches nu are excluded and counted.
    """
    if not ensemble:
        raise DiagnosticsError("empty ensemble")
    l_lo, l_hi, _ = _recorded_l_range(ensemble)
    grid = np.geomspace(l_lo, l_hi, 2001)
    s_bound = float(np.max(sigma_sq(cfg.sm, cfg.p, cfg.eps, grid)))
    s_bound = max(
        s_bound, max(float(t.sigma_sq.max()) for t in ensemble if t.sigma_sq.size)
    )

    rows = []
    for nu in nu_list:
        nu = float(nu)
        if nu <= 0.0:
            rows.append(CltRow(nu, len(ensemble), 0, True, math.nan, 0, 0, True))
            continue
        samples = []
        taus = []
        excluded = 0
        bound_ok = True
        for traj in ensemble:
            dec = doob_decompose(traj)
            cum = dec.sigma_cum[1:]
            pos = int(np.searchsorted(cum, nu, side="left"))
            if pos >= cum.size:
                excluded += 1
                continue
            tau = pos + 1
            taus.append(tau)
            samples.append(dec.M[tau] / math.sqrt(nu))
            if not tau >= nu / s_bound - 1.0:
                bound_ok = False
        if samples:
            ks = float(stats.kstest(np.array(samples), "norm").statistic)
            rows.append(
                CltRow(nu, len(samples), excluded, False, ks, min(taus), max(taus), bound_ok)
            )
        else:
            rows.append(CltRow(nu, 0, excluded, False, math.nan, 0, 0, bound_ok))
    return CltReport(s_bound, tuple(rows))


@dataclass(frozen=True)
class EpsilonThreshold:
    epsilon: float
    ok: bool
    diagnostic: str
    cap: float


def epsilon_threshold(
    ps: PayoffSpec,
    sm: SuccessModel,
    p: float,
    policy_range: tuple[float, float],
    delta: float,
) -> EpsilonThreshold:
    """Largest hacking intensity keeping total drift <= -delta on a range.

    The drift is evaluated on a 2000-point geometric grid over the project
    range; the answer is found by bisection to 1e-6 and capped by the
    probability bound ``max p_A + eps <= 1``.  Returns 0 with a diagnostic
    when even the undistorted drift does not clear -delta (delta too large).
    """
    l_min, l_max = float(policy_range[0]), float(policy_range[1])
    if not (0.0 < l_min <= l_max) or not math.isfinite(l_max):
        raise DomainError(f"policy range must be compact inside (0, inf), got {policy_range!r}")
    if delta <= 0.0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    grid = np.geomspace(l_min, l_max, 2000)
    l_a, _ = peaks(sm)
    sup_a, _ = success_probs(sm, l_a)
    cap = 1.0 - sup_a

    def worst(eps: float) -> float:
        return float(np.max(drift(sm, p, eps, grid).total))

    if worst(0.0) > -delta:
        return EpsilonThreshold(
            0.0,
            False,
            f"delta too large: undistorted drift reaches {worst(0.0):.6g} > {-delta:.6g} "
            f"on the range (is the uninformative project inside it?)",
            cap,
        )
    if worst(cap) <= -delta:
        return EpsilonThreshold(
            cap, True, "margin holds for every intensity up to the probability cap", cap
        )
    lo, hi = 0.0, cap
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if worst(mid) <= -delta:
            lo = mid
        else:
            hi = mid
    return EpsilonThreshold(lo, True, "", cap)


@dataclass(frozen=True)
class EscapeThreshold:
    lambda_bar: float
    l_bar: float
    min_drift_below: float
    verified: bool
    n_probes_below: int


def escape_threshold(
    ps: PayoffSpec,
    sm: SuccessModel,
    p: float,
    eps: float,
    delta: float,
    lam_probe=None,
) -> EscapeThreshold:
    """Belief and project thresholds past which the drift turns positive.

    Requires a payoff whose policy diverges as the belief concentrates on
    the true state.  Finds the smallest project l_bar > 1 whose hacking gain
    ``eps * p * log(l_bar)`` beats the worst failure correction beyond it by
    ``delta``, then the largest log-odds lambda_bar below which every probed
    policy value exceeds l_bar.
    """
    if delta <= 0.0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    if lam_probe is None:
        lam_probe = np.linspace(-16.0, 0.0, 161)
    lam_probe = np.asarray(lam_probe, dtype=float)

    policy, _, _, _ = _solve_policy_arrays(ps, sm, lam_probe)
    deep = float(policy[0])
    mid = float(policy[lam_probe.size // 2])
    if not (deep >= 100.0 and deep >= 10.0 * mid):
        raise PolicyClassError(
            f"policy does not diverge toward extreme beliefs "
            f"(l*({lam_probe[0]:.3g}) = {deep:.3g}, l*({lam_probe[lam_probe.size // 2]:.3g}) "
            f"= {mid:.3g}); escape thresholds exist only for fast-growing payoffs"
        )

    grid = np.geomspace(1.05, 1e9, 4000)
    _, _, _, fail = _increments(sm, p, grid)
    correction = np.maximum.accumulate(np.abs(fail)[::-1])[::-1]
    usable = grid <= 1e8
    condition = usable & (eps * p * np.log(grid) - correction > delta)
    if not condition.any():
        raise DiagnosticsError(
            f"no project clears the distortion margin eps*p*log(l) - correction > "
            f"{delta:.6g} (eps = {eps!r}); the hacking gain vanishes"
        )
    l_bar = float(grid[int(np.argmax(condition))])

    ok = policy > l_bar
    first_bad = int(np.argmax(~ok)) if (~ok).any() else lam_probe.size
    if first_bad == 0:
        raise DiagnosticsError(
            f"no probed belief has policy above l_bar = {l_bar:.6g}; widen the probe grid"
        )
    lambda_bar = float(lam_probe[min(first_bad, lam_probe.size - 1)])
    below = policy[:first_bad]
    totals = drift(sm, p, eps, below).total
    min_drift = float(np.min(totals))
    return EscapeThreshold(
        lambda_bar=lambda_bar,
        l_bar=l_bar,
        min_drift_below=min_drift,
        verified=bool(min_drift > 0.0),
        n_probes_below=int(first_bad),
    )


def ensemble_diagnostics(
    trajs: list[Trajectory],
    cfg: ScenarioConfig,
    *,
    learned_cut: float = -30.0,
    window: int | None = None,
    azuma_times: tuple[int, ...] = (1000, 5000),
    nu_levels: tuple[float, ...] = (50.0, 100.0, 200.0),
    martingale_times: tuple[int, ...] = (100, 1000, 10000),
    regime_lambda_cut: float = -2.0,
    escape_delta: float = 0.01,
) -> dict:
    """Full JSON-ready diagnostics report for a simulated ensemble.

    Labels every trajectory (in place), checks the decomposition, the
    martingale property, the concentration bound, the CLT probe, and
    computes the threshold appropriate to the payoff class.  The
    supermartingale quantities use the project range recorded while the
    choice was made at log-odds below ``regime_lambda_cut``, which excludes
    the uninformative neighborhood of the initial transition.
    """
    if not trajs:
        raise DiagnosticsError("empty ensemble")
    n = len(trajs)
    horizon = min(t.horizon for t in trajs)
    if horizon == 0:
        lam_end = np.array([t.lambda_end for t in trajs])
        return {
            "n_trajectories": n,
            "horizon": 0,
            "learned_cut": learned_cut,
            "labels": {"learned": 0, "failed": 0, "undecided": n},
            "learned_fraction": 0.0,
            "mean_lambda_end": float(lam_end.mean()),
            "std_lambda_end": float(lam_end.std(ddof=1)) if n > 1 else math.nan,
            "mean_recorded_drift": math.nan,
            "horizon_times_mean_drift": 0.0,
            "max_doob_residual": 0.0,
            "martingale_means": [],
            "policy_range": [math.nan, math.nan],
            "policy_range_regime": [math.nan, math.nan],
            "azuma": {"applicable": False, "reason": "no steps", "delta": 0.0,
                      "increment_bound": math.nan, "rows": []},
            "clt": {"variance_bound": math.nan, "rows": []},
            "threshold": {"kind": "none", "error": "no steps"},
            "terminated_early": 0,
        }

    labels = {"learned": 0, "failed": 0, "undecided": 0}
    for traj in trajs:
        lab = classify_convergence(traj, learned_cut, window)
        traj.label = lab.label
        labels[lab.label] += 1

    lam_end = np.array([t.lambda_end for t in trajs])
    all_drift = np.concatenate([t.drift_total for t in trajs if t.drift_total.size])
    mean_drift = float(all_drift.mean())

    max_residual = 0.0
    m_at = {t: [] for t in martingale_times if t <= horizon}
    for traj in trajs:
        dec = doob_decompose(traj)
        resid = traj.lam - traj.lam[0] - dec.M - dec.A
        max_residual = max(max_residual, float(np.abs(resid).max()))
        for t in m_at:
            m_at[t].append(float(dec.M[t]))
    martingale_rows = []
    for t, vals in sorted(m_at.items()):
        arr = np.array(vals)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else math.nan
        martingale_rows.append(
            {
                "t": t,
                "mean_m": float(arr.mean()),
                "stderr": se,
                "within_4se": bool(abs(arr.mean()) <= 4.0 * se) if se == se else False,
            }
        )

    l_lo_all, l_hi_all, _ = _recorded_l_range(trajs)
    l_lo_reg, l_hi_reg, n_reg = _recorded_l_range(trajs, lam_cut=regime_lambda_cut)

    azuma_delta = 0.95 * abs(float(all_drift.max()))
    azuma = (
        azuma_check(trajs, azuma_delta, cfg, azuma_times)
        if azuma_delta > 0.0
        else AzumaReport(False, "nonnegative recorded drift", 0.0, math.nan, ())
    )
    clt = clt_probe(trajs, nu_levels, cfg)

    threshold: dict = {}
    if isinstance(cfg.ps, BoundedExpPayoff):
        if n_reg > 0:
            grid = np.geomspace(l_lo_reg, l_hi_reg, 2000)
            base_max_mag = float(np.max(np.abs(drift(cfg.sm, cfg.p, 0.0, grid).base)))
            delta = 0.5 * base_max_mag
            est = epsilon_threshold(cfg.ps, cfg.sm, cfg.p, (l_lo_reg, l_hi_reg), delta)
            threshold = {
                "kind": "epsilon_threshold",
                "delta": delta,
                "policy_range": [l_lo_reg, l_hi_reg],
                "regime_lambda_cut": regime_lambda_cut,
                "n_regime_records": n_reg,
                **asdict(est),
            }
        else:
            threshold = {
                "kind": "epsilon_threshold",
                "error": f"no choices recorded at log-odds <= {regime_lambda_cut}",
            }
    else:
        try:
            est = escape_threshold(cfg.ps, cfg.sm, cfg.p, cfg.eps, escape_delta)
            threshold = {"kind": "escape_threshold", "delta": escape_delta, **asdict(est)}
        except (PolicyClassError, DiagnosticsError) as exc:
            threshold = {"kind": "escape_threshold", "error": str(exc)}

    return {
        "n_trajectories": n,
        "horizon": horizon,
        "learned_cut": learned_cut,
        "labels": labels,
        "learned_fraction": labels["learned"] / n,
        "mean_lambda_end": float(lam_end.mean()),
        "std_lambda_end": float(lam_end.std(ddof=1)) if n > 1 else math.nan,
        "mean_recorded_drift": mean_drift,
        "horizon_times_mean_drift": mean_drift * horizon,
        "max_doob_residual": max_residual,
        "martingale_means": martingale_rows,
        "policy_range": [l_lo_all, l_hi_all],
        "policy_range_regime": [l_lo_reg, l_hi_reg],
        "azuma": {
            "applicable": azuma.applicable,
            "reason": azuma.reason,
            "delta": azuma.delta,
            "increment_bound": azuma.increment_bound,
            "rows": [asdict(r) for r in azuma.rows],
        },
        "clt": {
            "variance_bound": clt.variance_bound,
            "rows": [asdict(r) for r in clt.rows],
        },
        "threshold": threshold,
        "terminated_early": sum(t.terminated_early for t in trajs),
    }
