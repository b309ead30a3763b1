"""Reproducible experiment harness: scenario runs, sweeps, plot data.

A run writes one directory containing per-trajectory CSVs (optional), an
aggregate CSV, a diagnostics JSON, and a manifest JSON that echoes the full
normalized configuration.  Trajectories depend only on (config, index), so
outputs are byte-identical however many workers are used.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import __version__
from .config import RunSpec, config_from_dict, config_to_dict, load_config
from .diagnostics import ensemble_diagnostics
from .dynamics import Trajectory, drift, simulate_ensemble
from .errors import ConfigError, DiagnosticsError, DomainError
from .optimize import PolicyInterpolator, policy_table
from .payoffs import growth_compare
from .success import peaks

__all__ = [
    "run_scenario",
    "run_policy_sweep",
    "emit_plotdata",
    "diagnose",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

_FLOAT = "%.17g"
PLOT_KINDS = ("lambda_paths", "drift_profile", "policy_curve", "azuma_table")

# Dense policy grids are pure functions of the (payoff, model) pair; memoize
# per process so repeated runs of the same scenario skip the rebuild.
_POLICY_CACHE: dict = {}


def _get_policy(ps, sm) -> PolicyInterpolator:
    key = (ps, sm)
    policy = _POLICY_CACHE.get(key)
    if policy is None:
        policy = PolicyInterpolator.build(ps, sm)
        _POLICY_CACHE[key] = policy
    return policy


def _config_hash(echo: dict) -> str:
    blob = json.dumps(echo, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def write_trajectory_csv(traj: Trajectory, path: Path) -> None:
    lam = traj.lam
    u = expit(-lam)
    lines = ["t,lambda,u,l_star,outcome,drift_base,drift_distortion,sigma_sq"]
    lines.append(("0," + _FLOAT + "," + _FLOAT + ",,,,,") % (lam[0], u[0]))
    row = "%d," + _FLOAT + "," + _FLOAT + "," + _FLOAT + ",%s," + _FLOAT + "," + _FLOAT + "," + _FLOAT
    for t in range(1, lam.size):
        lines.append(
            row
            % (
                t,
                lam[t],
                u[t],
                traj.l_star[t - 1],
                "success" if traj.outcome[t - 1] else "no-success",
                traj.drift_base[t - 1],
                traj.drift_distortion[t - 1],
                traj.sigma_sq[t - 1],
            )
        )
    path.write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path: Path, index: int) -> Trajectory:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("t,lambda,u,l_star"):
            raise DiagnosticsError(f"{path}: not a trajectory file")
        lam, l_star, outcome, base, dist, sig = [], [], [], [], [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            lam.append(float(parts[1]))
            if parts[3]:
                l_star.append(float(parts[3]))
                outcome.append(parts[4] == "success")
                base.append(float(parts[5]))
                dist.append(float(parts[6]))
                sig.append(float(parts[7]))
    return Trajectory(
        index=index,
        lam=np.array(lam),
        l_star=np.array(l_star),
        outcome=np.array(outcome, dtype=bool),
        drift_base=np.array(base),
        drift_distortion=np.array(dist),
        sigma_sq=np.array(sig),
        terminated_early=len(l_star) < len(lam) - 1,
    )


def _traj_filename(index: int) -> str:
    return f"traj_{index:05d}.csv"


def _simulate_chunk(echo: dict, indices: list[int], grid, run_dir: str | None):
    """Worker entry: simulate a block of trajectory indices, write their CSVs."""
    spec = config_from_dict(echo)
    lam_grid, log_l_grid, mode = grid
    policy = PolicyInterpolator(spec.scenario.ps, spec.scenario.sm, lam_grid, log_l_grid, mode)
    trajs = simulate_ensemble(spec.scenario, indices=indices, policy=policy)
    if run_dir is not None:
        tdir = Path(run_dir) / "trajectories"
        for traj in trajs:
            write_trajectory_csv(traj, tdir / _traj_filename(traj.index))
    return trajs


def _seed_summary(traj: Trajectory) -> dict:
    return {
        "index": traj.index,
        "lambda_end": traj.lambda_end,
        "lambda_min": traj.lam_min,
        "lambda_max": traj.lam_max,
        "n_successes": traj.n_successes,
        "steps": traj.horizon,
        "terminated_early": traj.terminated_early,
        "label": traj.label,
    }


def _write_aggregate(trajs: list[Trajectory], path: Path) -> None:
    lines = ["index,lambda_end,lambda_min,lambda_max,n_successes,steps,terminated_early,label"]
    row = "%d," + _FLOAT + "," + _FLOAT + "," + _FLOAT + ",%d,%d,%s,%s"
    for t in trajs:
        lines.append(
            row
            % (
                t.index,
                t.lambda_end,
                t.lam_min,
                t.lam_max,
                t.n_successes,
                t.horizon,
                "yes" if t.terminated_early else "no",
                t.label or "",
            )
        )
    path.write_text("\n".join(lines) + "\n")


def _resolve_spec(config) -> tuple[RunSpec, dict]:
    if isinstance(config, RunSpec):
        spec = config
    elif isinstance(config, dict):
        spec = config_from_dict(config)
    else:
        spec = load_config(config)
    echo = config_to_dict(spec)
    return spec, echo


def _make_run_dir(out_dir, echo: dict, kind: str) -> Path:
    if out_dir is not None:
        run_dir = Path(out_dir)
    else:
        run_dir = Path("runs") / f"{kind}_{_config_hash(echo)}_{_utc_now()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def run_scenario(config, *, out_dir=None, workers: int = 1, seed_offset: int = 0):
    """Simulate the configured ensemble end to end; returns (manifest, run_dir).

    Writes per-trajectory CSVs (if enabled), an aggregate CSV, a diagnostics
    JSON, and the manifest.  ``seed_offset`` shifts the trajectory indices,
    giving a fresh independent ensemble under the same seed.
    """
    started = time.perf_counter()
    spec, echo = _resolve_spec(config)
    run_dir = _make_run_dir(out_dir, echo, "run")
    scenario = spec.scenario
    indices = [seed_offset + i for i in range(spec.n_trajectories)]

    if spec.write_trajectories:
        (run_dir / "trajectories").mkdir(exist_ok=True)

    policy = _get_policy(scenario.ps, scenario.sm)
    grid = (policy.lam_grid, policy.log_l_grid, policy.mode)
    target = str(run_dir) if spec.write_trajectories else None

    if workers <= 1 or len(indices) == 1:
        trajs = _simulate_chunk(echo, indices, grid, target)
    else:
        chunks = [list(c) for c in np.array_split(indices, workers) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_chunk, echo, chunk, grid, target) for chunk in chunks]
            trajs = [t for fut in futures for t in fut.result()]

    dia = spec.diagnostics
    report = ensemble_diagnostics(
        trajs,
        scenario,
        learned_cut=dia.learned_cut,
        window=dia.window,
        azuma_times=dia.azuma_times,
        nu_levels=dia.nu_levels,
        martingale_times=dia.martingale_times,
        regime_lambda_cut=dia.regime_lambda_cut,
        escape_delta=dia.escape_delta,
    )
    report["config"] = echo
    (run_dir / "diagnostics.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    _write_aggregate(trajs, run_dir / "aggregate.csv")

    acceptance = {"declared": spec.acceptance.declared, "passed": None, "checks": []}
    if spec.acceptance.declared:
        checks = []
        frac = report["learned_fraction"]
        if spec.acceptance.learned_fraction_min is not None:
            bound = spec.acceptance.learned_fraction_min
            checks.append(
                {"name": "learned_fraction_min", "bound": bound, "value": frac, "passed": frac >= bound}
            )
        if spec.acceptance.learned_fraction_max is not None:
            bound = spec.acceptance.learned_fraction_max
            checks.append(
                {"name": "learned_fraction_max", "bound": bound, "value": frac, "passed": frac <= bound}
            )
        acceptance["checks"] = checks
        acceptance["passed"] = all(c["passed"] for c in checks)

    manifest = {
        "artifact": "phacklab",
        "version": __version__,
        "kind": "run",
        "created_utc": _utc_now(),
        "wall_clock_s": time.perf_counter() - started,
        "workers": workers,
        "config": echo,
        "config_hash": _config_hash(echo),
        "seed_list": indices,
        "total_steps": int(sum(t.horizon for t in trajs)),
        "files": {
            "aggregate": "aggregate.csv",
            "diagnostics": "diagnostics.json",
            "trajectories": [
                f"trajectories/{_traj_filename(i)}" for i in indices
            ]
            if spec.write_trajectories
            else [],
        },
        "per_seed": [_seed_summary(t) for t in trajs],
        "aggregates": {
            "learned_fraction": report["learned_fraction"],
            "labels": report["labels"],
            "mean_lambda_end": report["mean_lambda_end"],
            "mean_recorded_drift": report["mean_recorded_drift"],
            "terminated_early": report["terminated_early"],
        },
        "acceptance": acceptance,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest, run_dir


def _sweep_u_grid(spec: RunSpec) -> list[float]:
    sweep = spec.sweep
    values = list(sweep.u_values)
    values += [1.0 - 10.0 ** (-k) for k in sweep.near_one_ks]
    values += [10.0 ** (-k) for k in sweep.near_zero_ks]
    if not values:
        values = [float(u) for u in 1.0 / (1.0 + np.exp(np.linspace(-12.0, 12.0, 49)))]
    return sorted(set(values))


def run_policy_sweep(config, *, out_dir=None):
    """Tabulate the optimal project over a belief grid, per declared payoff.

    Emits a sweep CSV (payoff, u, lambda, l_star, ep_star, foc_residual), a
    constrictedness summary per payoff, and pairwise growth comparisons.
    """
    started = time.perf_counter()
    spec, echo = _resolve_spec(config)
    run_dir = _make_run_dir(out_dir, echo, "sweep")
    scenario = spec.scenario
    u_grid = _sweep_u_grid(spec)

    variants = [("payoff", scenario.ps)] + list(spec.sweep.extra_payoffs)
    lines = ["payoff,u,lambda,l_star,ep_star,foc_residual"]
    row = "%s," + ",".join([_FLOAT] * 5)
    summaries = []
    for label, ps in variants:
        table = policy_table(ps, scenario.sm, u_grid)
        for pt in table.points:
            lines.append(row % (label, pt.u, pt.lam, pt.l_star, pt.ep_star, pt.foc))
        near_one = []
        for k in spec.sweep.near_one_ks:
            u = 1.0 - 10.0 ** (-k)
            match = [pt for pt in table.points if abs(pt.u - u) < 1e-15]
            if match:
                near_one.append({"k": k, "u": u, "l_star": match[0].l_star})
        stars = [r["l_star"] for r in near_one]
        summaries.append(
            {
                "payoff": label,
                "l_star_min": table.l_star_min,
                "l_star_max": table.l_star_max,
                "failures": [{"u": u, "error": msg} for u, msg in table.failures],
                "near_one": near_one,
                "near_one_strictly_increasing": bool(
                    len(stars) >= 2 and all(b > a for a, b in zip(stars, stars[1:]))
                ),
                "constricted_heuristic": bool(table.l_star_max < 1e3),
            }
        )
    (run_dir / "sweep.csv").write_text("\n".join(lines) + "\n")

    growth = []
    for i, (label_a, ps_a) in enumerate(variants):
        for label_b, ps_b in variants[i + 1 :]:
            growth.append(
                {
                    "a": label_a,
                    "b": label_b,
                    "order": growth_compare(ps_a, ps_b).value,
                }
            )

    manifest = {
        "artifact": "phacklab",
        "version": __version__,
        "kind": "sweep",
        "created_utc": _utc_now(),
        "wall_clock_s": time.perf_counter() - started,
        "config": echo,
        "config_hash": _config_hash(echo),
        "u_grid": u_grid,
        "files": {"sweep": "sweep.csv"},
        "summaries": summaries,
        "growth_orders": growth,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest, run_dir


def _load_manifest(manifest_path) -> tuple[dict, Path]:
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    return json.loads(path.read_text()), path.parent


def _load_run_trajectories(manifest: dict, run_dir: Path) -> list[Trajectory]:
    files = manifest.get("files", {}).get("trajectories", [])
    if not files:
        raise DiagnosticsError(
            "the run wrote no trajectory files (output.write_trajectories = false)"
        )
    trajs = []
    for index, rel in zip(manifest["seed_list"], files):
        trajs.append(read_trajectory_csv(run_dir / rel, index))
    return trajs


def diagnose(manifest_path, out_path=None):
    """Recompute the diagnostics report from a run's stored trajectories."""
    manifest, run_dir = _load_manifest(manifest_path)
    if manifest.get("kind") != "run":
        raise ConfigError("diagnose needs a scenario-run manifest")
    spec = config_from_dict(manifest["config"])
    trajs = _load_run_trajectories(manifest, run_dir)
    dia = spec.diagnostics
    report = ensemble_diagnostics(
        trajs,
        spec.scenario,
        learned_cut=dia.learned_cut,
        window=dia.window,
        azuma_times=dia.azuma_times,
        nu_levels=dia.nu_levels,
        martingale_times=dia.martingale_times,
        regime_lambda_cut=dia.regime_lambda_cut,
        escape_delta=dia.escape_delta,
    )
    report["config"] = manifest["config"]
    out = Path(out_path) if out_path else run_dir / "diagnostics.json"
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    return report, out


def emit_plotdata(manifest_path, kind: str, out_path=None) -> Path:
    """Project run/sweep outputs into tidy long-format CSVs for plotting."""
    if kind not in PLOT_KINDS:
        raise DomainError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    manifest, run_dir = _load_manifest(manifest_path)
    spec = config_from_dict(manifest["config"])
    scenario = spec.scenario
    out = Path(out_path) if out_path else run_dir / f"plot_{kind}.csv"

    if kind == "lambda_paths":
        if manifest.get("kind") != "run":
            raise ConfigError("lambda_paths needs a scenario-run manifest")
        trajs = _load_run_trajectories(manifest, run_dir)
        lines = ["# columns: seed,t,lambda - log-odds path per trajectory", "seed,t,lambda"]
        row = "%d,%d," + _FLOAT
        for traj in trajs:
            for t, lam in enumerate(traj.lam):
                lines.append(row % (traj.index, t, lam))
    elif kind == "drift_profile":
        l_a, l_b = peaks(scenario.sm)
        grid = np.geomspace(0.05 * l_a, 20.0 * l_b, 513)
        parts = drift(scenario.sm, scenario.p, scenario.eps, grid)
        lines = [
            "# columns: l,base,distortion,total - conditional drift split over a project grid",
            "l,base,distortion,total",
        ]
        row = ",".join([_FLOAT] * 4)
        for vals in zip(grid, parts.base, parts.distortion, parts.total):
            lines.append(row % vals)
    elif kind == "policy_curve":
        lines = [
            "# columns: payoff,u,lambda,l_star - optimal project per belief",
            "payoff,u,lambda,l_star",
        ]
        row = "%s," + ",".join([_FLOAT] * 3)
        if manifest.get("kind") == "sweep":
            for line in (run_dir / manifest["files"]["sweep"]).read_text().splitlines()[1:]:
                parts = line.split(",")
                lines.append(row % (parts[0], float(parts[1]), float(parts[2]), float(parts[3])))
        else:
            u_grid = [float(u) for u in 1.0 / (1.0 + np.exp(np.linspace(-12.0, 12.0, 49)))]
            table = policy_table(scenario.ps, scenario.sm, u_grid)
            for pt in table.points:
                lines.append(row % ("payoff", pt.u, pt.lam, pt.l_star))
    else:  # azuma_table
        dia_path = run_dir / "diagnostics.json"
        if not dia_path.exists():
            raise DiagnosticsError(f"no diagnostics report at {dia_path}; run diagnose first")
        report = json.loads(dia_path.read_text())
        lines = [
            "# columns: t,frequency,bound,stderr - concentration-bound comparison",
            "t,frequency,bound,stderr",
        ]
        row = "%d," + ",".join([_FLOAT] * 3)
        for r in report["azuma"]["rows"]:
            lines.append(row % (r["t"], r["frequency"], r["bound"], r["stderr"]))

    out.write_text("\n".join(lines) + "\n")
    return out
