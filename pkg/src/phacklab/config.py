"""Scenario configuration files: strict schema, normalized echo, round trip.

Configs are TOML with nested sections for the success model, the payoff,
the dynamics, diagnostics settings, output switches, optional acceptance
thresholds, and optional sweep declarations.  Unknown keys are errors, so
typos fail loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .dynamics import ScenarioConfig
from .errors import ConfigError, DomainError, ModelValidationError, PhacklabError
from .payoffs import BoundedExpPayoff, FastReciprocalPayoff, PayoffSpec
from .success import SuccessModel

__all__ = ["RunSpec", "load_config", "config_from_dict", "config_to_dict"]


@dataclass(frozen=True)
class DiagnosticsSettings:
    learned_cut: float = -30.0
    window: int | None = None
    azuma_times: tuple[int, ...] = (1000, 5000)
    nu_levels: tuple[float, ...] = (50.0, 100.0, 200.0)
    martingale_times: tuple[int, ...] = (100, 1000, 10000)
    regime_lambda_cut: float = -2.0
    escape_delta: float = 0.01


@dataclass(frozen=True)
class AcceptanceThresholds:
    learned_fraction_min: float | None = None
    learned_fraction_max: float | None = None

    @property
    def declared(self) -> bool:
        return self.learned_fraction_min is not None or self.learned_fraction_max is not None


@dataclass(frozen=True)
class SweepSettings:
    u_values: tuple[float, ...] = ()
    near_one_ks: tuple[int, ...] = ()
    near_zero_ks: tuple[int, ...] = ()
    extra_payoffs: tuple[tuple[str, PayoffSpec], ...] = ()


@dataclass(frozen=True)
class RunSpec:
    scenario: ScenarioConfig
    n_trajectories: int = 1
    write_trajectories: bool = True
    diagnostics: DiagnosticsSettings = field(default_factory=DiagnosticsSettings)
    acceptance: AcceptanceThresholds = field(default_factory=AcceptanceThresholds)
    sweep: SweepSettings = field(default_factory=SweepSettings)


_TOP_KEYS = ("model", "payoff", "dynamics", "diagnostics", "output", "acceptance", "sweep")


class _Section:
    def __init__(self, name: str, data: dict, errors: list[str]):
        self.name = name
        self.data = dict(data)
        self.errors = errors

    def take(self, key: str, kind: str, default=None, required: bool = False):
        where = f"[{self.name}].{key}" if self.name else key
        if key not in self.data:
            if required:
                self.errors.append(f"{where}: required key is missing")
            return default
        value = self.data.pop(key)
        try:
            return _coerce(value, kind)
        except (TypeError, ValueError) as exc:
            self.errors.append(f"{where}: {exc}")
            return default

    def finish(self):
        for key in self.data:
            self.errors.append(f"[{self.name}].{key}: unknown key")


def _coerce(value, kind: str):
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise TypeError(f"expected a string, got {value!r}")
        return value
    if kind in ("float_list", "int_list"):
        if not isinstance(value, list):
            raise TypeError(f"expected a list, got {value!r}")
        inner = "float" if kind == "float_list" else "int"
        return tuple(_coerce(v, inner) for v in value)
    raise AssertionError(kind)


def _parse_payoff(name: str, data: dict, sm: SuccessModel | None, errors: list[str]):
    sec = _Section(name, data, errors)
    kind = sec.take("kind", "str", required=True)
    payoff = None
    if kind == "bounded_exp":
        c = sec.take("c", "float", 1.0)
        gamma = sec.take("gamma", "float", 1.0)
        sec.finish()
        try:
            payoff = BoundedExpPayoff(c=c, gamma=gamma)
        except PhacklabError as exc:
            errors.append(f"[{name}]: {exc}")
    elif kind == "fast_reciprocal":
        c = sec.take("c", "float", 1.0)
        d = sec.take("d", "float", required=True)
        sec.finish()
        if sm is not None and d is not None:
            try:
                payoff = FastReciprocalPayoff(c=c, d=d, sm=sm)
            except PhacklabError as exc:
                errors.append(f"[{name}]: {exc}")
    elif kind is not None:
        errors.append(
            f"[{name}].kind: must be 'bounded_exp' or 'fast_reciprocal', got {kind!r}"
        )
        sec.finish()
    return payoff


def config_from_dict(raw: dict) -> RunSpec:
    """Validate a parsed config mapping and build the run specification."""
    errors: list[str] = []
    raw = dict(raw)
    for key in list(raw):
        if key not in _TOP_KEYS:
            errors.append(f"[{key}]: unknown section")
            raw.pop(key)
    for key in _TOP_KEYS:
        if key in raw and not isinstance(raw[key], dict):
            errors.append(f"[{key}]: expected a section (table)")
            raw[key] = {}

    model = _Section("model", raw.get("model", {}), errors)
    alpha = model.take("alpha", "float", 2.0)
    beta = model.take("beta", "float", 3.0)
    kappa = model.take("kappa", "float", 8.0)
    model.finish()
    sm = None
    try:
        sm = SuccessModel(alpha=alpha, beta=beta, kappa=kappa)
    except PhacklabError as exc:
        errors.append(f"[model]: {exc}")

    payoff = _parse_payoff("payoff", raw.get("payoff", {}), sm, errors)

    dyn = _Section("dynamics", raw.get("dynamics", {}), errors)
    p = dyn.take("p", "float", 0.5)
    eps = dyn.take("eps", "float", 0.0)
    lambda0 = dyn.take("lambda0", "float", 0.0)
    horizon = dyn.take("horizon", "int", 1)
    seed = dyn.take("seed", "int", 0)
    n_trajectories = dyn.take("n_trajectories", "int", 1)
    true_state = dyn.take("true_state", "str", "A")
    dyn.finish()
    if n_trajectories is not None and n_trajectories < 1:
        errors.append(f"[dynamics].n_trajectories: must be >= 1, got {n_trajectories}")

    dia = _Section("diagnostics", raw.get("diagnostics", {}), errors)
    diagnostics = DiagnosticsSettings(
        learned_cut=dia.take("learned_cut", "float", -30.0),
        window=dia.take("window", "int", None),
        azuma_times=dia.take("azuma_times", "int_list", (1000, 5000)),
        nu_levels=dia.take("nu_levels", "float_list", (50.0, 100.0, 200.0)),
        martingale_times=dia.take("martingale_times", "int_list", (100, 1000, 10000)),
        regime_lambda_cut=dia.take("regime_lambda_cut", "float", -2.0),
        escape_delta=dia.take("escape_delta", "float", 0.01),
    )
    dia.finish()

    out = _Section("output", raw.get("output", {}), errors)
    write_trajectories = out.take("write_trajectories", "bool", True)
    out.finish()

    acc = _Section("acceptance", raw.get("acceptance", {}), errors)
    acceptance = AcceptanceThresholds(
        learned_fraction_min=acc.take("learned_fraction_min", "float", None),
        learned_fraction_max=acc.take("learned_fraction_max", "float", None),
    )
    acc.finish()

    sweep_raw = dict(raw.get("sweep", {}))
    extra_payoffs: list[tuple[str, PayoffSpec]] = []
    payoff_tables = sweep_raw.pop("payoffs", [])
    if not isinstance(payoff_tables, list):
        errors.append("[sweep].payoffs: expected an array of tables")
        payoff_tables = []
    for j, table in enumerate(payoff_tables):
        if not isinstance(table, dict):
            errors.append(f"[sweep].payoffs[{j}]: expected a table")
            continue
        table = dict(table)
        label = table.pop("label", f"payoff_{j}")
        ps_j = _parse_payoff(f"sweep.payoffs[{j}]", table, sm, errors)
        if ps_j is not None:
            extra_payoffs.append((str(label), ps_j))
    swp = _Section("sweep", sweep_raw, errors)
    sweep = SweepSettings(
        u_values=swp.take("u_values", "float_list", ()),
        near_one_ks=swp.take("near_one_ks", "int_list", ()),
        near_zero_ks=swp.take("near_zero_ks", "int_list", ()),
        extra_payoffs=tuple(extra_payoffs),
    )
    swp.finish()

    scenario = None
    if sm is not None and payoff is not None and not errors:
        try:
            scenario = ScenarioConfig(
                sm=sm,
                ps=payoff,
                p=p,
                eps=eps,
                lambda0=lambda0,
                horizon=horizon,
                seed=seed,
                true_state=true_state,
            )
        except (DomainError, ModelValidationError) as exc:
            errors.append(f"[dynamics]: {exc}")

    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    assert scenario is not None
    return RunSpec(
        scenario=scenario,
        n_trajectories=n_trajectories,
        write_trajectories=write_trajectories,
        diagnostics=diagnostics,
        acceptance=acceptance,
        sweep=sweep,
    )


def load_config(path: str | Path) -> RunSpec:
    """Parse and validate a TOML scenario file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}")
    return config_from_dict(raw)


def _payoff_to_dict(ps: PayoffSpec) -> dict:
    if isinstance(ps, BoundedExpPayoff):
        return {"kind": "bounded_exp", "c": ps.c, "gamma": ps.gamma}
    return {"kind": "fast_reciprocal", "c": ps.c, "d": ps.d}


def config_to_dict(spec: RunSpec) -> dict:
    """Normalized, reparseable echo of a run specification."""
    sc = spec.scenario
    out = {
        "model": {"alpha": sc.sm.alpha, "beta": sc.sm.beta, "kappa": sc.sm.kappa},
        "payoff": _payoff_to_dict(sc.ps),
        "dynamics": {
            "p": sc.p,
            "eps": sc.eps,
            "lambda0": sc.lambda0,
            "horizon": sc.horizon,
            "seed": sc.seed,
            "n_trajectories": spec.n_trajectories,
            "true_state": sc.true_state,
        },
        "diagnostics": {
            "learned_cut": spec.diagnostics.learned_cut,
            "azuma_times": list(spec.diagnostics.azuma_times),
            "nu_levels": list(spec.diagnostics.nu_levels),
            "martingale_times": list(spec.diagnostics.martingale_times),
            "regime_lambda_cut": spec.diagnostics.regime_lambda_cut,
            "escape_delta": spec.diagnostics.escape_delta,
        },
        "output": {"write_trajectories": spec.write_trajectories},
    }
    if spec.diagnostics.window is not None:
        out["diagnostics"]["window"] = spec.diagnostics.window
    if spec.acceptance.declared:
        acc = {}
        if spec.acceptance.learned_fraction_min is not None:
            acc["learned_fraction_min"] = spec.acceptance.learned_fraction_min
        if spec.acceptance.learned_fraction_max is not None:
            acc["learned_fraction_max"] = spec.acceptance.learned_fraction_max
        out["acceptance"] = acc
    sweep = spec.sweep
    if sweep.u_values or sweep.near_one_ks or sweep.near_zero_ks or sweep.extra_payoffs:
        sw: dict = {}
        if sweep.u_values:
            sw["u_values"] = list(sweep.u_values)
        if sweep.near_one_ks:
            sw["near_one_ks"] = list(sweep.near_one_ks)
        if sweep.near_zero_ks:
            sw["near_zero_ks"] = list(sweep.near_zero_ks)
        if sweep.extra_payoffs:
            sw["payoffs"] = [
                {"label": label, **_payoff_to_dict(ps)} for label, ps in sweep.extra_payoffs
            ]
        out["sweep"] = sw
    return out
