"""Config schema, experiment runner, file formats, CLI."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from phacklab import ConfigError
from phacklab.cli import main
from phacklab.config import config_from_dict, config_to_dict, load_config
from phacklab.runner import (
    emit_plotdata,
    diagnose,
    read_trajectory_csv,
    run_policy_sweep,
    run_scenario,
    write_trajectory_csv,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def tiny_config(**overrides):
    base = {
        "model": {"alpha": 2.0, "beta": 3.0, "kappa": 8.0},
        "payoff": {"kind": "bounded_exp", "c": 1.0, "gamma": 5.0},
        "dynamics": {
            "p": 0.5,
            "eps": 0.01,
            "lambda0": 0.0,
            "horizon": 200,
            "seed": 314,
            "n_trajectories": 6,
        },
        "diagnostics": {
            "learned_cut": -2.0,
            "azuma_times": [50, 150],
            "nu_levels": [1.0, 2.0],
            "martingale_times": [50, 200],
        },
    }
    for section, values in overrides.items():
        base.setdefault(section, {}).update(values)
    return base


class TestConfigSchema:
    def test_bundled_configs_parse(self):
        for name in ("slow_payoff_small_eps.toml", "fast_payoff_eps005.toml"):
            spec = load_config(CONFIGS / name)
            assert spec.scenario.horizon == 20_000
            assert spec.n_trajectories == 400

    def test_round_trip_equality(self):
        spec = load_config(CONFIGS / "fast_payoff_eps005.toml")
        assert config_from_dict(config_to_dict(spec)) == spec

    def test_unknown_key_is_an_error(self):
        cfg = tiny_config()
        cfg["dynamics"]["horzion"] = 10
        with pytest.raises(ConfigError, match=r"\[dynamics\].horzion"):
            config_from_dict(cfg)

    def test_unknown_section_is_an_error(self):
        cfg = tiny_config()
        cfg["dynamic"] = {"p": 0.5}
        with pytest.raises(ConfigError, match=r"\[dynamic\]"):
            config_from_dict(cfg)

    def test_type_errors_are_field_level(self):
        cfg = tiny_config()
        cfg["dynamics"]["horizon"] = "long"
        with pytest.raises(ConfigError, match=r"\[dynamics\].horizon"):
            config_from_dict(cfg)

    def test_fast_payoff_requires_scale(self):
        cfg = tiny_config()
        cfg["payoff"] = {"kind": "fast_reciprocal", "c": 1.0}
        with pytest.raises(ConfigError, match=r"\[payoff\].d"):
            config_from_dict(cfg)

    def test_unknown_payoff_kind(self):
        cfg = tiny_config()
        cfg["payoff"] = {"kind": "cubic"}
        with pytest.raises(ConfigError, match="bounded_exp"):
            config_from_dict(cfg)

    def test_model_violations_reported(self):
        cfg = tiny_config(model={"kappa": 40.0})
        with pytest.raises(ConfigError, match="probability"):
            config_from_dict(cfg)


class TestTrajectoryCsv:
    def test_round_trip_exact(self, slow_scenario, slow_policy, tmp_path):
        from phacklab import ScenarioConfig, simulate

        cfg = ScenarioConfig(
            sm=slow_scenario.sm,
            ps=slow_scenario.ps,
            p=slow_scenario.p,
            eps=slow_scenario.eps,
            horizon=150,
            seed=7,
        )
        traj = simulate(cfg, index=3, policy=slow_policy)
        path = tmp_path / "traj.csv"
        write_trajectory_csv(traj, path)
        back = read_trajectory_csv(path, 3)
        assert np.array_equal(back.lam, traj.lam)
        assert np.array_equal(back.l_star, traj.l_star)
        assert np.array_equal(back.outcome, traj.outcome)
        assert np.array_equal(back.sigma_sq, traj.sigma_sq)


def _hash_files(run_dir: Path) -> dict:
    out = {}
    for path in sorted((run_dir / "trajectories").glob("*.csv")):
        out[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestRunScenario:
    def test_outputs_and_manifest(self, tmp_path):
        manifest, run_dir = run_scenario(tiny_config(), out_dir=tmp_path / "run")
        assert (run_dir / "manifest.json").exists()
        assert (run_dir / "aggregate.csv").exists()
        assert (run_dir / "diagnostics.json").exists()
        assert len(manifest["files"]["trajectories"]) == 6
        for rel in manifest["files"]["trajectories"]:
            assert (run_dir / rel).exists()
        agg_rows = (run_dir / "aggregate.csv").read_text().splitlines()
        assert len(agg_rows) == 7
        assert manifest["total_steps"] == 6 * 200
        reparsed = config_from_dict(manifest["config"])
        assert reparsed == config_from_dict(tiny_config())

    def test_zero_horizon(self, tmp_path):
        cfg = tiny_config(dynamics={"horizon": 0, "n_trajectories": 3})
        manifest, run_dir = run_scenario(cfg, out_dir=tmp_path / "run0")
        assert manifest["total_steps"] == 0
        traj = read_trajectory_csv(run_dir / manifest["files"]["trajectories"][0], 0)
        assert traj.lam.size == 1

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        cfg = tiny_config()
        m1, d1 = run_scenario(cfg, out_dir=tmp_path / "w1", workers=1)
        m2, d2 = run_scenario(cfg, out_dir=tmp_path / "w2", workers=2)
        assert _hash_files(d1) == _hash_files(d2)
        assert (d1 / "aggregate.csv").read_bytes() == (d2 / "aggregate.csv").read_bytes()
        drop = ("created_utc", "wall_clock_s", "workers")
        a = {k: v for k, v in m1.items() if k not in drop}
        b = {k: v for k, v in m2.items() if k not in drop}
        assert a == b

    def test_seed_offset_gives_fresh_trajectories(self, tmp_path):
        m0, d0 = run_scenario(tiny_config(), out_dir=tmp_path / "o0")
        m8, d8 = run_scenario(tiny_config(), out_dir=tmp_path / "o8", seed_offset=8)
        assert m8["seed_list"] == [8 + i for i in range(6)]
        first0 = (d0 / m0["files"]["trajectories"][0]).read_bytes()
        first8 = (d8 / m8["files"]["trajectories"][0]).read_bytes()
        assert first0 != first8

    def test_acceptance_thresholds_recorded(self, tmp_path):
        cfg = tiny_config(acceptance={"learned_fraction_min": 0.99})
        manifest, _ = run_scenario(cfg, out_dir=tmp_path / "acc")
        assert manifest["acceptance"]["declared"]
        assert manifest["acceptance"]["checks"][0]["name"] == "learned_fraction_min"


@pytest.fixture(scope="module")
def sweep_result(tmp_path_factory):
    cfg = tiny_config()
    cfg["payoff"] = {"kind": "fast_reciprocal", "c": 1.0, "d": 2.0}
    cfg["dynamics"]["eps"] = 0.05
    cfg["sweep"] = {
        "u_values": [0.3, 0.5, 0.7],
        "near_one_ks": [2, 3, 4],
        "payoffs": [
            {"label": "fast_d3", "kind": "fast_reciprocal", "c": 1.0, "d": 3.0},
            {"label": "bounded", "kind": "bounded_exp", "c": 1.0, "gamma": 5.0},
        ],
    }
    return run_policy_sweep(cfg, out_dir=tmp_path_factory.mktemp("sweep"))


class TestSweepAndPlotdata:
    def test_sweep_summaries(self, sweep_result):
        manifest, run_dir = sweep_result
        assert (run_dir / "sweep.csv").exists()
        by_label = {s["payoff"]: s for s in manifest["summaries"]}
        assert by_label["payoff"]["near_one_strictly_increasing"]
        assert not by_label["payoff"]["constricted_heuristic"]
        assert by_label["bounded"]["constricted_heuristic"]

    def test_growth_orders(self, sweep_result):
        manifest, _ = sweep_result
        orders = {(g["a"], g["b"]): g["order"] for g in manifest["growth_orders"]}
        assert orders[("payoff", "fast_d3")] == "slower"
        assert orders[("payoff", "bounded")] == "faster"

    def test_policy_curve_from_sweep(self, sweep_result):
        _, run_dir = sweep_result
        out = emit_plotdata(run_dir, "policy_curve")
        lines = out.read_text().splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == "payoff,u,lambda,l_star"
        assert len(lines) > 10

    def test_run_plotdata_kinds(self, tmp_path):
        _, run_dir = run_scenario(tiny_config(), out_dir=tmp_path / "run")
        lam = emit_plotdata(run_dir, "lambda_paths")
        assert lam.read_text().splitlines()[1] == "seed,t,lambda"
        drift_csv = emit_plotdata(run_dir, "drift_profile")
        assert "l,base,distortion,total" in drift_csv.read_text().splitlines()[1]
        pol = emit_plotdata(run_dir, "policy_curve")
        assert len(pol.read_text().splitlines()) == 51
        az = emit_plotdata(run_dir, "azuma_table")
        assert az.read_text().splitlines()[1] == "t,frequency,bound,stderr"

    def test_diagnose_recomputes(self, tmp_path):
        manifest, run_dir = run_scenario(tiny_config(), out_dir=tmp_path / "run")
        stored = json.loads((run_dir / "diagnostics.json").read_text())
        report, out = diagnose(run_dir)
        assert out.exists()
        assert report["labels"] == stored["labels"]
        assert report["mean_lambda_end"] == pytest.approx(stored["mean_lambda_end"])


class TestCli:
    def write_config(self, tmp_path, text_overrides=""):
        cfg = tmp_path / "scenario.toml"
        cfg.write_text(
            """
[model]
alpha = 2.0
beta = 3.0
kappa = 8.0

[payoff]
kind = "bounded_exp"
c = 1.0
gamma = 5.0

[dynamics]
p = 0.5
eps = 0.01
horizon = 120
seed = 11
n_trajectories = 4

[diagnostics]
learned_cut = -2.0
azuma_times = [50]
nu_levels = [1.0]
martingale_times = [50]
"""
            + text_overrides
        )
        return cfg

    def test_run_and_plotdata(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        assert "run complete" in capsys.readouterr().out
        assert main(["plotdata", str(out), "--kind", "drift_profile"]) == 0
        assert main(["diagnose", str(out)]) == 0

    def test_failing_acceptance_sets_exit_code(self, tmp_path):
        cfg = self.write_config(
            tmp_path, "\n[acceptance]\nlearned_fraction_min = 1.0\n"
        )
        assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 1

    def test_bad_config_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[dynamics]\nhorzion = 5\n")
        assert main(["run", str(bad)]) == 2
        assert "horzion" in capsys.readouterr().err

    def test_unknown_plot_kind_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["plotdata", "whatever.json", "--kind", "sparkles"])
        assert exc.value.code == 2

    def test_sweep_command(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, "\n[sweep]\nu_values = [0.4, 0.6]\n")
        assert main(["sweep", str(cfg), "--out", str(tmp_path / "sw")]) == 0
        assert "sweep complete" in capsys.readouterr().out
