"""Shared fixtures: default model, the two bundled payoffs, cached ensembles.

The 400-trajectory ensembles and the dense policy grids are expensive, so
they are built once per session and shared between the module tests and the
acceptance suite.  Build times are recorded in the ``timings`` fixture so
the acceptance runtime budgets can count them.
"""

from __future__ import annotations

import time

import pytest

from phacklab import (
    BoundedExpPayoff,
    FastReciprocalPayoff,
    PolicyInterpolator,
    ScenarioConfig,
    SuccessModel,
    simulate_ensemble,
)

MASTER_SEED = 20260810
HORIZON = 20_000
N_SEEDS = 400


@pytest.fixture(scope="session")
def timings() -> dict:
    return {}


@pytest.fixture(scope="session")
def sm() -> SuccessModel:
    return SuccessModel()


@pytest.fixture(scope="session")
def slow_payoff() -> BoundedExpPayoff:
    return BoundedExpPayoff(c=1.0, gamma=5.0)


@pytest.fixture(scope="session")
def fast_payoff(sm) -> FastReciprocalPayoff:
    return FastReciprocalPayoff(c=1.0, d=2.0, sm=sm)


@pytest.fixture(scope="session")
def slow_policy(slow_payoff, sm, timings):
    t0 = time.perf_counter()
    policy = PolicyInterpolator.build(slow_payoff, sm)
    timings["slow_policy"] = time.perf_counter() - t0
    return policy


@pytest.fixture(scope="session")
def fast_policy(fast_payoff, sm, timings):
    t0 = time.perf_counter()
    policy = PolicyInterpolator.build(fast_payoff, sm)
    timings["fast_policy"] = time.perf_counter() - t0
    return policy


@pytest.fixture(scope="session")
def slow_scenario(sm, slow_payoff) -> ScenarioConfig:
    return ScenarioConfig(
        sm=sm, ps=slow_payoff, p=0.5, eps=0.01, lambda0=0.0, horizon=HORIZON, seed=MASTER_SEED
    )


@pytest.fixture(scope="session")
def fast_scenario(sm, fast_payoff) -> ScenarioConfig:
    return ScenarioConfig(
        sm=sm, ps=fast_payoff, p=0.5, eps=0.05, lambda0=0.0, horizon=HORIZON, seed=MASTER_SEED
    )


@pytest.fixture(scope="session")
def slow_ensemble(slow_scenario, slow_policy, timings):
    """The 400 bounded-payoff trajectories of the bundled slow scenario."""
    t0 = time.perf_counter()
    trajs = simulate_ensemble(slow_scenario, N_SEEDS, policy=slow_policy)
    timings["slow_ensemble"] = time.perf_counter() - t0
    return trajs


@pytest.fixture(scope="session")
def fast_ensemble(fast_scenario, fast_policy, timings):
    """The 400 fast-payoff trajectories of the bundled fast scenario."""
    t0 = time.perf_counter()
    trajs = simulate_ensemble(fast_scenario, N_SEEDS, policy=fast_policy)
    timings["fast_ensemble"] = time.perf_counter() - t0
    return trajs
