"""Shared fixtures: one enriched 15-day corpus and one trained model graph,
built once per session and reused by module and acceptance tests."""
from __future__ import annotations

import pytest

from chillerplant import enrich, surrogate, telemetry
from chillerplant.simplant import (
    MINUTES_PER_DAY,
    PlantConfig,
    Scenario,
    fixed_regime_controller,
    simulate,
)

SCENARIO_SEED = 42
DAYS = 15
PLAN_SEED = 7
CONTROL_SEED = 7
TRAIN_SEED = 1


def noiseless_scenario(**overrides) -> Scenario:
    plant = PlantConfig(sigma=0.0, temp_sigma=0.0, outlier_rate=0.0)
    kwargs = dict(seed=SCENARIO_SEED, db_noise=0.0, rh_noise=0.0, plant=plant)
    kwargs.update(overrides)
    return Scenario(**kwargs)


@pytest.fixture(scope="session")
def scenario() -> Scenario:
    return Scenario(seed=SCENARIO_SEED, days=DAYS)


@pytest.fixture(scope="session")
def plan(scenario) -> enrich.EnrichmentPlan:
    return enrich.plan_for_days(scenario.days, 3, duration=30, seed=PLAN_SEED)


@pytest.fixture(scope="session")
def enriched_store(tmp_path_factory, scenario, plan) -> telemetry.RecordStore:
    path = tmp_path_factory.mktemp("corpus") / "enriched.jsonl"
    store = telemetry.RecordStore(path)
    controller = enrich.enrichment_controller(
        plan, fixed_regime_controller(scenario), seed=CONTROL_SEED)
    simulate(scenario, controller, scenario.duration, store=store)
    return store


@pytest.fixture(scope="session")
def folds(enriched_store) -> telemetry.FoldSplit:
    return telemetry.kfold_by_days(enriched_store, 5, 3)


@pytest.fixture(scope="session")
def trained(enriched_store, folds, scenario, plan):
    mask = enrich.window_mask(plan, scenario.duration)
    return surrogate.train_graph(enriched_store, folds, seed=TRAIN_SEED,
                                 enriched_mask=mask)


@pytest.fixture(scope="session")
def graph(trained) -> surrogate.PlantModelGraph:
    return trained[0]


@pytest.fixture(scope="session")
def train_report(trained) -> surrogate.TrainReport:
    return trained[1]


@pytest.fixture(scope="session")
def baseline_records(scenario):
    """Three days of un-optimized fixed-regime operation, same scenario."""
    base = Scenario(seed=SCENARIO_SEED, days=3)
    return simulate(base, fixed_regime_controller(base), 3 * MINUTES_PER_DAY)
