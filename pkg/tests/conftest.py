from __future__ import annotations

import pytest

import causalnav as cn
from causalnav.graphs import ground_truth_model
from causalnav.inference import CausalInferenceEngine
from causalnav.pipeline import build_dataset
from importlib import resources


def _bundled(name: str) -> str:
    return resources.files("causalnav.scenarios").joinpath(f"{name}.yaml").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def desk_scenario():
    return cn.load_scenario(_bundled("desk20"))


@pytest.fixture(scope="session")
def full_scenario():
    return cn.load_scenario(_bundled("warehouse73"))


@pytest.fixture(scope="session")
def sim_params():
    return cn.SimParams(n_workers=20)


@pytest.fixture(scope="session")
def training_log(desk_scenario, sim_params):
    graph, schedule = desk_scenario
    return cn.generate_training_log(graph, schedule, sim_params, seed=0, slot_duration_s=1800.0)


@pytest.fixture(scope="session")
def desk_dataset(training_log, desk_scenario):
    graph, _ = desk_scenario
    return build_dataset(training_log, graph, n_bins={"D": 8, "L": 8})


@pytest.fixture(scope="session")
def desk_engine(desk_dataset):
    return CausalInferenceEngine(dag=ground_truth_model()).fit(desk_dataset)
