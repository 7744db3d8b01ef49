"""Shared fixtures: the TINY instance, plan P0 and seeded random scenarios."""

from pathlib import Path
from typing import Callable, Optional

import pytest

from builders import make_profile, make_scenario
from scripts.delay_model import Plan
from scripts.model_profile import ModelProfile
from scripts.scenario import Scenario, generate_scenario

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def tiny_profile() -> ModelProfile:
    return make_profile([100] * 4, [1000] * 4, [50] * 4, name="tiny")


@pytest.fixture
def tiny(tiny_profile: ModelProfile) -> Scenario:
    return make_scenario([100, 200], tiny_profile)


@pytest.fixture
def p0() -> Plan:
    return Plan(h=2, v=3, aggregators=("c2",), assign={"c1": "c2", "c2": "c2"})


@pytest.fixture
def small_profile() -> ModelProfile:
    """Eight layers with uneven costs, enough room for several (h, v) pairs."""
    return make_profile(
        flops=[4e8, 9e8, 6e8, 5e8, 3e8, 2e8, 1e8, 5e7],
        weights=[2e4, 8e4, 3e5, 6e5, 6e5, 1e6, 1e6, 2e4],
        acts=[8e5, 4e5, 2e5, 2e5, 1e5, 2e4, 2e4, 4e3],
        batch_size=32,
        name="small",
    )


@pytest.fixture
def random_scenario(small_profile: ModelProfile) -> Callable[..., Scenario]:
    """Factory for seeded heterogeneous scenarios on the small profile."""

    def factory(n_clients: int, seed: int, model: Optional[ModelProfile] = None,
                strong_fraction: float = 0.3, epochs: int = 1, dataset_size: int = 64) -> Scenario:
        return generate_scenario(
            n_clients=n_clients,
            strong_fraction=strong_fraction,
            strong_p=17.6e9,
            weak_p=2.4e9,
            rate_range=(2.5e6, 3.125e6),
            seed=seed,
            model=model or small_profile,
            server_p=100e9,
            epochs_per_round=epochs,
            dataset_size=dataset_size,
        )

    return factory
