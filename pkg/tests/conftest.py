import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


import pytest

from gridfill.synthgen import ScenarioSpec, generate_scenario
from gridfill.teachers import Repository, TrainConfig, train_teacher

SMALL_CONFIG = TrainConfig(min_hours=48, k_folds=3)


@pytest.fixture(scope="session")
def small_scenario():
    spec = ScenarioSpec(n_teachers=2, n_students=1, customers_per_transformer=3, days=3, seed=1)
    return generate_scenario(spec)


@pytest.fixture(scope="session")
def small_repo(small_scenario):
    models = [train_teacher(t.highres, t.customers, SMALL_CONFIG) for t in small_scenario.teachers]
    return Repository(models, SMALL_CONFIG)
