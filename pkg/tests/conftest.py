import hypothesis
import pytest

from eval.fixtures import synthetic_manifests, toy_partition, toy_schema
from schema import load_dataset

hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None)
hypothesis.settings.load_profile("fast")


@pytest.fixture
def toy():
    return toy_schema(), toy_partition()


@pytest.fixture
def toy_manifests(toy):
    schema, partition = toy
    return synthetic_manifests(schema, partition, 12, seed=7)


@pytest.fixture(scope="session")
def shapes():
    return load_dataset("3dshapes")
