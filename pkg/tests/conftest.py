import numpy as np
import pytest

from pixeldefer.synthdata import DatasetSpec, generate


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate(DatasetSpec(count=8, height=24, width=24, seed=13))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
