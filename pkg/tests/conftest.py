import pathlib

import numpy as np
import pytest
from hypothesis import settings

from kfp.potential import HomogeneousPotential, load_potential

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

POTENTIALS = pathlib.Path(__file__).resolve().parent.parent / "potentials"


@pytest.fixture
def potential_path():
    return lambda name: POTENTIALS / f"{name}.pot"


@pytest.fixture
def abstract_n1():
    return load_potential(POTENTIALS / "abstract_n1.pot")


@pytest.fixture
def q1_fourth():
    return load_potential(POTENTIALS / "q1_fourth.pot")


@pytest.fixture
def monkey_saddle():
    return load_potential(POTENTIALS / "monkey_saddle.pot")


@pytest.fixture
def quartic_1d():
    return HomogeneousPotential(1, [(1.0, (4,))])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
