import pytest

from kcmlab import zoo
from kcmlab.family import classify, quasi_stable_frame

load = zoo.load


@pytest.fixture(scope="session")
def fa2f():
    return load("fa2f")


@pytest.fixture(scope="session")
def duarte():
    return load("duarte")


@pytest.fixture(scope="session")
def east():
    return load("east")


@pytest.fixture(scope="session")
def one_neighbour():
    return load("one_neighbour")


@pytest.fixture(scope="session")
def two_sided():
    return load("two_sided_subcritical")


@pytest.fixture(scope="session")
def fig_family():
    return load("isotropic_alpha3")


@pytest.fixture(scope="session")
def ud_family():
    return load("unbalanced_unrooted")


@pytest.fixture(scope="session")
def fa2f_frame(fa2f):
    return quasi_stable_frame(fa2f, classify(fa2f))


@pytest.fixture(scope="session")
def ud_frame(ud_family):
    return quasi_stable_frame(ud_family, classify(ud_family))
