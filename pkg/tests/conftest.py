import pytest

from patrolsynth import fixtures as F


@pytest.fixture
def loop_graph():
    return F.two_targets_with_loops()


@pytest.fixture
def hub_graph():
    return F.hub_with_two_targets()


@pytest.fixture
def sigma_loop():
    return F.alternating_loop()


@pytest.fixture
def sigma_lazy():
    return F.lazy_switching()


@pytest.fixture
def sigma_b():
    return F.hub_memoryless()


@pytest.fixture
def sigma_c():
    return F.hub_with_memory()
