import pytest

from gasketlab import build_level_graph, build_step_kernel


@pytest.fixture(scope="session")
def graphs():
    cache = {}

    def get(m):
        if m not in cache:
            cache[m] = build_level_graph(m)
        return cache[m]

    return get


@pytest.fixture(scope="session")
def kernels(graphs):
    cache = {}

    def get(m):
        if m not in cache:
            cache[m] = build_step_kernel(graphs(m))
        return cache[m]

    return get
