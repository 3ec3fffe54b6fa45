import pytest
import numpy as np
from unittest.mock import patch
from scipy import sparse

from src.config import config
from src.graph import ChainGraph, build_chain_graph
from src.models import Domain, IntegratorConfig, SystemSpec
from src.space import build_grid
from src.system_registry import system_registry


def make_graph(system_name: str, n: int, T: float = 2.0, params=None, c_max=None) -> ChainGraph:
    sys = system_registry.build(system_name, params)
    grid = build_grid(sys.domain, n)
    return build_chain_graph(grid, sys, T, c_max, IntegratorConfig())


def hand_graph(n: int, edges) -> ChainGraph:
    """ChainGraph on [0, 1] whose cost layer is exactly `edges` = [(i, j, w), ...].

    The relation layer is the identity; only cost computations are meaningful.
    """
    sys = SystemSpec(name="trivial", domain=Domain.interval(0.0, 1.0), field="zero")
    grid = build_grid(sys.domain, n)
    edges = sorted(edges)
    rows = np.array([e[0] for e in edges], dtype=np.int64)
    cols = np.array([e[1] for e in edges], dtype=np.int32)
    data = np.array([e[2] for e in edges], dtype=float)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    cost = sparse.csr_matrix((data, cols, np.cumsum(indptr).astype(np.int32)), shape=(n, n))
    relation = sparse.csr_matrix(sparse.identity(n, dtype=np.int8, format="csr"))
    return ChainGraph(grid, sys, 1.0, 1.0, IntegratorConfig(), cost, relation)


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path):
    with patch.object(config, "SCR_CACHE_DIR", str(tmp_path / "cache")), \
         patch.object(config, "SCR_OUTPUT_DIR", None):
        yield


@pytest.fixture(scope="session")
def trivial_100():
    return make_graph("trivial", 100)


@pytest.fixture(scope="session")
def trivial_500():
    return make_graph("trivial", 500)


@pytest.fixture(scope="session")
def figure1_500():
    return make_graph("figure1", 500)


@pytest.fixture(scope="session")
def circle_500():
    return make_graph("circle_arc", 500)


@pytest.fixture(scope="session")
def linear_sink_500():
    return make_graph("linear_sink", 500)


@pytest.fixture(scope="session")
def cantor_500():
    return make_graph("cantor", 500, params={"kind": "standard", "depth": "2"})


@pytest.fixture(scope="session")
def figure1_2000():
    return make_graph("figure1", 2000)


@pytest.fixture(scope="session")
def circle_2000():
    return make_graph("circle_arc", 2000)


@pytest.fixture(scope="session")
def trivial_2000():
    return make_graph("trivial", 2000)
