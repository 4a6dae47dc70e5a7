import pytest

from helpers import xor_twin_graph, xor_twin_scm, synthetic_world_graph


@pytest.fixture(scope="session")
def synthetic_fixture():
    """60-node multi-world fixture shared across dataset and inference tests."""
    return synthetic_world_graph(n_nodes=60, n_worlds=24, seed=7)


@pytest.fixture()
def xor_twin():
    scm = xor_twin_scm()
    world = scm.evaluate({"u": 1, "v": 1})  # x=1, z=1, y=0
    graph = xor_twin_graph(
        worlds={"w0": {"x": world["x"], "z": world["z"], "y": world["y"]}}
    )
    return graph, scm
