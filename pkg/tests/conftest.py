import numpy as np
import pytest

from xplan.worlds import make_boxworld, make_maze

# a small maze with corridors, dead ends and a loop; used across unit tests
MAZE_CELLS = [
    [1, 1, 1, 1, 1, 1, 1, 1],
    [1, 0, 0, 0, 1, 0, 0, 1],
    [1, 0, 1, 0, 0, 0, 1, 1],
    [1, 0, 1, 1, 1, 0, 0, 1],
    [1, 0, 0, 0, 1, 1, 0, 1],
    [1, 1, 1, 0, 0, 0, 0, 1],
    [1, 1, 1, 1, 1, 1, 1, 1],
]


@pytest.fixture(scope="session")
def maze():
    return make_maze(MAZE_CELLS)


@pytest.fixture(scope="session")
def boxworld():
    boxes = [
        ([2.0, 2.0, 0.0], [3.0, 3.0, 4.0]),
        ([5.0, 1.0, 1.0], [6.0, 5.0, 2.5]),
        ([1.0, 5.0, 2.0], [4.0, 6.0, 3.5]),
    ]
    return make_boxworld([0.0, 0.0, 0.0], [8.0, 8.0, 5.0], boxes)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
