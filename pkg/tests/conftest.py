import numpy as np
import pytest
import torch

from gridcast.geometry import GridGeometry, Pose


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def geom5():
    return GridGeometry(width=5, height=5, resolution=1.0, origin_pose=Pose(0, 0, 0))


@pytest.fixture
def geom64():
    return GridGeometry(width=64, height=64, resolution=0.5, origin_pose=Pose(0, 0, 0))
