import numpy as np
import pytest
import torch

from vcmlab.codec import HyperpriorCodec, NetworkConfig
from vcmlab.datasets import make_shapes_dataset
from vcmlab.task import load_task_net

torch.set_num_threads(1)


@pytest.fixture
def toy_codec():
    torch.manual_seed(0)
    return HyperpriorCodec(NetworkConfig.toy()).eval()


@pytest.fixture
def task_net():
    return load_task_net()


@pytest.fixture(scope="session")
def shapes():
    return make_shapes_dataset(6, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(h=64, w=64, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(1, 3, h, w, generator=g, dtype=dtype)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
