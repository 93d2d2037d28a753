import json

import numpy as np
import pytest

from gridpop import kernels
from gridpop.synthetic import WorldSpec, make_world


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Each available kernel backend in turn."""
    return kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def shrink_model_grid(config_path, **model):
    """Rewrite a config with a smaller hyperparameter grid for fast tests."""
    cfg = json.loads(config_path.read_text())
    cfg["model"].update(model)
    config_path.write_text(json.dumps(cfg, indent=2, sort_keys=True))
    return config_path


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    """8x8 tiles per ROI with a 2-delta, 2-lambda grid."""
    root = tmp_path_factory.mktemp("world")
    world = make_world(root, WorldSpec(n_tiles=8, seed=3))
    for path in world["configs"].values():
        shrink_model_grid(path, deltas=[1.0, 1.35], lambda_factors=[0.01, 0.1])
    return world


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
