import tempfile
from pathlib import Path

import numpy as np
import pytest

from src.config.experiment import build_config
from src.config.settings import settings
from src.nn.spec import linear_spec, mlp_spec


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow directional experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running directional experiment")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files"""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield Path(temp_dir)


@pytest.fixture
def run_root(temp_dir, monkeypatch):
    """Point the settings run root at a scratch directory"""
    root = temp_dir / "runs"
    monkeypatch.setattr(settings, "run_root", str(root))
    return root


@pytest.fixture
def tiny_mlp():
    return mlp_spec(2, hidden=(8,), n_classes=2, input_noise=0.0, dropout=0.0)


@pytest.fixture
def tiny_linear():
    return linear_spec(1, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """A two-moons run that finishes in a few seconds"""

    def make(**changes):
        values = dict(
            dataset="two_moons",
            train_size=100,
            test_size=100,
            labels_per_class=3,
            model="mlp",
            hidden=[8],
            labeled_per_batch=2,
            unlabeled_per_batch=8,
            total_steps=20,
            eval_every=10,
            checkpoint_every=10,
            rampup_steps=10,
            float_width=64,
        )
        values.update(changes)
        return build_config(values)

    return make
