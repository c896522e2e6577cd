import os
from pathlib import Path

import numpy as np
import pytest

from foxtsage.datasets import find_idx_file, load_mnist_idx, one_hot
from foxtsage.models import ModelSpec, init_params
from foxtsage.numerics import Rng
from foxtsage.optimizers import TrainData

REPO = Path(__file__).resolve().parents[1]
BUNDLED_MNIST = REPO / "data" / "mnist10k"

_acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return Rng(12345)


@pytest.fixture
def tiny_problem():
    """Small 3-class problem for optimizer tests."""
    r = Rng(99)
    x = r.gaussian_array((48, 4))
    w = r.gaussian_array((4, 3))
    labels = np.argmax(x @ w, axis=1)
    spec = ModelSpec("logreg", 4, 3)
    return spec, TrainData(x, one_hot(labels, 3)), init_params(spec, Rng(1))


def mnist_source():
    """Full MNIST from $FOXTSAGE_DATA_DIR if present, else the bundled 10k digits."""
    env = os.environ.get("FOXTSAGE_DATA_DIR")
    if env:
        try:
            find_idx_file(env, "train-images-idx3-ubyte")
            find_idx_file(env, "t10k-images-idx3-ubyte")
            return {"dataset": "mnist", "data_dir": env}
        except FileNotFoundError:
            pass
    return {
        "dataset": "idx",
        "images": str(BUNDLED_MNIST / "mnist10k-images-idx3-ubyte.gz"),
        "labels": str(BUNDLED_MNIST / "mnist10k-labels-idx1-ubyte.gz"),
    }


@pytest.fixture(scope="session")
def mnist10k():
    return load_mnist_idx(BUNDLED_MNIST / "mnist10k-images-idx3-ubyte.gz",
                          BUNDLED_MNIST / "mnist10k-labels-idx1-ubyte.gz")
