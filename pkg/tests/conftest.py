import os
import sys

import numpy as np
import pytest

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

from reinverify.network import Layer, Network  # noqa: E402

CORPUS = os.path.join(HERE, "corpus")
DATA = os.path.join(HERE, "data")


def dense(*layers):
    """Network from (weights, bias, activation) triples."""
    return Network([Layer(np.array(W, float), np.array(b, float), act) for W, b, act in layers])


@pytest.fixture
def identity_net():
    return dense(([[1.0]], [0.0], "identity"))


@pytest.fixture
def corpus_dir():
    return CORPUS


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
