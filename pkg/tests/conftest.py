import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles / gradcheck helpers

from attnbench.synthetic import make_disc_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def disc_corpus(tmp_path_factory):
    """Small disc-vs-blank corpus shared by pipeline tests (40 images, 32px)."""
    root = tmp_path_factory.mktemp("corpus") / "discs"
    make_disc_corpus(root, n=40, size=32, seed=5)
    return root
