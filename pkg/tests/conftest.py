from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def qcache(tmp_path_factory):
    """Quantile cache shared by every test in the session."""
    return tmp_path_factory.mktemp("qcache")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
