import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
sys.path.insert(0, str(TESTS_DIR))

BUNDLES = TESTS_DIR / "corpus" / "bundles"


@pytest.fixture(scope="session")
def bundles_dir() -> Path:
    return BUNDLES
