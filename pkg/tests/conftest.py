import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from streamprofile.schema import load_schema


@pytest.fixture(scope="session")
def schema():
    return load_schema()


@pytest.fixture(scope="session")
def fixtures_dir():
    path = Path(__file__).parent.parent / "fixtures"
    if not path.exists():
        pytest.skip("bundled fixtures not generated")
    return path
