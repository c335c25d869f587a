import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pakemail.groups import get_group


@pytest.fixture(scope="session")
def toy():
    return get_group("toy")


@pytest.fixture(scope="session")
def production():
    return get_group("production")
