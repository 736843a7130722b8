from pathlib import Path

import pytest

from ridectl.config import settings
from ridectl.utils import console

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _wide_console():
    # keep rich from wrapping the messages tests look for
    console.width = 200


@pytest.fixture(autouse=True)
def _isolated_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "output_dir", tmp_path)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
