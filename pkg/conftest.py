"""Shared fixtures for the mwxe test suite."""
import sys
from pathlib import Path

import pytest

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.moments import build_moment_table, required_columns
from src.series import SeriesParams


@pytest.fixture(scope="session")
def table():
    """Table large enough for the default term cap at p_max = 20."""
    return build_moment_table(10, required_columns(SeriesParams(lambda_n=0.0).m_max, 20))


@pytest.fixture(scope="session")
def small_table():
    return build_moment_table(10, 40)
