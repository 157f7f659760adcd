import sys
from pathlib import Path

import pytest

FIGURES_DIR = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(FIGURES_DIR))

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture
def results_csv():
    return str(FIXTURES / "results.csv")


@pytest.fixture
def samples_csv():
    return str(FIXTURES / "samples.csv")
