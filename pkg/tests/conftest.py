import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from stereoblur.display import DisplayModel


@pytest.fixture
def display30():
    """512 px square canvas at 30 ppd (the reference test calibration)."""
    return DisplayModel(width_px=512, height_px=512, ppd=30.0)


@pytest.fixture
def display_lowres():
    """Coarse calibration where a 15-degree blackout disk fits on screen."""
    return DisplayModel(width_px=420, height_px=420, ppd=10.0)
