import pytest

from dc1sim import core


@pytest.fixture
def full_window_timing():
    """A subdetector sensitive to the entire pile-up window."""
    return (core.SubdetectorTiming(core.Subdetector.MDT, 30, 30, 750.0),)


@pytest.fixture
def cost_model():
    return core.DEFAULT_COST_MODEL
