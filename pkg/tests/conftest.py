import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from necklab.flow import FlowSettings, dumbbell_profile, simulate
from necklab.models import bowl_surface

settings.register_profile("necklab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("necklab")


@pytest.fixture(scope="session")
def bowl3():
    """Bowl with a tail long enough to carry (0.1, 5)-necks."""
    return bowl_surface(3, r_core=300.0, r_max=1000.0)


@pytest.fixture(scope="session")
def bowl3_small():
    return bowl_surface(3, r_core=30.0, r_max=60.0)


@pytest.fixture(scope="session")
def dumbbell_run():
    """Dumbbell flowed until the waist is 70% of its initial radius."""
    st = FlowSettings(t_end=1.0, neck_fraction=0.7, stop_on=("neck-formed",), snapshot_every=1)
    return simulate(dumbbell_profile(3), st)


@pytest.fixture(scope="session")
def dumbbell_snapshot(dumbbell_run):
    return dumbbell_run.snapshots[-1].surface


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
