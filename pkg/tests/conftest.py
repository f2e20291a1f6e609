import math
import warnings

import pytest
from hypothesis import HealthCheck, settings

from qdsps.core.model import HilbertConfig, PulseShape, SystemModel

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def cfg():
    return HilbertConfig(2)


@pytest.fixture
def calibrated_model():
    return SystemModel.from_lifetimes(221.0, 890.0, 360.0, 233.0, delta_qd_cavity=75.0)


def two_level(area=math.pi, **kw):
    """Lossless emitter decoupled from the cavity."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return SystemModel(g=0.0, kappa=233.0, gamma_leaky=0.0, pulse=PulseShape(area=area), **kw)
