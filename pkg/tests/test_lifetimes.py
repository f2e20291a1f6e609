import numpy as np
import pytest

from qdsps.config import Scenario
from qdsps.emission import lifetime_trace
from qdsps.fitting import fit_lifetimes
from qdsps.fitting.models import model_eval


@pytest.fixture(scope="module")
def experiment():
    return Scenario.load().experiment(calibrate=False)


def test_resonant_trace_fast_component(experiment):
    tr = lifetime_trace(experiment, 0.0, background_amplitude=0.1, seed=1)
    f = fit_lifetimes(tr, mode="bi")
    assert f.model == "bi" and f.reliable
    assert f.lifetime == pytest.approx(221.0, rel=0.1)
    assert f.slow_lifetime > 500.0


def test_off_resonant_trace_selects_mono(experiment):
    tr = lifetime_trace(experiment, 360.0, seed=1)
    f = fit_lifetimes(tr, mode="auto")
    assert f.model == "mono"
    assert f.lifetime == pytest.approx(890.0, rel=0.1)


def test_zero_background_prefers_mono(experiment):
    tr = lifetime_trace(experiment, 0.0, background_amplitude=0.0, seed=2)
    assert fit_lifetimes(tr, mode="auto").model == "mono"


def test_noise_only_trace_not_reliable():
    rng = np.random.default_rng(0)
    t = np.arange(-2000.0, 8000.0, 16.0)
    c = rng.poisson(2.0, t.size).astype(float)
    f = fit_lifetimes(times=t, counts=c, baseline_end=-1000.0)
    assert not f.reliable


def test_explicit_arrays_and_background():
    t = np.arange(0.0, 5000.0, 10.0)
    c = model_eval("mono_exp", {"A": 1e4, "T": 400.0, "B": 5.0}, t)
    f = fit_lifetimes(times=t, counts=c, background=5.0, fit_start=0.0, mode="mono")
    assert f.lifetime == pytest.approx(400.0, rel=1e-6)


def test_missing_baseline_is_an_error():
    t = np.arange(0.0, 100.0)
    with pytest.raises(ValueError):
        fit_lifetimes(times=t, counts=np.ones_like(t))
    with pytest.raises(ValueError):
        fit_lifetimes(times=t, counts=np.ones_like(t), baseline_end=1.0, mode="triple")
