import math
import warnings

import numpy as np
from scipy.integrate import trapezoid
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdsps.core.model import (
    HBAR,
    HilbertConfig,
    PulseShape,
    SystemModel,
    WeakCouplingWarning,
    build_model_operators,
    calibrate_from_lifetimes,
    coupling_from_purcell,
    expectation,
    is_hermitian,
    rate_to_ueV,
    ueV_to_rate,
)


def test_uncoupled_resonant_hamiltonian_is_zero():
    cfg = HilbertConfig(1)
    m = SystemModel(g=0.0, kappa=233.0, gamma_leaky=0.0)
    ops = build_model_operators(cfg, m)
    assert ops.hamiltonian(-100.0).shape == (4, 4)
    assert np.allclose(ops.hamiltonian(-100.0), 0.0)


def test_cavity_rate_from_kappa():
    assert ueV_to_rate(233.0) == pytest.approx(0.3540, abs=5e-5)
    # independent arithmetic: hbar = 6.582119569e-16 eV s
    assert 233e-6 / 6.582119569e-16 * 1e-12 == pytest.approx(ueV_to_rate(233.0), rel=1e-6)
    ops = build_model_operators(HilbertConfig(2), SystemModel(g=0.0, kappa=233.0, gamma_leaky=0.0))
    assert ops.channel("cavity").rate == pytest.approx(233.0 / HBAR)


def test_coupling_element():
    cfg = HilbertConfig(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakCouplingWarning)
        m = SystemModel(g=50.0, kappa=233.0, gamma_leaky=0.0)
    h = build_model_operators(cfg, m).hamiltonian(-100.0) * HBAR
    e0, g1 = cfg.index(True, 0), cfg.index(False, 1)
    assert h[e0, g1] == pytest.approx(50.0)
    assert h[g1, e0] == pytest.approx(50.0)


def test_weak_coupling_warning():
    with pytest.warns(WeakCouplingWarning):
        SystemModel(g=80.0, kappa=233.0, gamma_leaky=0.001)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SystemModel(g=12.0, kappa=233.0, gamma_leaky=0.001)


@pytest.mark.parametrize("field,value", [("kappa", 0.0), ("g", -1.0), ("gamma_leaky", -1e-3),
                                          ("delta_qd_cavity", math.nan)])
def test_model_rejects_bad_parameters(field, value):
    kw = dict(g=10.0, kappa=233.0, gamma_leaky=1e-3)
    kw[field] = value
    with pytest.raises(ValueError):
        SystemModel(**kw)


@given(st.floats(1e-6, 1e6))
def test_unit_round_trip(e):
    assert rate_to_ueV(ueV_to_rate(e)) == pytest.approx(e, rel=1e-12)


def test_expectation_basics(cfg):
    rho = np.outer(cfg.basis(True, 0), cfg.basis(True, 0))
    assert expectation(np.eye(cfg.dim), rho) == pytest.approx(1.0)
    assert expectation(cfg.excited_projector(), rho) == pytest.approx(1.0)
    rho1 = np.outer(cfg.basis(False, 1), cfg.basis(False, 1))
    assert expectation(cfg.photon_number(), rho1) == pytest.approx(1.0)


def test_operators_are_hermitian(calibrated_model, cfg):
    ops = build_model_operators(cfg, calibrated_model.with_(delta_laser_qd=30.0))
    for t in (0.0, 5.0, 5.3, 100.0):
        assert is_hermitian(ops.hamiltonian(t))


@given(st.floats(0.0, 4 * math.pi), st.floats(0.5, 5.0))
def test_pulse_area_is_exact(area, fwhm):
    p = PulseShape(area=area, fwhm=fwhm, center=30.0)
    t = np.linspace(*p.window, 20001)
    assert trapezoid(p.rabi_frequency(t), t) == pytest.approx(area, rel=1e-6, abs=1e-12)


def test_pulse_zero_outside_window():
    p = PulseShape()
    lo, hi = p.window
    assert p.rabi_frequency(lo - 1e-3) == 0.0 and p.rabi_frequency(hi + 1e-3) == 0.0


def test_lifetime_calibration_reproduces_both_lifetimes():
    f, gamma = calibrate_from_lifetimes(221.0, 890.0, 360.0, 233.0)
    lorentz = 1 + (2 * 360.0 / 233.0) ** 2
    assert 1 / (gamma * (1 + f)) == pytest.approx(221.0)
    assert 1 / (gamma * (1 + f / lorentz)) == pytest.approx(890.0)
    m = SystemModel.from_purcell(f, 233.0, gamma)
    assert m.purcell_factor == pytest.approx(f)
    assert m.g == pytest.approx(coupling_from_purcell(f, 233.0, gamma))


def test_lifetime_calibration_rejects_unreachable_ratio():
    with pytest.raises(ValueError):
        calibrate_from_lifetimes(100.0, 90.0, 360.0, 233.0)
    with pytest.raises(ValueError):
        calibrate_from_lifetimes(10.0, 890.0, 100.0, 233.0)


def test_hilbert_indexing():
    cfg = HilbertConfig(3)
    assert cfg.dim == 8
    seen = {cfg.index(e, n) for e in (False, True) for n in range(4)}
    assert seen == set(range(8))
    a = cfg.annihilation()
    assert np.allclose(a.conj().T @ a, cfg.photon_number())
