import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares
from sklearn.base import clone

from qdsps.fitting import (
    FAMILIES,
    BiExponentialRegressor,
    DampedSinusoidRegressor,
    FitModel,
    LorentzianPurcellRegressor,
    MonoExponentialRegressor,
    covariance_from_jacobian,
    fit,
    levenberg_marquardt,
    model_eval,
    model_jacobian,
)

X = {
    "lorentzian_purcell": np.linspace(-600, 600, 31),
    "mono_exp": np.linspace(0, 4000, 60),
    "bi_exp": np.linspace(0, 4000, 60),
    "damped_sinusoid": np.linspace(0, 3 * math.pi, 40),
}
RANGES = {
    "lorentzian_purcell": {"A": (0.1, 5), "F": (0.1, 20), "gamma_c": (50, 500)},
    "mono_exp": {"A": (-5, 5), "T": (50, 3000), "B": (-1, 1)},
    "bi_exp": {"A1": (-5, 5), "T1": (50, 500), "A2": (-5, 5), "T2": (600, 3000), "B": (-1, 1)},
    "damped_sinusoid": {"A": (0.1, 2), "theta_pi": (1, 6), "damping": (0, 1), "B": (-0.5, 0.5)},
}


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_jacobian_matches_finite_differences(family):
    rng = np.random.default_rng(42)
    names = FAMILIES[family].param_names
    x = X[family]
    for _ in range(100):
        p = {k: rng.uniform(*RANGES[family][k]) for k in names}
        jac = model_jacobian(family, p, x)
        for j, k in enumerate(names):
            h = 1e-6 * max(abs(p[k]), 1.0)
            up, dn = dict(p), dict(p)
            up[k] += h
            dn[k] -= h
            num = (FAMILIES[family].func(x, *up.values()) - FAMILIES[family].func(x, *dn.values())) / (2 * h)
            scale = np.max(np.abs(num)) + 1e-12
            assert np.max(np.abs(jac[:, j] - num)) / scale < 1e-6, (family, k, p)


def test_noiseless_mono_recovery():
    x = X["mono_exp"]
    y = model_eval("mono_exp", {"A": 1000.0, "T": 890.0, "B": 3.0}, x)
    r = fit("mono_exp", x, y)
    assert r.converged
    assert r.estimates["T"] == pytest.approx(890.0, rel=1e-6)


def test_noiseless_lorentzian_recovery():
    x = np.linspace(-600, 600, 15)
    y = model_eval("lorentzian_purcell", {"A": 1.0, "F": 3.1, "gamma_c": 233.0}, x)
    r = fit(FitModel("lorentzian_purcell", fixed={"gamma_c": 233.0}), x, y)
    assert r.estimates["F"] == pytest.approx(3.1, abs=1e-6)
    assert "gamma_c" not in r.std_errors or r.std_errors["gamma_c"] == 0.0


def test_zero_data_flags_unidentifiable_lifetime():
    x = X["mono_exp"]
    r = fit(FitModel("mono_exp", fixed={"B": 0.0}), x, np.zeros_like(x))
    assert abs(r.estimates["A"]) < 1e-8
    assert not r.identifiable
    assert not math.isfinite(r.std_errors["T"]) or r.std_errors["T"] > 1e6


def test_model_eval_identities():
    p = {"A": 0.8, "theta_pi": math.pi, "damping": 0.0, "B": 0.05}
    assert model_eval("damped_sinusoid", p, 0.0) == pytest.approx(0.05)
    assert model_eval("damped_sinusoid", p, math.pi) == pytest.approx(0.85)
    t = X["bi_exp"]
    mono = model_eval("mono_exp", {"A": 2.0, "T": 300.0, "B": 0.1}, t)
    bi = model_eval("bi_exp", {"A1": 2.0, "T1": 300.0, "A2": 0.0, "T2": 900.0, "B": 0.1}, t)
    assert np.array_equal(mono, bi)


def test_model_eval_validates():
    with pytest.raises(ValueError):
        model_eval("mono_exp", {"A": 1.0, "T": -3.0, "B": 0.0}, [0.0])
    with pytest.raises(ValueError):
        model_eval("mono_exp", {"A": 1.0}, [0.0])
    with pytest.raises(ValueError):
        model_eval("cubic", {}, [0.0])


def _noisy(family, params, x, sigma, seed):
    rng = np.random.default_rng(seed)
    return model_eval(family, params, x) + sigma * rng.standard_normal(x.size)


@pytest.mark.parametrize("family,params,fixed", [
    ("mono_exp", {"A": 100.0, "T": 700.0, "B": 2.0}, {}),
    ("bi_exp", {"A1": 80.0, "T1": 200.0, "A2": 20.0, "T2": 1200.0, "B": 1.0}, {}),
    ("damped_sinusoid", {"A": 0.8, "theta_pi": 3.3, "damping": 0.05, "B": 0.02}, {}),
    ("lorentzian_purcell", {"A": 1.0, "F": 3.1, "gamma_c": 233.0}, {"gamma_c": 233.0}),
])
def test_agrees_with_scipy_least_squares(family, params, fixed):
    x = X[family]
    sigma = 0.02 * np.max(np.abs(model_eval(family, params, x)))
    y = _noisy(family, params, x, sigma, 7)
    ours = fit(FitModel(family, fixed=fixed), x, y, np.full(x.size, sigma))
    fam = FAMILIES[family]
    free = [k for k in fam.param_names if k not in fixed]

    def full(v):
        vals = dict(fixed, **dict(zip(free, v)))
        return [vals[k] for k in fam.param_names]

    cols = [fam.param_names.index(k) for k in free]
    x0 = np.array([params[k] for k in free]) * 1.05
    ref = least_squares(lambda v: (fam.func(x, *full(v)) - y) / sigma, x0,
                        jac=lambda v: fam.jac(x, *full(v))[:, cols] / sigma,
                        method="lm", xtol=1e-14, ftol=1e-14)
    ref_x = dict(zip(fam.param_names, full(ref.x)))
    if family == "bi_exp" and ref_x["T1"] > ref_x["T2"]:
        ref_x = {"A1": ref_x["A2"], "T1": ref_x["T2"], "A2": ref_x["A1"], "T2": ref_x["T1"], "B": ref_x["B"]}
    for k in fam.param_names:
        assert ours.estimates[k] == pytest.approx(ref_x[k], rel=1e-5, abs=1e-8)
    assert 2 * (0.5 * np.sum(ref.fun**2)) == pytest.approx(ours.chi2, rel=1e-8)


def test_bi_exp_order_enforced():
    x = X["bi_exp"]
    y = _noisy("bi_exp", {"A1": 20.0, "T1": 1200.0, "A2": 80.0, "T2": 200.0, "B": 0.0}, x, 0.5, 1)
    for init in ({"T1": 1500.0, "T2": 150.0}, {"T1": 100.0, "T2": 1000.0}):
        r = fit(FitModel("bi_exp", initial=init), x, y, np.full(x.size, 0.5))
        assert r.converged
        assert r.estimates["T1"] < r.estimates["T2"]
        assert r.estimates["T1"] == pytest.approx(200, rel=0.1)


def test_errors_scale_inverse_sqrt_n():
    p = {"A": 100.0, "T": 700.0, "B": 2.0}
    errs = []
    for n in (50, 200):
        x = np.linspace(0, 4000, n)
        y = _noisy("mono_exp", p, x, 2.0, 3)
        errs.append(fit("mono_exp", x, y, np.full(n, 2.0)).std_errors["T"])
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.2)


@given(st.floats(1e-3, 1e3))
@settings(max_examples=20)
def test_rescaling_data(c):
    x = X["mono_exp"]
    y = _noisy("mono_exp", {"A": 100.0, "T": 700.0, "B": 2.0}, x, 2.0, 5)
    s = np.full(x.size, 2.0)
    a = fit("mono_exp", x, y, s)
    b = fit("mono_exp", x, c * y, c * s)
    assert b.estimates["T"] == pytest.approx(a.estimates["T"], rel=1e-9)
    for k in ("A", "B"):
        assert b.estimates[k] == pytest.approx(c * a.estimates[k], rel=1e-9, abs=1e-9 * c)


def test_bounds_and_fixed_parameters():
    x = X["mono_exp"]
    y = model_eval("mono_exp", {"A": 100.0, "T": 700.0, "B": 2.0}, x)
    r = fit(FitModel("mono_exp", bounds={"T": (100.0, 500.0)}), x, y)
    assert 100.0 <= r.estimates["T"] <= 500.0
    assert r.estimates["T"] == pytest.approx(500.0)
    r = fit(FitModel("mono_exp", fixed={"T": 650.0}), x, y)
    assert r.estimates["T"] == 650.0 and r.n_free == 2
    with pytest.raises(ValueError):
        FitModel("mono_exp", bounds={"T": (5.0, 1.0)})
    with pytest.raises(ValueError):
        FitModel("mono_exp", fixed={"tau": 1.0})


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit("mono_exp", [0.0, 1.0, 2.0], [1.0, np.nan, 3.0])
    with pytest.raises(ValueError):
        fit("mono_exp", [0.0, 1.0, 2.0], [1.0, 2.0, 3.0], sigma=[1.0, 0.0, 1.0])


def test_result_serialisation():
    x = X["mono_exp"]
    r = fit("mono_exp", x, model_eval("mono_exp", {"A": 1.0, "T": 700.0, "B": 0.0}, x))
    d = json.loads(r.to_json())
    assert set(d) >= {"family", "estimates", "std_errors", "reduced_chi2", "converged", "n_points"}


def test_levenberg_marquardt_rosenbrock():
    res = lambda v: np.array([10 * (v[1] - v[0] ** 2), 1 - v[0]])
    jac = lambda v: np.array([[-20 * v[0], 10.0], [-1.0, 0.0]])
    out = levenberg_marquardt(res, jac, np.array([-1.2, 1.0]), np.full(2, -np.inf), np.full(2, np.inf))
    assert out.converged
    assert np.allclose(out.x, [1.0, 1.0], atol=1e-6)


def test_covariance_infinite_on_null_direction():
    J = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    cov = covariance_from_jacobian(J)
    assert np.all(np.isinf(np.diag(cov)))
    cov = covariance_from_jacobian(np.eye(2) * 2)
    assert np.allclose(cov, np.eye(2) / 4)


@pytest.mark.parametrize("cls,family", [
    (MonoExponentialRegressor, "mono_exp"),
    (BiExponentialRegressor, "bi_exp"),
    (DampedSinusoidRegressor, "damped_sinusoid"),
])
def test_estimator_api(cls, family):
    x = X[family]
    p = {k: float(RANGES[family][k][1] * 0.6) for k in FAMILIES[family].param_names}
    y = model_eval(family, p, x)
    est = cls()
    assert clone(est).get_params() == est.get_params()
    est.fit(x.reshape(-1, 1), y)
    assert est.n_features_in_ == 1
    assert np.allclose(est.predict(x), y, atol=1e-6 * np.max(np.abs(y)))
    assert est.score(x, y) == pytest.approx(1.0)


def test_lorentzian_regressor_options():
    x = np.linspace(-600, 600, 15)
    y = model_eval("lorentzian_purcell", {"A": 0.9, "F": 3.1, "gamma_c": 233.0}, x)
    # with A, F and gamma_c all free only the peak and the width are determined
    free = LorentzianPurcellRegressor(gamma_c=200.0, fit_gamma_c=True).fit(x, y)
    assert np.allclose(free.predict(x), y, atol=1e-8)
    assert not free.result_.identifiable
    fixed = LorentzianPurcellRegressor(fixed={"A": 0.9}).fit(x, y)
    assert fixed.params_["F"] == pytest.approx(3.1, abs=1e-6)
    assert fixed.params_["A"] == 0.9
