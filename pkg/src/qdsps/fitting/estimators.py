"""scikit-learn style regressors wrapping the curve-fit families."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .fit import fit
from .models import FitModel, get_family


def _column(X, n_expected=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != 1:
        raise ValueError(f"expected a single feature column, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    return X[:, 0]


class _CurveRegressor(RegressorMixin, BaseEstimator):
    family: str = ""

    def _model(self) -> FitModel:
        return FitModel(self.family, initial=dict(self.initial or {}),
                        bounds=dict(self.bounds or {}), fixed=dict(self._fixed()))

    def _fixed(self) -> dict:
        return dict(self.fixed or {})

    def fit(self, X, y, sigma=None):
        x = _column(X)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape != x.shape:
            raise ValueError("X and y have inconsistent lengths")
        self.result_ = fit(self._model(), x, y, sigma=sigma, max_iter=self.max_iter)
        self.params_ = dict(self.result_.estimates)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        x = _column(X)
        fam = get_family(self.family)
        return fam.func(x, *[self.params_[p] for p in fam.param_names])

    @property
    def std_errors_(self) -> dict:
        check_is_fitted(self, "result_")
        return self.result_.std_errors


class LorentzianPurcellRegressor(_CurveRegressor):
    """Relative intensity A*F/(F + 1 + x^2/gamma_c^2) against detuning x (ueV).

    gamma_c is held at its given value unless `fit_gamma_c` is set; with it
    free, A, F and gamma_c are not separately identifiable from one profile.
    """

    family = "lorentzian_purcell"

    def __init__(self, gamma_c=233.0, fit_gamma_c=False, initial=None, bounds=None, fixed=None,
                 max_iter=500):
        self.gamma_c = gamma_c
        self.fit_gamma_c = fit_gamma_c
        self.initial = initial
        self.bounds = bounds
        self.fixed = fixed
        self.max_iter = max_iter

    def _fixed(self):
        fixed = dict(self.fixed or {})
        if not self.fit_gamma_c:
            fixed.setdefault("gamma_c", float(self.gamma_c))
        return fixed

    def _model(self):
        initial = dict(self.initial or {})
        if self.fit_gamma_c:
            initial.setdefault("gamma_c", float(self.gamma_c))
        return FitModel(self.family, initial=initial, bounds=dict(self.bounds or {}),
                        fixed=self._fixed())


class MonoExponentialRegressor(_CurveRegressor):
    """A*exp(-t/T) + B."""

    family = "mono_exp"

    def __init__(self, initial=None, bounds=None, fixed=None, max_iter=500):
        self.initial = initial
        self.bounds = bounds
        self.fixed = fixed
        self.max_iter = max_iter


class BiExponentialRegressor(_CurveRegressor):
    """A1*exp(-t/T1) + A2*exp(-t/T2) + B with T1 < T2."""

    family = "bi_exp"

    def __init__(self, initial=None, bounds=None, fixed=None, max_iter=500):
        self.initial = initial
        self.bounds = bounds
        self.fixed = fixed
        self.max_iter = max_iter


class DampedSinusoidRegressor(_CurveRegressor):
    """A*(1 - cos(pi*x/theta_pi)*exp(-damping*x))/2 + B against pulse area x."""

    family = "damped_sinusoid"

    def __init__(self, initial=None, bounds=None, fixed=None, max_iter=500):
        self.initial = initial
        self.bounds = bounds
        self.fixed = fixed
        self.max_iter = max_iter
