"""Weighted nonlinear least-squares fits of the model families."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .lm import covariance_from_jacobian, levenberg_marquardt
from .models import FitModel


@dataclass
class FitResult:
    """Estimates, covariance and residual diagnostics of one fit.

    `covariance` rows/columns follow `param_names`; fixed parameters have
    zero variance and unidentifiable ones inf.
    """

    family: str
    param_names: tuple
    estimates: dict
    covariance: np.ndarray
    reduced_chi2: float
    chi2: float
    residuals: np.ndarray
    converged: bool
    n_iterations: int
    n_points: int
    n_free: int
    message: str
    weighted: bool

    @property
    def std_errors(self) -> dict:
        var = np.diag(self.covariance)
        return {p: float(math.sqrt(v)) if v >= 0 else math.nan for p, v in zip(self.param_names, var)}

    @property
    def identifiable(self) -> bool:
        return bool(np.all(np.isfinite(np.diag(self.covariance))))

    @property
    def aicc(self) -> float:
        """Small-sample corrected AIC, using chi^2 as -2 log L up to a constant."""
        n, k = self.n_points, self.n_free
        if n - k - 1 <= 0:
            return math.inf
        return self.chi2 + 2 * k + 2 * k * (k + 1) / (n - k - 1)

    def to_dict(self) -> dict:
        def clean(v):
            return v if math.isfinite(v) else None

        return {
            "family": self.family,
            "estimates": {k: clean(v) for k, v in self.estimates.items()},
            "std_errors": {k: clean(v) for k, v in self.std_errors.items()},
            "reduced_chi2": clean(self.reduced_chi2),
            "converged": self.converged,
            "n_points": self.n_points,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _as_model(model: Union[FitModel, str]) -> FitModel:
    return model if isinstance(model, FitModel) else FitModel(model)


def fit(model: Union[FitModel, str], x, y, sigma=None, max_iter: int = 500) -> FitResult:
    """Fit `model` to data (x, y) with optional one-sigma errors on y.

    Without `sigma` the covariance is scaled by the reduced chi^2 of the
    unweighted residuals.
    """
    model = _as_model(model)
    fam = model.spec
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("data must be finite")
    if sigma is None:
        w = np.ones_like(y)
    else:
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ValueError("sigma must be positive and finite")
        w = 1.0 / sigma

    names = fam.param_names
    free = [p for p in names if p not in model.fixed]
    if y.size < len(free):
        raise ValueError(f"{y.size} points cannot determine {len(free)} parameters")
    start = model.starting_point(x, y)
    lo, hi = model.limits()
    free_idx = [names.index(p) for p in free]

    def full(v):
        vals = np.array([start[p] for p in names], dtype=float)
        vals[free_idx] = v
        return vals

    def residual(v):
        return w * (fam.func(x, *full(v)) - y)

    def jacobian(v):
        return w[:, None] * fam.jac(x, *full(v))[:, free_idx]

    res = levenberg_marquardt(residual, jacobian, [start[p] for p in free],
                              lo[free_idx], hi[free_idx], max_iter=max_iter)
    values = full(res.x)
    chi2 = 2.0 * res.cost
    dof = y.size - len(free)
    red = chi2 / dof if dof > 0 else math.nan
    cov_free = covariance_from_jacobian(res.jacobian)
    if sigma is None:
        scale = red if dof > 0 else math.inf
        with np.errstate(invalid="ignore"):
            cov_free = np.where(np.isinf(cov_free), np.inf, cov_free * scale)
    cov = np.zeros((len(names), len(names)))
    cov[np.ix_(free_idx, free_idx)] = cov_free

    if model.family == "bi_exp" and values[1] > values[3]:
        perm = [2, 3, 0, 1, 4]
        values = values[perm]
        cov = cov[np.ix_(perm, perm)]
    return FitResult(
        family=model.family,
        param_names=names,
        estimates={p: float(v) for p, v in zip(names, values)},
        covariance=cov,
        reduced_chi2=float(red),
        chi2=float(chi2),
        residuals=(fam.func(x, *values) - y),
        converged=bool(res.converged),
        n_iterations=res.n_iterations,
        n_points=int(y.size),
        n_free=len(free),
        message=res.message,
        weighted=sigma is not None,
    )
