from .estimators import (
    BiExponentialRegressor,
    DampedSinusoidRegressor,
    LorentzianPurcellRegressor,
    MonoExponentialRegressor,
)
from .fit import FitResult, fit
from .lifetimes import LifetimeFit, fit_lifetimes
from .lm import covariance_from_jacobian, levenberg_marquardt
from .models import FAMILIES, FitModel, get_family, model_eval, model_jacobian

__all__ = [
    "BiExponentialRegressor", "DampedSinusoidRegressor", "LorentzianPurcellRegressor",
    "MonoExponentialRegressor", "FitResult", "fit", "LifetimeFit", "fit_lifetimes",
    "covariance_from_jacobian", "levenberg_marquardt", "FAMILIES", "FitModel",
    "get_family", "model_eval", "model_jacobian",
]
