"""The four fit families: values, analytic Jacobians and initial guesses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


@dataclass(frozen=True)
class Family:
    name: str
    param_names: tuple
    func: Callable
    jac: Callable
    guess: Callable
    lower: tuple
    upper: tuple
    amplitude_params: tuple = ()


def _lorentzian(x, A, F, gamma_c):
    return A * F / (F + 1.0 + (x / gamma_c) ** 2)


def _lorentzian_jac(x, A, F, gamma_c):
    u = (x / gamma_c) ** 2
    d = F + 1.0 + u
    return np.column_stack([
        F / d,
        A * (1.0 + u) / d**2,
        A * F * 2.0 * u / (gamma_c * d**2),
    ])


def _lorentzian_guess(x, y, gamma_c=233.0):
    y0 = float(np.max(y))
    if y0 <= 0:
        return {"A": 1.0, "F": 1.0, "gamma_c": gamma_c}
    # half width w satisfies w^2 = gamma_c^2 (F + 1)
    order = np.argsort(np.abs(x))
    ax, ay = np.abs(x)[order], y[order]
    below = np.flatnonzero(ay <= 0.5 * y0)
    w = float(ax[below[0]]) if below.size else float(ax[-1]) * 1.5
    F = max((w / gamma_c) ** 2 - 1.0, 0.1)
    return {"A": y0 * (F + 1.0) / F, "F": F, "gamma_c": gamma_c}


def _mono(x, A, T, B):
    return A * np.exp(-x / T) + B


def _mono_jac(x, A, T, B):
    e = np.exp(-x / T)
    return np.column_stack([e, A * e * x / T**2, np.ones_like(x)])


def _loglinear(x, y):
    """Slope/intercept of log(y) against x over points with y > 0, weighted by y."""
    ok = y > 0
    if ok.sum() < 2:
        return None
    xs, ys = x[ok], y[ok]
    w = ys  # Poisson-like weights for log data
    slope, icpt = np.polyfit(xs, np.log(ys), 1, w=np.sqrt(w))
    if slope >= 0:
        return None
    return -1.0 / slope, math.exp(icpt)


def _mono_guess(x, y):
    span = float(np.ptp(x)) or 1.0
    tail = y[x >= x.min() + 0.9 * span]
    B = float(np.median(tail)) if tail.size else 0.0
    peak = float(np.max(y - B))
    sel = (y - B) > 0.05 * peak
    fit = _loglinear(x[sel], (y - B)[sel]) if peak > 0 else None
    if fit is None:
        return {"A": max(peak, 1e-12), "T": span / 3.0, "B": B}
    T, A = fit
    return {"A": A, "T": min(T, 10 * span), "B": B}


def _bi(x, A1, T1, A2, T2, B):
    return A1 * np.exp(-x / T1) + A2 * np.exp(-x / T2) + B


def _bi_jac(x, A1, T1, A2, T2, B):
    e1 = np.exp(-x / T1)
    e2 = np.exp(-x / T2)
    return np.column_stack([e1, A1 * e1 * x / T1**2, e2, A2 * e2 * x / T2**2, np.ones_like(x)])


def _bi_guess(x, y):
    mono = _mono_guess(x, y)
    B = mono["B"]
    z = y - B
    span = float(np.ptp(x)) or 1.0
    # peel: slow component from the late part, fast from what remains early
    late = x >= x.min() + min(3.0 * mono["T"], 0.5 * span)
    slow = _loglinear(x[late], z[late]) if late.sum() > 3 else None
    if slow is None:
        T2, A2 = 3.0 * mono["T"], 0.1 * mono["A"]
    else:
        T2, A2 = slow
    rest = z - A2 * np.exp(-x / T2)
    early = (x < x.min() + min(3.0 * mono["T"], 0.5 * span)) & (rest > 0.05 * max(rest.max(), 1e-300))
    fast = _loglinear(x[early], rest[early]) if early.sum() > 3 else None
    if fast is None or fast[0] >= T2:
        T1, A1 = mono["T"] / 3.0, mono["A"]
    else:
        T1, A1 = fast
    if T1 > T2:
        (A1, T1), (A2, T2) = (A2, T2), (A1, T1)
    return {"A1": A1, "T1": T1, "A2": A2, "T2": T2, "B": B}


def _damped(x, A, theta_pi, damping, B):
    return A * (1.0 - np.cos(np.pi * x / theta_pi) * np.exp(-x * damping)) / 2.0 + B


def _damped_jac(x, A, theta_pi, damping, B):
    u = np.pi * x / theta_pi
    e = np.exp(-x * damping)
    c, s = np.cos(u), np.sin(u)
    return np.column_stack([
        (1.0 - c * e) / 2.0,
        -0.5 * A * s * e * u / theta_pi,
        0.5 * A * c * e * x,
        np.ones_like(x),
    ])


def _damped_guess(x, y):
    order = np.argsort(x)
    x, y = x[order], y[order]
    B = float(y[0]) if x[0] <= 0.05 * max(abs(x[-1]), 1e-300) else float(np.min(y))
    top = float(np.max(y))
    half = B + 0.5 * (top - B)
    # first local maximum above the midline
    theta_pi = float(x[np.argmax(y)])
    for i in range(1, len(y) - 1):
        if y[i] >= half and y[i] >= y[i - 1] and y[i] >= y[i + 1]:
            theta_pi = float(x[i])
            break
    theta_pi = theta_pi if theta_pi > 0 else max(float(x[-1]), 1.0) / 2.0
    return {"A": max(top - B, 1e-12), "theta_pi": theta_pi, "damping": 0.05 / theta_pi, "B": B}


FAMILIES: dict[str, Family] = {
    "lorentzian_purcell": Family(
        "lorentzian_purcell", ("A", "F", "gamma_c"), _lorentzian, _lorentzian_jac,
        _lorentzian_guess, (0.0, 0.0, 1e-9), (np.inf, np.inf, np.inf), ("A",),
    ),
    "mono_exp": Family(
        "mono_exp", ("A", "T", "B"), _mono, _mono_jac, _mono_guess,
        (-np.inf, 1e-9, -np.inf), (np.inf, np.inf, np.inf), ("A", "B"),
    ),
    "bi_exp": Family(
        "bi_exp", ("A1", "T1", "A2", "T2", "B"), _bi, _bi_jac, _bi_guess,
        (-np.inf, 1e-9, -np.inf, 1e-9, -np.inf), (np.inf,) * 5, ("A1", "A2", "B"),
    ),
    "damped_sinusoid": Family(
        "damped_sinusoid", ("A", "theta_pi", "damping", "B"), _damped, _damped_jac,
        _damped_guess, (0.0, 1e-9, 0.0, -np.inf), (np.inf,) * 4, ("A", "B"),
    ),
}


def get_family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown fit family {name!r}; known: {sorted(FAMILIES)}") from None


def model_eval(family: str, params: Mapping[str, float], x):
    """Evaluate a family at `x`. bi_exp terms are reordered so T1 < T2."""
    fam = get_family(family)
    missing = set(fam.param_names) - set(params)
    if missing:
        raise ValueError(f"missing parameters {sorted(missing)} for {family}")
    vals = [float(params[p]) for p in fam.param_names]
    for p, v, lo, hi in zip(fam.param_names, vals, fam.lower, fam.upper):
        if not lo <= v <= hi:
            raise ValueError(f"parameter {p}={v} outside bounds [{lo}, {hi}]")
    if family == "bi_exp" and vals[1] > vals[3]:
        vals = [vals[2], vals[3], vals[0], vals[1], vals[4]]
    x = np.asarray(x, dtype=float)
    return fam.func(x, *vals)


def model_jacobian(family: str, params: Mapping[str, float], x) -> np.ndarray:
    fam = get_family(family)
    return fam.jac(np.asarray(x, dtype=float), *[float(params[p]) for p in fam.param_names])


@dataclass
class FitModel:
    """A family plus per-parameter initial values, bounds and fixed flags.

    Unspecified initial values come from the family's data-driven guess.
    """

    family: str
    initial: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        fam = get_family(self.family)
        for group in (self.initial, self.bounds, self.fixed):
            unknown = set(group) - set(fam.param_names)
            if unknown:
                raise ValueError(f"unknown parameters {sorted(unknown)} for {self.family}")
        for name, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise ValueError(f"bounds for {name} are inverted")
            if name in self.initial and not lo <= self.initial[name] <= hi:
                raise ValueError(f"initial value of {name} outside its bounds")

    @property
    def spec(self) -> Family:
        return get_family(self.family)

    @property
    def param_names(self) -> tuple:
        return self.spec.param_names

    def limits(self):
        fam = self.spec
        lo = np.array([self.bounds.get(p, (fam.lower[i], fam.upper[i]))[0]
                       for i, p in enumerate(fam.param_names)], dtype=float)
        hi = np.array([self.bounds.get(p, (fam.lower[i], fam.upper[i]))[1]
                       for i, p in enumerate(fam.param_names)], dtype=float)
        return lo, hi

    def starting_point(self, x, y) -> dict:
        fam = self.spec
        if self.family == "lorentzian_purcell":
            gc = self.fixed.get("gamma_c", self.initial.get("gamma_c", 233.0))
            guess = fam.guess(x, y, gamma_c=gc)
        else:
            guess = fam.guess(x, y)
        guess.update(self.initial)
        guess.update(self.fixed)
        lo, hi = self.limits()
        for i, p in enumerate(fam.param_names):
            v = guess[p]
            if not np.isfinite(v):
                v = 1.0
            guess[p] = float(np.clip(v, lo[i], hi[i]))
        return guess
