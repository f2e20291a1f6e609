"""Background-subtracted mono/bi-exponential fits of time-resolved decays."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fit import FitResult, fit
from .models import FitModel

SIGNIFICANCE = 5.0


@dataclass
class LifetimeFit:
    """Outcome of `fit_lifetimes`.

    `lifetime` is the fast (or only) decay constant in ps; `reliable` is
    False when the decay amplitude is not significant or the fit failed.
    """

    model: str
    result: FitResult
    mono: FitResult
    bi: Optional[FitResult]
    background: float
    fit_start: float
    lifetime: float
    lifetime_error: float
    slow_lifetime: Optional[float]
    reliable: bool
    aicc: dict

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "lifetime_ps": self.lifetime,
            "lifetime_error_ps": self.lifetime_error if math.isfinite(self.lifetime_error) else None,
            "slow_lifetime_ps": self.slow_lifetime,
            "background": self.background,
            "fit_start_ps": self.fit_start,
            "reliable": self.reliable,
            "aicc": {k: (v if math.isfinite(v) else None) for k, v in self.aicc.items()},
            "fit": self.result.to_dict(),
        }


def _significant(res: FitResult, amp: str, tau: str, span: float) -> bool:
    if not res.converged or not res.identifiable:
        return False
    a, ea = res.estimates[amp], res.std_errors[amp]
    t = res.estimates[tau]
    return a > 0 and a > SIGNIFICANCE * ea and 0 < t < 10.0 * span


def fit_lifetimes(
    trace=None,
    mode: str = "auto",
    *,
    times=None,
    counts=None,
    baseline_end: Optional[float] = None,
    fit_start: Optional[float] = None,
    background: Optional[float] = None,
) -> LifetimeFit:
    """Fit a decay histogram after subtracting a constant background.

    `trace` may be any object with `times` and `counts` (and optionally
    `baseline_end` and `jitter_fwhm`) attributes; arrays can be passed
    instead. The background is the mean of the bins before `baseline_end`
    unless given explicitly. Fits start `jitter_fwhm` after the maximum
    unless `fit_start` is set. In auto mode the model with the lower AICc
    wins; a bi-exponential whose second amplitude is not significant falls
    back to mono.
    """
    if mode not in ("auto", "mono", "bi"):
        raise ValueError(f"unknown mode {mode!r}")
    if trace is not None:
        times = trace.times
        counts = trace.counts
        if baseline_end is None:
            baseline_end = getattr(trace, "baseline_end", None)
    if times is None or counts is None:
        raise ValueError("provide a trace or times and counts")
    t = np.asarray(times, dtype=float)
    c = np.asarray(counts, dtype=float)
    if t.shape != c.shape or t.ndim != 1:
        raise ValueError("times and counts must be 1-D arrays of equal length")
    if background is None:
        if baseline_end is None:
            raise ValueError("no pre-pulse baseline region; pass background= explicitly")
        base = c[t < baseline_end]
        if base.size == 0:
            raise ValueError("baseline region is empty; pass background= explicitly")
        background = float(base.mean())
    if fit_start is None:
        delay = float(getattr(trace, "jitter_fwhm", 0.0) or 0.0) if trace is not None else 0.0
        fit_start = float(t[np.argmax(c)]) + delay
    sel = t >= fit_start
    x = t[sel] - fit_start
    y = c[sel] - background
    sigma = np.sqrt(np.maximum(c[sel], 1.0))
    span = float(np.ptp(x)) if x.size else 0.0

    mono = fit(FitModel("mono_exp", fixed={"B": 0.0}), x, y, sigma)
    bi = None
    if mode in ("auto", "bi"):
        bi = fit(FitModel("bi_exp", fixed={"B": 0.0}), x, y, sigma)
    aicc = {"mono": mono.aicc, "bi": bi.aicc if bi is not None else math.inf}

    use_bi = mode == "bi"
    if mode == "auto" and bi is not None and bi.converged:
        both = (_significant(bi, "A1", "T1", span) and _significant(bi, "A2", "T2", span))
        use_bi = both and aicc["bi"] < aicc["mono"]
    if use_bi:
        res = bi
        tau, err = bi.estimates["T1"], bi.std_errors["T1"]
        slow = bi.estimates["T2"]
        reliable = _significant(bi, "A1", "T1", span)
    else:
        res = mono
        tau, err = mono.estimates["T"], mono.std_errors["T"]
        slow = None
        reliable = _significant(mono, "A", "T", span)
    return LifetimeFit("bi" if use_bi else "mono", res, mono, bi, background, fit_start,
                       float(tau), float(err), slow, reliable, aicc)
