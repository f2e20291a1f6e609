"""Full A-B cross-correlation histograms and the peak-area g2(0) estimate."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from ..fitting.lm import covariance_from_jacobian, levenberg_marquardt
from .clickstream import ClickStream

DEFAULT_SIDE_PEAKS = 10


@dataclass
class CoincidenceHistogram:
    """Counts of A-B delays tau = t_B - t_A, bin k centred on k*bin_width.

    Bins run from -n_half to n_half; `window` is the per-peak integration
    width used by the g2 estimate.
    """

    bin_width: float
    counts: np.ndarray
    rep_period: float
    max_delay: float
    window: Optional[float] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if np.any(self.counts < 0):
            raise ValueError("counts must be >= 0")
        if self.counts.size % 2 != 1:
            raise ValueError("histogram must have an odd number of bins centred on zero")
        if self.window is None:
            self.window = self.rep_period
        if not 0 < self.window <= self.rep_period:
            raise ValueError("window must lie in (0, rep_period]")

    @property
    def n_half(self) -> int:
        return self.counts.size // 2

    @property
    def taus(self) -> np.ndarray:
        return self.bin_width * np.arange(-self.n_half, self.n_half + 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def peak_areas(self, n_peaks: int) -> dict:
        """Counts inside each window centred on k*rep_period, for |k| <= n_peaks."""
        need = n_peaks * self.rep_period + 0.5 * self.window
        if need > self.max_delay * (1 + 1e-12):
            raise ValueError(
                f"histogram reaches {self.max_delay:.6g} ps but {n_peaks} peaks need {need:.6g} ps"
            )
        taus = self.taus
        k = np.rint(taus / self.rep_period).astype(np.int64)
        inside = np.abs(taus - k * self.rep_period) <= 0.5 * self.window
        areas = {}
        for j in range(-n_peaks, n_peaks + 1):
            areas[j] = int(self.counts[inside & (k == j)].sum())
        return areas

    def rows(self) -> list:
        return list(zip(self.taus.tolist(), self.counts.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau_ps", "counts"])
            for t, c in self.rows():
                w.writerow([repr(float(t)), int(c)])


def _pair_delays(a: np.ndarray, b: np.ndarray, max_delay: float) -> np.ndarray:
    """All t_B - t_A with |t_B - t_A| <= max_delay; a and b sorted."""
    pad = max_delay * 1e-12 + 1e-9
    lo = np.searchsorted(b, a - max_delay - pad, side="left")
    hi = np.searchsorted(b, a + max_delay + pad, side="right")
    n = hi - lo
    total = int(n.sum())
    if total == 0:
        return np.empty(0)
    ia = np.repeat(np.arange(a.size), n)
    # offsets 0..n_i-1 within each A event's run of partners
    start = np.repeat(np.cumsum(n) - n, n)
    ib = np.repeat(lo, n) + (np.arange(total) - start)
    tau = b[ib] - a[ia]
    return tau[np.abs(tau) <= max_delay]


def correlate(
    stream: ClickStream,
    max_delay: float,
    bin_width: float,
    rep_period: Optional[float] = None,
    window: Optional[float] = None,
    n_workers: int = 1,
) -> CoincidenceHistogram:
    """Histogram every A-B pair with |t_B - t_A| <= max_delay.

    Delays are binned with k = rint(tau / bin_width), so swapping the
    channels mirrors the histogram exactly. A events may be processed in
    shards on `n_workers` threads; shard counts are summed as integers.
    """
    if bin_width <= 0 or max_delay <= 0:
        raise ValueError("bin_width and max_delay must be positive")
    if np.any(np.diff(stream.timestamps) < 0):
        raise ValueError("stream must be sorted")
    if len(stream) and not stream.is_two_channel:
        raise ValueError("correlate needs a two-channel (A/B) stream")
    rep_period = rep_period if rep_period is not None else stream.rep_period
    if rep_period is None:
        raise ValueError("rep_period unknown; pass it explicitly")
    a = stream.channel("A")
    b = stream.channel("B")
    n_half = int(math.ceil(max_delay / bin_width - 1e-12))

    def shard(part):
        tau = _pair_delays(part, b, max_delay)
        k = np.rint(tau / bin_width).astype(np.int64) + n_half
        return np.bincount(k, minlength=2 * n_half + 1)

    if n_workers > 1 and a.size > 1:
        parts = np.array_split(a, n_workers)
        with ThreadPoolExecutor(n_workers) as pool:
            counts = sum(pool.map(shard, parts))
    else:
        counts = shard(a)
    return CoincidenceHistogram(bin_width, counts, float(rep_period), float(max_delay), window)


def brute_force_pairs(stream: ClickStream, max_delay: float) -> int:
    """O(N^2) count of A-B pairs within max_delay; reference for tests."""
    a = stream.channel("A")
    b = stream.channel("B")
    n = 0
    for ta in a:
        for tb in b:
            if abs(tb - ta) <= max_delay:
                n += 1
    return n


@dataclass
class G2Value:
    g2: float
    error: float
    central: int
    side_mean: float


def g2_zero(hist: CoincidenceHistogram, n_side_peaks: int = DEFAULT_SIDE_PEAKS) -> G2Value:
    """Central-window area over the mean of 2*n_side_peaks side windows.

    Errors assume Poisson counts in every window; an empty central window
    is given a one-count error.
    """
    if n_side_peaks < 1:
        raise ValueError("need at least one side peak per side")
    areas = hist.peak_areas(n_side_peaks)
    central = areas[0]
    side_total = sum(v for k, v in areas.items() if k != 0)
    if side_total == 0:
        raise ZeroDivisionError("side peaks are empty; g2 undefined")
    m = side_total / (2 * n_side_peaks)
    g = central / m
    var = max(central, 1) / m**2 + g**2 / side_total
    return G2Value(g, math.sqrt(var), central, m)


@dataclass
class EnvelopeFit:
    """A(k) = a_inf (1 + c exp(-|k|/k0)) fitted to side-peak areas."""

    a_inf: float
    contrast: float
    k0: float
    errors: dict
    converged: bool

    def to_dict(self) -> dict:
        def clean(v):
            return v if math.isfinite(v) else None

        return {"a_inf": self.a_inf, "contrast": self.contrast, "k0": self.k0,
                "errors": {k: clean(v) for k, v in self.errors.items()}, "converged": self.converged}


def _envelope(k, a_inf, c, k0):
    return a_inf * (1.0 + c * np.exp(-np.abs(k) / k0))


def fit_envelope(peaks: dict) -> EnvelopeFit:
    k = np.array([j for j in peaks if j != 0], dtype=float)
    y = np.array([peaks[j] for j in peaks if j != 0], dtype=float)
    if k.size < 4:
        raise ValueError("need at least two side peaks per side for the envelope")
    sigma = np.sqrt(np.maximum(y, 1.0))
    ak = np.abs(k)
    far = y[ak >= np.median(ak)]
    a0 = float(far.mean()) if far.size else float(y.mean())
    near = y[ak == ak.min()].mean()
    c0 = max(near / a0 - 1.0, 0.0) * math.e if a0 > 0 else 0.0
    x0 = np.array([a0, c0, 1.0])
    lower = np.array([0.0, -0.99, 1e-3])
    upper = np.array([np.inf, np.inf, 1e4])

    def res(p):
        return (_envelope(k, *p) - y) / sigma

    def jac(p):
        a, c, k0 = p
        e = np.exp(-ak / k0)
        return np.column_stack([1.0 + c * e, a * e, a * c * e * ak / k0**2]) / sigma[:, None]

    out = levenberg_marquardt(res, jac, x0, lower, upper)
    cov = covariance_from_jacobian(out.jacobian)
    dof = k.size - 3
    if dof > 0:
        with np.errstate(invalid="ignore"):
            cov = np.where(np.isinf(cov), np.inf, cov * max(2.0 * out.cost / dof, 1.0))
    err = np.sqrt(np.abs(np.diag(cov)))
    a, c, k0 = out.x
    return EnvelopeFit(float(a), float(c), float(k0),
                       {"a_inf": float(err[0]), "contrast": float(err[1]), "k0": float(err[2])},
                       out.converged)


def side_peak_envelope(hist: CoincidenceHistogram, n_peaks: int = DEFAULT_SIDE_PEAKS):
    """Per-peak areas for |k| <= n_peaks and the fitted blinking envelope."""
    peaks = hist.peak_areas(n_peaks)
    rows = [{"peak_index": j, "area": v} for j, v in sorted(peaks.items())]
    return rows, fit_envelope(peaks)


class G2Estimator(BaseEstimator):
    """Peak-area g2(0) from an A/B click stream.

    After `fit`, `g2_`/`g2_error_` hold the ratio to the mean side peak and
    `g2_corrected_`/`g2_corrected_error_` the ratio to the fitted
    long-delay envelope level, which removes blinking bunching.
    """

    def __init__(self, n_side_peaks=DEFAULT_SIDE_PEAKS, bin_width=64.0, window=None,
                 rep_period=None, n_workers=1):
        self.n_side_peaks = n_side_peaks
        self.bin_width = bin_width
        self.window = window
        self.rep_period = rep_period
        self.n_workers = n_workers

    def fit(self, stream: ClickStream, y=None):
        rep = self.rep_period or stream.rep_period
        if rep is None:
            raise ValueError("rep_period unknown; set it on the estimator or the stream")
        window = self.window or rep
        max_delay = self.n_side_peaks * rep + 0.5 * window
        self.histogram_ = correlate(stream, max_delay, self.bin_width, rep, window, self.n_workers)
        val = g2_zero(self.histogram_, self.n_side_peaks)
        self.g2_, self.g2_error_ = val.g2, val.error
        self.central_area_, self.side_mean_ = val.central, val.side_mean
        self.peak_areas_, self.envelope_ = side_peak_envelope(self.histogram_, self.n_side_peaks)
        env = self.envelope_
        if env.a_inf > 0:
            g = val.central / env.a_inf
            rel = env.errors["a_inf"] / env.a_inf if math.isfinite(env.errors["a_inf"]) else math.inf
            self.g2_corrected_ = g
            self.g2_corrected_error_ = math.sqrt(max(val.central, 1) / env.a_inf**2 + (g * rel) ** 2)
        else:
            self.g2_corrected_ = self.g2_corrected_error_ = math.nan
        return self

    def report(self) -> dict:
        def clean(v):
            return v if math.isfinite(v) else None

        return {
            "g2": self.g2_,
            "error": self.g2_error_,
            "g2_blinking_corrected": clean(self.g2_corrected_),
            "error_blinking_corrected": clean(self.g2_corrected_error_),
            "central_area": self.central_area_,
            "side_peak_mean": self.side_mean_,
            "n_side_peaks": self.n_side_peaks,
            "window_ps": self.histogram_.window,
            "bin_width_ps": self.bin_width,
            "rep_period_ps": self.histogram_.rep_period,
            "peak_areas": self.peak_areas_,
            "envelope_fit": self.envelope_.to_dict(),
        }

    def write_report(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2, sort_keys=True)
            fh.write("\n")
