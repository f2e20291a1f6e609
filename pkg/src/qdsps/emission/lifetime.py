"""Synthetic time-resolved emission histograms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from ..core.evolution import evolve_master_equation
from ..core.model import build_model_operators
from ..core.rng import stream_rng
from .scenario import ExperimentScenario

LIFETIME_STREAM = 5


@dataclass
class LifetimeTrace:
    """Photon-arrival histogram: bin centres (ps), counts, and the model
    intensity it was sampled from. Bins before `baseline_end` precede the
    pulse and only hold dark counts."""

    times: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    baseline_end: float
    jitter_fwhm: float
    pulse_time: float
    meta: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [{"t_ps": float(t), "counts": float(c), "expected": float(e)}
                for t, c, e in zip(self.times, self.counts, self.expected)]


def emission_rate(scenario: ExperimentScenario, t_grid: np.ndarray) -> np.ndarray:
    """Cavity-channel photon flux (1/ps) after one pulse, on `t_grid`."""
    ops = build_model_operators(scenario.hilbert, scenario.model)
    ev = evolve_master_equation(scenario.hilbert.basis(False, 0), ops, 0.0, float(t_grid[-1]),
                                t_eval=t_grid)
    return ops.channel("cavity").rate * ev.expect(scenario.hilbert.photon_number())


def lifetime_trace(
    scenario: ExperimentScenario,
    delta_qd_cavity: float,
    background_amplitude: float = 0.0,
    background_tau: float = 1000.0,
    total_counts: float = 2e5,
    dark_counts_per_bin: float = 2.0,
    bin_width: float = 16.0,
    pre_pulse: float = 2000.0,
    duration: float = 8000.0,
    seed: int | None = None,
    noise: bool = True,
) -> LifetimeTrace:
    """Histogram of detected photon arrival times around one excitation pulse.

    The Purcell-enhanced decay comes from the master equation. A cavity-feeding
    background exponential of relative amplitude `background_amplitude` (peak
    ratio to the QD signal) and decay `background_tau` is added, the sum is
    convolved with the detector jitter, scaled so the QD part holds
    `total_counts`, and Poisson noise is drawn when `noise` is set.
    """
    if background_amplitude < 0 or background_tau <= 0 or bin_width <= 0:
        raise ValueError("invalid background or bin width")
    sc = scenario.with_model(delta_qd_cavity=float(delta_qd_cavity))
    pulse_time = sc.model.pulse.center
    n_bins = int(round((pre_pulse + duration) / bin_width))
    edges = -pre_pulse + bin_width * np.arange(n_bins + 1)
    centres = 0.5 * (edges[:-1] + edges[1:])

    # fine grid for the model, integrated per bin
    sub = 8
    fine = -pre_pulse + (bin_width / sub) * (np.arange(n_bins * sub) + 0.5)
    rate = np.zeros_like(fine)
    after = fine > 0
    grid = np.concatenate([[0.0], fine[after] + pulse_time])
    rate[after] = emission_rate(sc, grid)[1:]
    signal = rate / max(rate.sum(), 1e-300)
    bg = np.where(fine > 0, np.exp(-np.clip(fine, 0, None) / background_tau), 0.0)
    bg *= background_amplitude * signal.max()
    intensity = signal + bg
    sigma_bins = sc.detector.jitter_sigma / (bin_width / sub)
    if sigma_bins > 0:
        intensity = gaussian_filter1d(intensity, sigma_bins, mode="constant")
    expected = intensity.reshape(n_bins, sub).sum(axis=1) * total_counts + dark_counts_per_bin
    seed = sc.base_seed if seed is None else seed
    counts = stream_rng(seed, LIFETIME_STREAM).poisson(expected).astype(float) if noise else expected.copy()
    return LifetimeTrace(
        times=centres, counts=counts, expected=expected,
        baseline_end=-5.0 * sc.detector.jitter_sigma if sc.detector.jitter_sigma > 0 else -bin_width,
        jitter_fwhm=sc.detector.jitter_fwhm, pulse_time=0.0,
        meta={"delta_qd_cavity_ueV": float(delta_qd_cavity), "background_amplitude": background_amplitude,
              "background_tau_ps": background_tau, "seed": int(seed)},
    )
