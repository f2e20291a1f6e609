"""Synthetic detector click streams from quantum-jump trajectories."""
from __future__ import annotations

import math

import numpy as np

from ..core.evolution import photon_counting_distribution
from ..core.model import build_model_operators
from ..core.rng import stream_rng
from ..core.trajectories import JumpSampler
from ..stats.clickstream import SINGLE, ClickStream
from .scenario import ExperimentScenario

# sub-stream keys under the scenario seed
EFFICIENCY_STREAM = 1
JITTER_STREAM = 2
BACKGROUND_STREAM = 3
BLINKING_STREAM = 4
DARK_STREAM = 6


def blinking_gate(scenario: ExperimentScenario) -> np.ndarray:
    """On/off state of the emitter at each pulse, from the telegraph process.

    The chain starts in its stationary distribution and is sampled at the
    pulse times with the exact two-state transition probabilities.
    """
    n = scenario.n_pulses
    b = scenario.blinking
    if b is None:
        return np.ones(n, dtype=bool)
    k_off, k_on = b.rate_on_to_off, b.rate_off_to_on
    duty = b.duty_cycle
    decay = math.exp(-(k_off + k_on) * scenario.rep_period)
    p_stay_on = duty + (1.0 - duty) * decay
    p_turn_on = duty * (1.0 - decay)
    u = stream_rng(scenario.base_seed, BLINKING_STREAM).random(n)
    gate = np.empty(n, dtype=bool)
    state = u[0] < duty
    gate[0] = state
    for i in range(1, n):
        state = u[i] < (p_stay_on if state else p_turn_on)
        gate[i] = state
    return gate


def _apply_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    keep = np.ones(times.size, dtype=bool)
    last = -math.inf
    for i, t in enumerate(times):
        if t - last < dead_time:
            keep[i] = False
        else:
            last = t
    return keep


def emitter_clicks(scenario: ExperimentScenario, n_workers: int = 1):
    """(pulse_index, intra-period time) of every cavity photon, sorted by pulse then time."""
    ops = build_model_operators(scenario.hilbert, scenario.model)
    sampler = JumpSampler(ops, 0.0, scenario.rep_period, max_step=scenario.max_step)
    ens = sampler.run(scenario.hilbert.basis(False, 0), scenario.n_pulses,
                      base_seed=scenario.base_seed, n_workers=n_workers)
    return ens.clicks["cavity"]


def generate_click_stream(scenario: ExperimentScenario, n_workers: int = 1) -> ClickStream:
    """Single-channel detector stream for `scenario.n_pulses` pulses.

    Each pulse is one quantum-jump trajectory. Emitter photons are gated by
    blinking, background photons are added per pulse, then every photon is
    kept with the detector efficiency and delayed by Gaussian jitter. Dark
    counts and dead time are applied last. The result depends only on the
    scenario, not on `n_workers`.
    """
    det = scenario.detector
    seed = scenario.base_seed
    T = scenario.rep_period
    t_pulse = scenario.model.pulse.center

    pulse_idx, t_local = emitter_clicks(scenario, n_workers)
    if scenario.blinking is not None:
        on = blinking_gate(scenario)[pulse_idx]
        pulse_idx, t_local = pulse_idx[on], t_local[on]

    bg = scenario.background
    if bg.mean_photons > 0:
        rng = stream_rng(seed, BACKGROUND_STREAM)
        n_bg = rng.poisson(bg.mean_photons, scenario.n_pulses)
        bg_pulse = np.repeat(np.arange(scenario.n_pulses), n_bg)
        bg_local = t_pulse + rng.exponential(bg.tau, bg_pulse.size)
        pulse_idx = np.concatenate([pulse_idx, bg_pulse])
        t_local = np.concatenate([t_local, bg_local])

    times = pulse_idx * T + t_local
    keep = stream_rng(seed, EFFICIENCY_STREAM).random(times.size) < det.efficiency
    times = times[keep]
    if det.jitter_sigma > 0:
        times = times + det.jitter_sigma * stream_rng(seed, JITTER_STREAM).standard_normal(times.size)
    if det.dark_rate > 0:
        rng = stream_rng(seed, DARK_STREAM)
        duration = scenario.n_pulses * T
        n_dark = rng.poisson(det.dark_rate * duration)
        times = np.concatenate([times, rng.uniform(0.0, duration, n_dark)])
    times = np.sort(times, kind="stable")
    if det.dead_time > 0:
        times = times[_apply_dead_time(times, det.dead_time)]
    meta = {
        "rep_period": T,
        "scenario_hash": scenario.digest(),
        "seed": int(seed),
        "n_pulses": int(scenario.n_pulses),
    }
    return ClickStream(times, np.full(times.size, SINGLE, dtype="<U1"), meta)


def photon_number_moments(scenario: ExperimentScenario, n_max: int = 4) -> tuple[float, float]:
    """Mean and second factorial moment of cavity photons per pulse."""
    ops = build_model_operators(scenario.hilbert, scenario.model)
    probs = photon_counting_distribution(scenario.hilbert.basis(False, 0), ops, 0.0,
                                         scenario.rep_period, "cavity", n_max=n_max)
    n = np.arange(probs.size)
    return float(probs @ n), float(probs @ (n * (n - 1)))


def calibrate_background(scenario: ExperimentScenario, g2_target: float) -> float:
    """Poisson background photons per pulse that raise the emitter's g2(0) to `g2_target`.

    With emitter moments p = <n>, m2 = <n(n-1)> and an independent Poisson
    background of mean mu, g2 = (m2 + 2 p mu + mu^2) / (p + mu)^2, solved
    for mu >= 0.
    """
    if not 0.0 <= g2_target < 1.0:
        raise ValueError("g2_target must lie in [0, 1)")
    p, m2 = photon_number_moments(scenario)
    if p <= 0:
        raise ValueError("emitter produces no photons")
    g_emitter = m2 / p**2
    if g2_target < g_emitter:
        raise ValueError(f"target {g2_target} below the emitter's own g2 {g_emitter:.4g}")
    return -p + math.sqrt((p * p - m2) / (1.0 - g2_target))


def expected_g2(scenario: ExperimentScenario) -> float:
    """Single-pulse g2(0) of emitter plus background photons (no blinking)."""
    p, m2 = photon_number_moments(scenario)
    mu = scenario.background.mean_photons
    return (m2 + 2 * p * mu + mu * mu) / (p + mu) ** 2
