"""Emission probability against pulse area, and the detuning series."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..core.evolution import IntegrationError, evolve_master_equation
from ..core.model import HilbertConfig, SystemModel, build_model_operators
from ..core.trajectories import JumpSampler
from ..fitting import DampedSinusoidRegressor
from .scenario import ExperimentScenario

OBSERVABLES = ("cavity", "total", "excited")


@dataclass
class RabiCurve:
    """Emission against pulse area.

    `areas` is the drive axis as set at the input (radians of an on-resonance
    pulse); `effective_areas` is what reaches the emitter.
    """

    areas: np.ndarray
    emission: np.ndarray
    mc_error: np.ndarray
    observable: str = "cavity"
    effective_areas: Optional[np.ndarray] = None
    delta: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.areas = np.asarray(self.areas, dtype=float)
        self.emission = np.asarray(self.emission, dtype=float)
        self.mc_error = np.asarray(self.mc_error, dtype=float)
        if self.effective_areas is None:
            self.effective_areas = self.areas.copy()
        if np.any(self.mc_error < 0):
            raise ValueError("errors must be >= 0")

    @property
    def peak(self) -> float:
        return float(np.max(self.emission)) if self.emission.size else math.nan

    def sqrt_power(self, area_pi: float = math.pi) -> np.ndarray:
        """Drive axis in units of sqrt(P_pi), using power proportional to area^2."""
        return self.areas / area_pi

    def rows(self) -> list[dict]:
        return [
            {"delta_ueV": self.delta, "area_rad": float(a), "effective_area_rad": float(e),
             "sqrt_power": float(a / math.pi), "emission": float(p), "error": float(s)}
            for a, e, p, s in zip(self.areas, self.effective_areas, self.emission, self.mc_error)
        ]


def emission_probability(model: SystemModel, hilbert: HilbertConfig, rep_period: float,
                         observable: str = "cavity") -> float:
    """Single-pulse response starting from the ground state.

    "cavity" and "total" are the photon numbers emitted through the cavity
    (or through cavity plus leaky modes) within one period; "excited" is the
    exciton population just after the pulse.
    """
    if observable not in OBSERVABLES:
        raise ValueError(f"observable must be one of {OBSERVABLES}")
    ops = build_model_operators(hilbert, model)
    psi0 = hilbert.basis(False, 0)
    if observable == "excited":
        t_end = min(model.pulse.window[1], rep_period)
        ev = evolve_master_equation(psi0, ops, 0.0, t_end)
        return float(ev.expect(hilbert.excited_projector())[-1])
    ev = evolve_master_equation(psi0, ops, 0.0, rep_period)
    value = ev.emitted("cavity")[-1]
    if observable == "total":
        value = value + ev.emitted("leaky")[-1]
    return float(value)


def rabi_curve(
    scenario: ExperimentScenario,
    areas: Sequence[float],
    observable: str = "cavity",
    method: str = "master",
    n_trajectories: Optional[int] = None,
    threads: int = 1,
) -> RabiCurve:
    """Emission against pulse area, one independent pulse per area.

    method="master" integrates the master equation (errors are zero);
    method="trajectories" counts cavity jumps over `n_trajectories` pulses
    (default scenario.n_pulses) and reports the standard error.
    """
    areas = np.asarray(areas, dtype=float)
    if np.any(~np.isfinite(areas)) or np.any(areas < 0):
        raise ValueError("areas must be finite and >= 0")
    if method not in ("master", "trajectories"):
        raise ValueError(f"unknown method {method!r}")
    if method == "trajectories" and observable != "cavity":
        raise ValueError("trajectory sampling provides the cavity observable only")

    def point(a):
        model = scenario.model.with_(pulse=scenario.model.pulse.with_area(a))
        try:
            if method == "master":
                return emission_probability(model, scenario.hilbert, scenario.rep_period, observable), 0.0
            n = int(n_trajectories or scenario.n_pulses)
            ops = build_model_operators(scenario.hilbert, model)
            sampler = JumpSampler(ops, 0.0, scenario.rep_period, max_step=scenario.max_step)
            ens = sampler.run(scenario.hilbert.basis(False, 0), n, base_seed=scenario.base_seed)
            counts = ens.counts_per_trajectory("cavity")
            return float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        except IntegrationError as exc:
            raise IntegrationError(f"pulse area {a:.6g}: {exc}", exc.time) from exc

    if threads > 1 and areas.size > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(point, areas))
    else:
        out = [point(a) for a in areas]
    emission = np.array([o[0] for o in out])
    err = np.array([o[1] for o in out])
    return RabiCurve(areas, emission, err, observable, delta=scenario.model.delta_qd_cavity)


def lorentzian_transmission(delta, kappa):
    """Cavity intensity transmission L = 1/(1 + (2 delta/kappa)^2)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    delta = np.asarray(delta, dtype=float)
    out = 1.0 / (1.0 + (2.0 * delta / kappa) ** 2)
    return out if out.ndim else float(out)


def cavity_filtered_drive(area_at_resonance, delta_laser_cavity, kappa):
    """Pulse area reaching the emitter when the drive is filtered by the cavity.

    The field amplitude passes the cavity Lorentzian, so the area scales with
    sqrt(L) and the power needed for a given area with 1/L.
    """
    out = np.asarray(area_at_resonance, dtype=float) * np.sqrt(
        lorentzian_transmission(delta_laser_cavity, kappa))
    return out if out.ndim else float(out)


def linear_dephasing_map(offset: float = 0.02, slope: float = 2e-4) -> Callable[[float], float]:
    """Excitation-induced dephasing coefficient growing linearly with |delta| (ueV)."""
    if offset < 0 or slope < 0:
        raise ValueError("offset and slope must be >= 0")

    def fn(delta):
        return offset + slope * abs(delta)

    fn.offset, fn.slope = offset, slope
    return fn


def detuning_series(
    scenario: ExperimentScenario,
    deltas: Sequence[float],
    areas: Sequence[float],
    dephasing_map: Optional[Callable[[float], float]] = None,
    observable: str = "cavity",
    threads: int = 1,
) -> list[RabiCurve]:
    """Rabi curves for a QD tuned by `deltas` from the cavity, laser on the QD.

    `areas` is the grid of areas reaching the QD; each curve's input axis is
    stretched by 1/sqrt(L(delta)) to undo the cavity filtering of the drive.
    The cavity-channel emission already carries the detuning-dependent
    extraction, so no separate intensity factor is applied.
    """
    deltas = list(deltas)
    areas = np.asarray(areas, dtype=float)
    if not deltas or areas.size == 0:
        raise ValueError("deltas and areas must be non-empty")
    dephasing_map = dephasing_map or linear_dephasing_map()
    curves = []
    for d in deltas:
        eid = float(dephasing_map(d))
        sc = scenario.with_model(delta_qd_cavity=float(d), delta_laser_qd=0.0, eid_coefficient=eid)
        curve = rabi_curve(sc, areas, observable=observable, threads=threads)
        transmission = lorentzian_transmission(d, scenario.model.kappa)
        curve.effective_areas = areas.copy()
        curve.areas = areas / math.sqrt(transmission)
        curve.delta = float(d)
        curve.meta = {"eid_coefficient": eid, "transmission": transmission}
        curves.append(curve)
    return curves


def fit_rabi_curve(curve: RabiCurve) -> dict:
    """Damped-sinusoid fit on the input axis, with derived quantities."""
    sigma = curve.mc_error if np.all(curve.mc_error > 0) else None
    est = DampedSinusoidRegressor().fit(curve.areas, curve.emission, sigma=sigma)
    p = est.params_
    return {
        "delta_ueV": curve.delta,
        "A": p["A"], "theta_pi": p["theta_pi"], "damping": p["damping"], "B": p["B"],
        "damping_per_pi": p["damping"] * p["theta_pi"],
        "pi_power": (p["theta_pi"] / math.pi) ** 2,
        "peak": curve.peak,
        "converged": est.result_.converged,
        "reduced_chi2": est.result_.reduced_chi2,
    }
