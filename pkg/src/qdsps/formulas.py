"""Closed-form cavity-QED design, extraction and efficiency formulas."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

Q_2D_DEFAULT = 6670.0
ETA_SETUP_DEFAULT = 0.0036
REP_RATE_DEFAULT = 82e6  # 1/s


class DesignWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Measurement:
    """A value with an optional one-sigma uncertainty."""

    value: float
    error: Optional[float] = None

    def __float__(self) -> float:
        return float(self.value)


def _positive(**values):
    for name, v in values.items():
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")


def purcell_max(q, lambda_c=1.0, n=1.0, v_mode=1.0, volume_unit: str = "cubic_wavelength"):
    """Maximum Purcell enhancement 3 Q (lambda_c/n)^3 / (4 pi^2 V_M).

    With ``volume_unit="cubic_wavelength"`` the mode volume is given in units of
    (lambda_c/n)^3 and lambda_c, n drop out. With ``"um3"`` the volume is in
    cubic micrometres and lambda_c in nm.
    """
    _positive(q=q, lambda_c=lambda_c, n=n, v_mode=v_mode)
    if volume_unit == "cubic_wavelength":
        return 3.0 * q / (4.0 * math.pi**2 * v_mode)
    if volume_unit == "um3":
        cube = (lambda_c * 1e-3 / n) ** 3
        return 3.0 * q * cube / (4.0 * math.pi**2 * v_mode)
    raise ValueError(f"unknown volume unit {volume_unit!r}")


def mode_volume_for_purcell(q, f_p_max):
    """Mode volume in (lambda/n)^3 that gives `f_p_max` at quality factor `q`."""
    _positive(q=q, f_p_max=f_p_max)
    return 3.0 * q / (4.0 * math.pi**2 * f_p_max)


@dataclass(frozen=True)
class PillarDesign:
    """Micropillar parameters entering the extraction-efficiency estimate.

    `v_mode` is in units of (lambda_c/n)^3. `gamma_fraction` is the leaky-mode
    fraction of the emission.
    """

    diameter: float
    q_pillar: float
    q_2d: float = Q_2D_DEFAULT
    lambda_c: float = 894.0
    n_refractive: float = 3.5
    v_mode: float = 141.3
    gamma_fraction: float = 1.0

    def __post_init__(self):
        _positive(
            diameter=self.diameter, q_pillar=self.q_pillar, q_2d=self.q_2d,
            lambda_c=self.lambda_c, n_refractive=self.n_refractive, v_mode=self.v_mode,
        )
        if not 0.0 < self.gamma_fraction <= 1.0:
            raise ValueError("gamma_fraction must lie in (0, 1]")
        if self.q_pillar > self.q_2d:
            warnings.warn(
                f"pillar Q {self.q_pillar} exceeds planar Q {self.q_2d}", DesignWarning, stacklevel=2
            )

    @property
    def purcell_max(self) -> float:
        return purcell_max(self.q_pillar, v_mode=self.v_mode)

    @property
    def extraction_efficiency(self) -> float:
        return extraction_efficiency(self, self.purcell_max)


def extraction_efficiency(design: PillarDesign, f_p_max: float) -> float:
    """(Q_pillar / Q_2D) * F / (gamma + F)."""
    if not 0.0 < design.gamma_fraction <= 1.0:
        raise ValueError("gamma_fraction must lie in (0, 1]")
    _positive(f_p_max=f_p_max)
    return (design.q_pillar / design.q_2d) * f_p_max / (design.gamma_fraction + f_p_max)


def intensity_vs_detuning(f_p, gamma_c, delta):
    """Relative QD intensity F/(F + 1 + delta^2/gamma_c^2); array-valued in delta."""
    _positive(f_p=f_p, gamma_c=gamma_c)
    delta = np.asarray(delta, dtype=float)
    out = f_p / (f_p + 1.0 + (delta / gamma_c) ** 2)
    return out if out.ndim else float(out)


def purcell_from_lifetimes(t_on, t_off, sigma_on=None, sigma_off=None) -> Measurement:
    """Purcell factor T_off/T_on - 1 with first-order propagated error.

    The error is None unless both lifetime uncertainties are given.
    """
    _positive(t_on=t_on, t_off=t_off)
    value = t_off / t_on - 1.0
    if sigma_on is None or sigma_off is None:
        return Measurement(value)
    if sigma_on < 0 or sigma_off < 0:
        raise ValueError("uncertainties must be >= 0")
    err = math.hypot(sigma_off / t_on, t_off * sigma_on / t_on**2)
    return Measurement(value, err)


def resample_purcell(t_on, t_off, sigma_on, sigma_off, n=200_000, seed=0) -> Measurement:
    """Monte Carlo cross-check of the propagated error (Gaussian lifetimes)."""
    _positive(t_on=t_on, t_off=t_off)
    rng = np.random.default_rng(seed)
    on = rng.normal(t_on, sigma_on, n)
    off = rng.normal(t_off, sigma_off, n)
    keep = on > 0
    f = off[keep] / on[keep] - 1.0
    # the ratio has heavy tails when sigma_on/t_on is large; use a robust width
    lo, hi = np.percentile(f, [15.865525393145708, 84.13447460685429])
    return Measurement(float(np.median(f)), float(0.5 * (hi - lo)))


def q_from_linewidth(e_center, delta_e):
    _positive(e_center=e_center, delta_e=delta_e)
    return e_center / delta_e


def single_photon_efficiency(eta, g2_zero):
    """eta * sqrt(1 - g2(0))."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if not 0.0 <= g2_zero < 1.0:
        raise ValueError("g2_zero must lie in [0, 1)")
    return eta * math.sqrt(1.0 - g2_zero)


def count_rate_to_efficiency(counts, rep_rate=REP_RATE_DEFAULT, eta_setup=ETA_SETUP_DEFAULT,
                             polarization_factor: int = 1):
    """Source efficiency from a detected count rate.

    The detected rate covers one linear polarization and is referred to both
    polarization channels of the calibrated setup, so factor 1 gives the
    per-polarization efficiency and factor 2 the full source efficiency.
    """
    if polarization_factor not in (1, 2):
        raise ValueError("polarization_factor must be 1 or 2")
    _positive(rep_rate=rep_rate, eta_setup=eta_setup)
    if counts < 0:
        raise ValueError("counts must be >= 0")
    eta = polarization_factor * counts / (2.0 * rep_rate * eta_setup)
    if eta > 1.0:
        raise ValueError(f"implied efficiency {eta:.3f} exceeds 1")
    return eta


@dataclass(frozen=True)
class EfficiencyChain:
    """Detected count rate through to the multi-photon corrected efficiency."""

    counts_detected: float
    eta_setup: float = ETA_SETUP_DEFAULT
    rep_rate: float = REP_RATE_DEFAULT
    g2_zero: float = 0.0

    def __post_init__(self):
        for name in ("eta_lin", "eta_source", "eta_sps"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @property
    def eta_lin(self) -> float:
        return count_rate_to_efficiency(self.counts_detected, self.rep_rate, self.eta_setup, 1)

    @property
    def eta_source(self) -> float:
        return count_rate_to_efficiency(self.counts_detected, self.rep_rate, self.eta_setup, 2)

    @property
    def eta_sps(self) -> float:
        return single_photon_efficiency(self.eta_source, self.g2_zero)

    @property
    def eta_sps_linear(self) -> float:
        return single_photon_efficiency(self.eta_lin, self.g2_zero)

    def as_dict(self) -> dict:
        return {
            "counts_detected": self.counts_detected, "eta_setup": self.eta_setup,
            "rep_rate": self.rep_rate, "g2_zero": self.g2_zero, "eta_lin": self.eta_lin,
            "eta_source": self.eta_source, "eta_sps": self.eta_sps,
            "eta_sps_linear": self.eta_sps_linear,
        }


# Illustrative Q(d) table in the shape of the measured curve (not printed values)
Q_TABLE_DEFAULT = {
    1.0: 1500.0, 1.5: 3200.0, 2.0: 4900.0, 2.5: 5400.0, 3.0: 5700.0,
    3.5: 5850.0, 4.0: 5950.0, 5.0: 6100.0, 6.0: 6250.0, 8.0: 6400.0,
}
REFERENCE_DIAMETER = 4.0
REFERENCE_V_MODE = mode_volume_for_purcell(5950.0, 3.2)


def mode_volume_at(diameter, ref_diameter=REFERENCE_DIAMETER, ref_v_mode=REFERENCE_V_MODE):
    """Mode volume scaled with pillar area from a reference pillar."""
    _positive(diameter=diameter, ref_diameter=ref_diameter, ref_v_mode=ref_v_mode)
    return ref_v_mode * (diameter / ref_diameter) ** 2


def design_sweep(
    diameters: Sequence[float],
    q_table: Mapping[float, float] = Q_TABLE_DEFAULT,
    ref_diameter: float = REFERENCE_DIAMETER,
    ref_v_mode: float = REFERENCE_V_MODE,
    q_2d: float = Q_2D_DEFAULT,
    gamma_fraction: float = 1.0,
) -> list[dict]:
    """Rows {diameter_um, Q, F_P_max, eta_ext, v_mode} for each requested diameter."""
    if not q_table:
        raise ValueError("q_table is empty")
    table = {float(k): float(v) for k, v in q_table.items()}
    rows = []
    for d in diameters:
        d = float(d)
        if d not in table:
            raise KeyError(f"no Q value for diameter {d} um")
        v = mode_volume_at(d, ref_diameter, ref_v_mode)
        design = PillarDesign(d, table[d], q_2d=q_2d, v_mode=v, gamma_fraction=gamma_fraction)
        f = design.purcell_max
        rows.append({"diameter_um": d, "Q": design.q_pillar, "F_P_max": f,
                     "eta_ext": extraction_efficiency(design, f), "v_mode": v})
    return rows


DESIGN_COLUMNS = ("diameter_um", "Q", "F_P_max", "eta_ext")


def write_design_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DESIGN_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in DESIGN_COLUMNS])
