"""Scenario files: schema, validation with key paths, and object construction.

Every physical key carries its unit in the name. Unknown keys are errors.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .core.model import PulseShape, SystemModel, calibrate_from_lifetimes
from .emission.scenario import Background, Blinking, DetectorModel, ExperimentScenario

SCHEMA_VERSION = 1
DEFAULT_SCENARIO = Path(__file__).parent / "data" / "default.yaml"


class ConfigError(ValueError):
    """Schema violation; `path` locates the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Field:
    kind: str
    default: Any = None
    required: bool = False


_F = Field
SCHEMA: dict = {
    "system": {
        "kappa_ueV": _F("pos", 233.0),
        "g_ueV": _F("nonneg_opt"),
        "purcell_factor": _F("nonneg_opt"),
        "t_leaky_ps": _F("pos_opt"),
        "t_on_ps": _F("pos_opt"),
        "t_off_ps": _F("pos_opt"),
        "delta_off_ueV": _F("float_opt"),
        "delta_qd_cavity_ueV": _F("float", 0.0),
        "delta_laser_qd_ueV": _F("float", 0.0),
        "gamma_dephasing_per_ps": _F("nonneg", 0.0),
        "eid_coefficient": _F("nonneg", 0.0),
        "n_fock": _F("int_pos", 2),
        "rep_rate_MHz": _F("pos", 82.0),
        "background_photons_per_pulse": _F("nonneg_opt"),
        "background_tau_ps": _F("pos", 1000.0),
        "blinking_on_to_off_per_ps": _F("nonneg_opt"),
        "blinking_off_to_on_per_ps": _F("pos_opt"),
    },
    "pulse": {
        "area_pi": _F("nonneg", 1.0),
        "fwhm_ps": _F("pos", 1.3),
        "center_ps": _F("float", 5.0),
        "truncation_sigma": _F("pos", 5.0),
    },
    "detector": {
        "jitter_fwhm_ps": _F("nonneg", 400.0),
        "efficiency": _F("unit", 1.0),
        "dead_time_ps": _F("nonneg", 0.0),
        "dark_rate_per_ps": _F("nonneg", 0.0),
        "setup_efficiency": _F("unit", 0.0036),
        "trajectory_step_ps": _F("pos", 2.0),
    },
    "sweep": {
        "n_pulses": _F("int_pos", 100_000),
        "areas_pi": _F("grid", [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
        "rabi_deltas_ueV": _F("float_list", []),
        "diameters_um": _F("float_list", [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 8.0]),
        "scan_deltas_ueV": _F("grid", {"start": -600.0, "stop": 600.0, "num": 15}),
    },
    "analysis": {
        "g2_target": _F("unit_opt"),
        "n_side_peaks": _F("int_pos", 10),
        "bin_width_ps": _F("pos", 64.0),
        "window_ps": _F("pos_opt"),
        "poisson_photons_per_pulse": _F("pos", 3.0),
        "dephasing_offset": _F("nonneg", 0.02),
        "dephasing_slope_per_ueV": _F("nonneg", 2e-4),
        "scan_purcell": _F("pos", 3.1),
        "scan_noise_fraction": _F("nonneg", 0.05),
        "scan_fix_amplitude": _F("bool", True),
        "lifetime_delta_on_ueV": _F("float", 0.0),
        "lifetime_delta_off_ueV": _F("float", 360.0),
        "lifetime_background_amplitude": _F("nonneg", 0.1),
        "lifetime_background_tau_ps": _F("pos", 1000.0),
        "lifetime_total_counts": _F("pos", 2e5),
        "lifetime_dark_counts_per_bin": _F("nonneg", 2.0),
        "lifetime_bin_width_ps": _F("pos", 16.0),
        "q_2d": _F("pos", 6670.0),
        "q_table": _F("q_table", {1.0: 1500.0, 1.5: 3200.0, 2.0: 4900.0, 2.5: 5400.0,
                                  3.0: 5700.0, 3.5: 5850.0, 4.0: 5950.0, 5.0: 6100.0,
                                  6.0: 6250.0, 8.0: 6400.0}),
        "reference_diameter_um": _F("pos", 4.0),
        "reference_purcell": _F("pos", 3.2),
        "gamma_fraction": _F("unit_pos", 1.0),
        "counts_detected_Hz": _F("nonneg", 130e3),
        "oracle_trajectories": _F("int_pos", 10_000),
    },
    "seeds": {
        "base_seed": _F("seed", 0),
        "split_seed": _F("seed", 1),
        "noise_seed": _F("seed", 0),
    },
    "outputs": {
        "write_click_stream": _F("bool", False),
    },
}


def _number(path, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    return float(v)


def _check(path: str, kind: str, v):
    optional = kind.endswith("_opt")
    if optional:
        if v is None:
            return None
        kind = kind[: -len("_opt")]
    if kind == "float":
        return _number(path, v)
    if kind == "pos":
        x = _number(path, v)
        if x <= 0:
            raise ConfigError(path, "must be > 0")
        return x
    if kind == "nonneg":
        x = _number(path, v)
        if x < 0:
            raise ConfigError(path, "must be >= 0")
        return x
    if kind in ("unit", "unit_pos"):
        x = _number(path, v)
        lo_ok = x > 0 if kind == "unit_pos" else x >= 0
        if not (lo_ok and x <= 1):
            raise ConfigError(path, "must lie in [0, 1]" if kind == "unit" else "must lie in (0, 1]")
        return x
    if kind in ("int_pos", "seed"):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(path, f"expected an integer, got {v!r}")
        if kind == "int_pos" and v < 1:
            raise ConfigError(path, "must be >= 1")
        if kind == "seed" and not 0 <= v < 2**64:
            raise ConfigError(path, "seed must be an unsigned 64-bit integer")
        return int(v)
    if kind == "bool":
        if not isinstance(v, bool):
            raise ConfigError(path, f"expected true/false, got {v!r}")
        return v
    if kind == "float_list":
        if not isinstance(v, list):
            raise ConfigError(path, "expected a list of numbers")
        return [_number(f"{path}[{i}]", x) for i, x in enumerate(v)]
    if kind == "grid":
        if isinstance(v, dict):
            extra = set(v) - {"start", "stop", "num"}
            if extra:
                raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key")
            for k in ("start", "stop", "num"):
                if k not in v:
                    raise ConfigError(f"{path}.{k}", "missing")
            num = _check(f"{path}.num", "int_pos", v["num"])
            return np.linspace(_number(f"{path}.start", v["start"]),
                               _number(f"{path}.stop", v["stop"]), num).tolist()
        return _check(path, "float_list", v)
    if kind == "q_table":
        if not isinstance(v, dict) or not v:
            raise ConfigError(path, "expected a non-empty mapping diameter_um -> Q")
        return {_number(f"{path}.<key>", k): _check(f"{path}.{k}", "pos", q) for k, q in v.items()}
    raise AssertionError(kind)


def validate(raw: Any) -> dict:
    """Return a fully populated, type-checked copy of a scenario document."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "scenario must be a mapping")
    if "schema_version" not in raw:
        raise ConfigError("schema_version", "missing")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {raw['schema_version']!r}")
    unknown = set(raw) - set(SCHEMA) - {"schema_version"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    out = {"schema_version": SCHEMA_VERSION}
    for section, fields in SCHEMA.items():
        body = raw.get(section) or {}
        if not isinstance(body, dict):
            raise ConfigError(section, "section must be a mapping")
        extra = set(body) - set(fields)
        if extra:
            raise ConfigError(f"{section}.{sorted(extra)[0]}", "unknown key")
        vals = {}
        for key, f in fields.items():
            path = f"{section}.{key}"
            if key in body:
                vals[key] = _check(path, f.kind, body[key])
            elif f.required:
                raise ConfigError(path, "missing")
            else:
                vals[key] = copy.deepcopy(f.default)
        out[section] = vals
    _cross_checks(out)
    return out


def _cross_checks(cfg: dict) -> None:
    s = cfg["system"]
    lifetime_keys = ("t_on_ps", "t_off_ps", "delta_off_ueV")
    routes = {
        "g_ueV": s["g_ueV"] is not None,
        "purcell_factor": s["purcell_factor"] is not None,
        "lifetimes": any(s[k] is not None for k in lifetime_keys),
    }
    chosen = [k for k, v in routes.items() if v]
    if len(chosen) != 1:
        raise ConfigError("system", "give exactly one of g_ueV, purcell_factor (each with "
                                    "t_leaky_ps) or t_on_ps+t_off_ps+delta_off_ueV")
    if chosen[0] == "lifetimes":
        for k in lifetime_keys:
            if s[k] is None:
                raise ConfigError(f"system.{k}", "missing")
        if s["t_leaky_ps"] is not None:
            raise ConfigError("system.t_leaky_ps", "the leaky rate follows from the lifetimes")
    elif s["t_leaky_ps"] is None:
        raise ConfigError("system.t_leaky_ps", f"required with {chosen[0]}")
    on, off = s["blinking_on_to_off_per_ps"], s["blinking_off_to_on_per_ps"]
    if (on is None) != (off is None):
        raise ConfigError("system.blinking_off_to_on_per_ps", "give both blinking rates or neither")
    rep = 1e6 / s["rep_rate_MHz"]
    w = cfg["analysis"]["window_ps"]
    if w is not None and w > rep:
        raise ConfigError("analysis.window_ps", f"window exceeds the repetition period {rep:.6g} ps")
    if s["background_photons_per_pulse"] is not None and cfg["analysis"]["g2_target"] is not None:
        raise ConfigError("system.background_photons_per_pulse",
                          "conflicts with analysis.g2_target (which calibrates it)")


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read scenario: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from exc
    return raw


@dataclass
class Scenario:
    """Validated scenario document plus the objects built from it."""

    doc: dict
    digest: str

    @classmethod
    def from_dict(cls, raw: dict, seed_override: Optional[int] = None) -> "Scenario":
        doc = validate(raw)
        if seed_override is not None:
            doc["seeds"]["base_seed"] = _check("--seed", "seed", seed_override)
        text = json.dumps(doc, sort_keys=True)
        return cls(doc, hashlib.sha256(text.encode()).hexdigest())

    @classmethod
    def load(cls, path=None, seed_override: Optional[int] = None) -> "Scenario":
        return cls.from_dict(load_document(path or DEFAULT_SCENARIO), seed_override)

    # ---- derived objects ---------------------------------------------------
    @property
    def rep_period(self) -> float:
        return 1e6 / self.doc["system"]["rep_rate_MHz"]

    @property
    def seeds(self) -> dict:
        return dict(self.doc["seeds"])

    def pulse(self) -> PulseShape:
        p = self.doc["pulse"]
        return PulseShape(area=p["area_pi"] * math.pi, fwhm=p["fwhm_ps"], center=p["center_ps"],
                          truncation=p["truncation_sigma"])

    def system_model(self) -> SystemModel:
        s = self.doc["system"]
        common = dict(
            gamma_dephasing=s["gamma_dephasing_per_ps"],
            delta_qd_cavity=s["delta_qd_cavity_ueV"],
            delta_laser_qd=s["delta_laser_qd_ueV"],
            pulse=self.pulse(),
            eid_coefficient=s["eid_coefficient"],
        )
        kappa = s["kappa_ueV"]
        try:
            if s["g_ueV"] is not None:
                return SystemModel(g=s["g_ueV"], kappa=kappa, gamma_leaky=1.0 / s["t_leaky_ps"], **common)
            if s["purcell_factor"] is not None:
                return SystemModel.from_purcell(s["purcell_factor"], kappa, 1.0 / s["t_leaky_ps"], **common)
            return SystemModel.from_lifetimes(s["t_on_ps"], s["t_off_ps"], s["delta_off_ueV"], kappa, **common)
        except ValueError as exc:
            raise ConfigError("system", str(exc)) from exc

    def lifetime_calibration(self) -> Optional[tuple]:
        s = self.doc["system"]
        if s["t_on_ps"] is None:
            return None
        return calibrate_from_lifetimes(s["t_on_ps"], s["t_off_ps"], s["delta_off_ueV"], s["kappa_ueV"])

    def detector(self) -> DetectorModel:
        d = self.doc["detector"]
        return DetectorModel(jitter_fwhm=d["jitter_fwhm_ps"], efficiency=d["efficiency"],
                             dead_time=d["dead_time_ps"], dark_rate=d["dark_rate_per_ps"])

    def experiment(self, calibrate: bool = True) -> ExperimentScenario:
        """The pulse-train scenario; the background is calibrated to
        analysis.g2_target when that is set."""
        s = self.doc["system"]
        blinking = None
        if s["blinking_on_to_off_per_ps"] is not None:
            blinking = Blinking(s["blinking_on_to_off_per_ps"], s["blinking_off_to_on_per_ps"])
        try:
            sc = ExperimentScenario(
                model=self.system_model(),
                n_pulses=self.doc["sweep"]["n_pulses"],
                rep_period=self.rep_period,
                detector=self.detector(),
                blinking=blinking,
                background=Background(s["background_photons_per_pulse"] or 0.0, s["background_tau_ps"]),
                base_seed=self.doc["seeds"]["base_seed"],
                n_fock=s["n_fock"],
                max_step=self.doc["detector"]["trajectory_step_ps"],
            )
        except ValueError as exc:
            raise ConfigError("system", str(exc)) from exc
        target = self.doc["analysis"]["g2_target"]
        if calibrate and target is not None:
            from .emission.clicks import calibrate_background

            try:
                mu = calibrate_background(sc, target)
            except ValueError as exc:
                raise ConfigError("analysis.g2_target", str(exc)) from exc
            sc = sc.with_(background=Background(mu, s["background_tau_ps"]))
        return sc
