"""Reproduction checks of the published numbers.

Each check returns a `CheckResult` and may write plot-ready data files into
an output directory. The `paper-check` subcommand and the acceptance tests share
these functions.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import formulas
from .config import Scenario
from .core.evolution import evolve_master_equation
from .core.model import HilbertConfig, SystemModel, build_model_operators
from .core.rng import stream_rng
from .core.trajectories import JumpSampler
from .emission import (
    Background,
    detuning_series,
    fit_rabi_curve,
    generate_click_stream,
    lifetime_trace,
    linear_dephasing_map,
    lorentzian_transmission,
    rabi_curve,
)
from .emission.scenario import ExperimentScenario
from .fitting import LorentzianPurcellRegressor, fit_lifetimes
from .stats import G2Estimator, brute_force_pairs, correlate, split_hbt

QUOTED_EXTRACTION = 0.65
N_SCAN_SEEDS = 200


@dataclass
class CheckResult:
    cid: int
    name: str
    passed: bool
    measured: str
    expected: str
    details: dict = field(default_factory=dict)
    runtime_s: float = 0.0
    flags: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        flag = f"  [{'; '.join(self.flags)}]" if self.flags else ""
        return f"[{status}] {self.cid}. {self.name}: {self.measured} (expected {self.expected}){flag}"

    def to_dict(self) -> dict:
        return {"id": self.cid, "name": self.name, "passed": self.passed, "measured": self.measured,
                "expected": self.expected, "details": self.details, "flags": self.flags}


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


# ---------------------------------------------------------------------------
def check_efficiency_chain(sc: Scenario, out: Optional[Path] = None) -> CheckResult:
    counts = sc.doc["analysis"]["counts_detected_Hz"]
    eta_setup = sc.doc["detector"]["setup_efficiency"]
    rep_rate = sc.doc["system"]["rep_rate_MHz"] * 1e6
    sps = formulas.single_photon_efficiency(0.430, 0.072)
    source = formulas.count_rate_to_efficiency(counts, rep_rate, eta_setup, 2)
    lin = formulas.count_rate_to_efficiency(counts, rep_rate, eta_setup, 1)
    ok = round(sps, 3) == 0.414 and 0.41 <= source <= 0.47
    return CheckResult(
        1, "efficiency chain", ok,
        f"eta_SPS={sps:.4f}, eta_source={source:.4f}, eta_lin={lin:.4f}",
        "eta_SPS=0.414, eta_source in [0.41, 0.47]",
        {"eta_sps": sps, "eta_source": source, "eta_lin": lin},
    )


def check_extraction(sc: Scenario, out: Optional[Path] = None) -> CheckResult:
    a = sc.doc["analysis"]
    design = formulas.PillarDesign(4.0, 5950.0, q_2d=a["q_2d"], gamma_fraction=a["gamma_fraction"])
    eta = formulas.extraction_efficiency(design, 3.2)
    ok = abs(eta - 0.680) <= 0.001
    gap = eta - QUOTED_EXTRACTION
    return CheckResult(
        2, "extraction efficiency formula", ok, f"eta_ext={eta:.4f}", "0.680 +- 0.001",
        {"eta_ext": eta, "quoted": QUOTED_EXTRACTION, "gap": gap},
        flags=[f"quoted theoretical maximum ~{QUOTED_EXTRACTION:.2f}; formula gives {eta:.3f} "
               f"(gap {gap:+.3f}, unreconciled)"],
    )


def check_purcell(sc: Scenario, out: Optional[Path] = None) -> CheckResult:
    a = sc.doc["analysis"]
    f_life = formulas.purcell_from_lifetimes(221.0, 890.0).value
    deltas = np.asarray(sc.doc["sweep"]["scan_deltas_ueV"])
    f_true = a["scan_purcell"]
    gamma_c = sc.doc["system"]["kappa_ueV"]
    y = formulas.intensity_vs_detuning(f_true, gamma_c, deltas)
    clean = LorentzianPurcellRegressor(gamma_c=gamma_c).fit(deltas, y)
    f_clean = clean.params_["F"]

    fixed = {"A": 1.0} if a["scan_fix_amplitude"] else None
    rng = stream_rng(sc.seeds["noise_seed"], 21)
    sigma = a["scan_noise_fraction"] * y
    noisy_y = y + sigma * rng.standard_normal(y.size)
    noisy = LorentzianPurcellRegressor(gamma_c=gamma_c, fixed=fixed).fit(deltas, noisy_y, sigma=sigma)
    f_noisy, e_noisy = noisy.params_["F"], noisy.std_errors_["F"]

    ok = abs(f_life - 3.03) <= 0.01 and abs(f_clean - f_true) <= 1e-6 and abs(f_noisy - f_true) <= 0.15

    # informational: how often a single noisy realisation lands inside the band
    hits = 0
    for s in range(N_SCAN_SEEDS):
        r = stream_rng(s, 21)
        ys = y + sigma * r.standard_normal(y.size)
        est = LorentzianPurcellRegressor(gamma_c=gamma_c, fixed=fixed).fit(deltas, ys, sigma=sigma)
        hits += abs(est.params_["F"] - f_true) <= 0.15
    if out is not None:
        write_csv(out / "c3_detuning_scan.csv", ["delta_ueV", "intensity", "sigma", "model"],
                   zip(deltas, noisy_y, sigma, noisy.predict(deltas)))
        write_json(out / "c3_lorentzian_fit.json", noisy.result_.to_dict())
    return CheckResult(
        3, "Purcell cross-consistency", ok,
        f"F(lifetimes)={f_life:.4f}, F(noiseless)={f_clean:.8f}, F(5% noise)={f_noisy:.3f}+-{e_noisy:.3f}",
        "3.03+-0.01; 3.1 within 1e-6; 3.1+-0.15",
        {"f_lifetimes": f_life, "f_noiseless": f_clean, "f_noisy": f_noisy, "f_noisy_error": e_noisy,
         "n_points": int(deltas.size), "amplitude_fixed": bool(fixed),
         "seed_pass_fraction": hits / N_SCAN_SEEDS},
        flags=[f"{hits}/{N_SCAN_SEEDS} noise seeds within 0.15"],
    )


def check_pulse_area(sc: Scenario, out: Optional[Path] = None) -> CheckResult:
    model = SystemModel(g=0.0, kappa=sc.doc["system"]["kappa_ueV"], gamma_leaky=0.0, pulse=sc.pulse())
    lossless = ExperimentScenario(model, n_pulses=1, rep_period=sc.rep_period)
    areas = np.linspace(0.0, 3.0 * math.pi, 50)
    curve = rabi_curve(lossless, areas, observable="excited")
    dev = float(np.max(np.abs(curve.emission - np.sin(areas / 2.0) ** 2)))
    marks = rabi_curve(lossless, [math.pi, 2.0 * math.pi], observable="excited").emission
    ok = marks[0] >= 0.999 and marks[1] <= 0.001 and dev < 1e-4
    if out is not None:
        write_csv(out / "c4_pulse_area.csv", ["area_rad", "excited", "sin2_half_area"],
                   zip(areas, curve.emission, np.sin(areas / 2.0) ** 2))
    return CheckResult(
        4, "pulse-area theorem", ok,
        f"P(pi)={marks[0]:.8f}, P(2pi)={marks[1]:.2e}, max dev={dev:.2e}",
        "P(pi)>=0.999, P(2pi)<=0.001, dev<1e-4",
        {"p_pi": float(marks[0]), "p_2pi": float(marks[1]), "max_deviation": dev},
    )


def check_oracle(sc: Scenario, out: Optional[Path] = None, threads: int = 1) -> CheckResult:
    base = sc.system_model()
    n = sc.doc["analysis"]["oracle_trajectories"]
    cfg = HilbertConfig(sc.doc["system"]["n_fock"])
    times = np.linspace(150.0, 1500.0, 10)
    worst = 0.0
    rows = []
    details = {}
    for label, delta in (("resonant", 0.0), ("detuned_360", 360.0)):
        ops = build_model_operators(cfg, base.with_(delta_qd_cavity=delta))
        me = evolve_master_equation(cfg.basis(False, 0), ops, 0.0, times[-1], t_eval=times)
        pe = me.expect(cfg.excited_projector())
        sampler = JumpSampler(ops, 0.0, times[-1], max_step=1.0, record_times=times)
        ens = sampler.run(cfg.basis(False, 0), n, base_seed=sc.seeds["base_seed"], record=True,
                          n_workers=threads)
        z = (ens.excited_mean - pe) / ens.excited_stderr
        worst = max(worst, float(np.max(np.abs(z))))
        details[label] = {"max_abs_z": float(np.max(np.abs(z)))}
        rows += [(label, t, a, b, s) for t, a, b, s in zip(times, pe, ens.excited_mean, ens.excited_stderr)]
    if out is not None:
        write_csv(out / "c5_oracle.csv", ["set", "t_ps", "master_equation", "trajectories", "stderr"], rows)
    return CheckResult(5, "trajectory / master-equation equivalence", worst <= 3.0,
                       f"max |z|={worst:.2f} over 20 points, {n} trajectories each", "|z|<=3", details)


def check_lifetimes(sc: Scenario, out: Optional[Path] = None) -> CheckResult:
    a = sc.doc["analysis"]
    exp = sc.experiment(calibrate=False)
    common = dict(background_tau=a["lifetime_background_tau_ps"], total_counts=a["lifetime_total_counts"],
                  dark_counts_per_bin=a["lifetime_dark_counts_per_bin"], bin_width=a["lifetime_bin_width_ps"],
                  seed=sc.seeds["noise_seed"])
    on = lifetime_trace(exp, a["lifetime_delta_on_ueV"],
                        background_amplitude=a["lifetime_background_amplitude"], **common)
    off = lifetime_trace(exp, a["lifetime_delta_off_ueV"], background_amplitude=0.0, **common)
    fit_on = fit_lifetimes(on, mode="bi")
    fit_off = fit_lifetimes(off, mode="auto")
    t_on, t_off = fit_on.lifetime, fit_off.lifetime
    purcell = formulas.purcell_from_lifetimes(t_on, t_off, fit_on.lifetime_error, fit_off.lifetime_error)
    ok = (abs(t_on / 221.0 - 1) <= 0.10 and fit_off.model == "mono" and abs(t_off / 890.0 - 1) <= 0.10
          and fit_on.reliable and fit_off.reliable)
    if out is not None:
        for name, tr in (("on", on), ("off", off)):
            write_csv(out / f"c6_lifetime_{name}.csv", ["t_ps", "counts", "expected"],
                       ((r["t_ps"], r["counts"], r["expected"]) for r in tr.rows()))
        write_json(out / "c6_lifetime_fits.json", {"on": fit_on.to_dict(), "off": fit_off.to_dict(),
                                                    "purcell": purcell.value,
                                                    "purcell_error": purcell.error})
    return CheckResult(
        6, "lifetime pipeline", ok,
        f"T_on={t_on:.1f}+-{fit_on.lifetime_error:.1f} ps (bi), T_off={t_off:.1f}+-{fit_off.lifetime_error:.1f} ps "
        f"({fit_off.model}), F_P={purcell.value:.2f}",
        "T_on 221 ps +-10%, mono T_off 890 ps +-10%",
        {"t_on": t_on, "t_off": t_off, "off_model": fit_off.model, "purcell": purcell.value},
    )


def _g2_run(exp: ExperimentScenario, sc: Scenario, threads: int):
    stream = generate_click_stream(exp, n_workers=threads)
    hbt = split_hbt(stream, sc.seeds["split_seed"])
    a = sc.doc["analysis"]
    est = G2Estimator(n_side_peaks=a["n_side_peaks"], bin_width=a["bin_width_ps"], window=a["window_ps"],
                      n_workers=threads).fit(hbt)
    return hbt, est


def check_g2(sc: Scenario, out: Optional[Path] = None, threads: int = 1) -> CheckResult:
    shipped = sc.experiment()
    perfect = shipped.with_(background=Background(0.0, shipped.background.tau))
    poisson = shipped.with_model(pulse=shipped.model.pulse.with_area(0.0)).with_(
        background=Background(sc.doc["analysis"]["poisson_photons_per_pulse"], shipped.background.tau))
    res = {}
    streams = {}
    for label, exp in (("perfect", perfect), ("poissonian", poisson), ("shipped", shipped)):
        hbt, est = _g2_run(exp, sc, threads)
        res[label] = est
        streams[label] = hbt
        if out is not None:
            est.histogram_.to_csv(out / f"c7_histogram_{label}.csv")
            write_json(out / f"c7_g2_{label}.json", est.report())
    # exact pair bookkeeping on a short stream
    full = streams["shipped"]
    sub = type(full)(full.timestamps[:1000], full.channels[:1000], dict(full.meta))
    max_delay = 3.5 * sc.rep_period
    hist = correlate(sub, max_delay, sc.doc["analysis"]["bin_width_ps"])
    brute = brute_force_pairs(sub, max_delay)

    g_a = res["perfect"].g2_
    g_b = res["poissonian"].g2_
    g_c, e_c = res["shipped"].g2_, res["shipped"].g2_error_
    ok_a = g_a < 0.01
    ok_b = abs(g_b - 1.0) <= 0.05
    ok_c = abs(g_c - 0.072) <= 0.02 and e_c <= 0.015
    ok_pairs = hist.total == brute
    return CheckResult(
        7, "g2 pipeline", ok_a and ok_b and ok_c and ok_pairs,
        f"(a) {g_a:.4f}+-{res['perfect'].g2_error_:.4f}, (b) {g_b:.3f}+-{res['poissonian'].g2_error_:.3f}, "
        f"(c) {g_c:.4f}+-{e_c:.4f}, pairs {hist.total}=={brute} (N={len(sub)})",
        "(a)<0.01, (b)1.00+-0.05, (c)0.072+-0.02 with error<=0.015, exact pairs",
        {"perfect": g_a, "poissonian": g_b, "shipped": g_c, "shipped_error": e_c,
         "shipped_corrected": res["shipped"].g2_corrected_, "pairs": hist.total, "brute_pairs": brute,
         "background_photons_per_pulse": shipped.background.mean_photons,
         "checks": {"a": ok_a, "b": ok_b, "c": ok_c, "pairs": ok_pairs}},
    )


def check_detuning_trends(sc: Scenario, out: Optional[Path] = None, threads: int = 1) -> CheckResult:
    a = sc.doc["analysis"]
    deltas = sorted(sc.doc["sweep"]["rabi_deltas_ueV"], key=abs)
    if len(deltas) < 2:
        return CheckResult(8, "detuning-series trends", False, "fewer than two detunings configured",
                           ">= 2 detunings")
    areas = np.asarray(sc.doc["sweep"]["areas_pi"]) * math.pi
    exp = sc.experiment(calibrate=False)
    dmap = linear_dephasing_map(a["dephasing_offset"], a["dephasing_slope_per_ueV"])
    curves = detuning_series(exp, deltas, areas, dmap, threads=threads)
    fits = [fit_rabi_curve(c) for c in curves]
    peaks = np.array([f["peak"] for f in fits])
    power = np.array([f["pi_power"] for f in fits]) / fits[0]["pi_power"]
    factor = 1.0 / lorentzian_transmission(np.asarray(deltas), exp.model.kappa)
    damping = np.array([f["damping_per_pi"] for f in fits])
    drop = peaks[0] / peaks[-1]
    ok_i = bool(np.all(np.diff(peaks) < 0) and drop > 4.0)
    ok_ii = bool(np.all(np.abs(power / factor - 1.0) <= 0.05) and np.all(np.diff(power) > 0))
    ok_iii = bool(np.all(np.diff(damping) >= -1e-9))
    near2 = int(np.argmin(np.abs(factor - 2.0)))
    if out is not None:
        write_csv(out / "c8_detuning_series.csv",
                   ["delta_ueV", "area_rad", "effective_area_rad", "sqrt_power", "emission"],
                   ((r["delta_ueV"], r["area_rad"], r["effective_area_rad"], r["sqrt_power"], r["emission"])
                    for c in curves for r in c.rows()))
        write_json(out / "c8_fits.json", {"fits": fits, "lorentzian_power_factor": factor.tolist()})
    return CheckResult(
        8, "detuning-series trends", ok_i and ok_ii and ok_iii,
        f"peak drop x{drop:.2f}; pi-power x{power[near2]:.3f} at {deltas[near2]} ueV "
        f"(Lorentzian x{factor[near2]:.3f}); damping/pi {np.round(damping, 4).tolist()}",
        "strictly decreasing peaks with >4x drop; pi-power tracks 1/L within 5%; non-decreasing damping",
        {"peaks": peaks.tolist(), "power_ratio": power.tolist(), "lorentzian_factor": factor.tolist(),
         "damping_per_pi": damping.tolist(), "checks": {"i": ok_i, "ii": ok_ii, "iii": ok_iii}},
    )


CHECKS: list[tuple[int, Callable]] = [
    (1, check_efficiency_chain),
    (2, check_extraction),
    (3, check_purcell),
    (4, check_pulse_area),
    (5, check_oracle),
    (6, check_lifetimes),
    (7, check_g2),
    (8, check_detuning_trends),
]
_THREADED = {5, 7, 8}


def run_checks(sc: Scenario, out: Optional[Path] = None, threads: int = 1,
               only: Optional[set] = None) -> list[CheckResult]:
    results = []
    for cid, fn in CHECKS:
        if only is not None and cid not in only:
            continue
        t0 = time.perf_counter()
        r = fn(sc, out, threads) if cid in _THREADED else fn(sc, out)
        r.runtime_s = time.perf_counter() - t0
        results.append(r)
    return results


def compare_outputs(dir_a: Path, dir_b: Path, names) -> tuple[bool, list]:
    """Byte comparison of the named files in two directories."""
    diffs = []
    for name in names:
        pa, pb = Path(dir_a) / name, Path(dir_b) / name
        if not pb.exists() or pa.read_bytes() != pb.read_bytes():
            diffs.append(name)
    return not diffs, diffs
