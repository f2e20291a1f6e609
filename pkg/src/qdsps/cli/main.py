"""Command-line runner: `qdsps <subcommand> --scenario S --out DIR`.

Outputs are written to a staging directory next to DIR and moved in only
when the command finishes, so a failed run leaves nothing behind.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import platform
import shutil
import sys
import tempfile
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .. import formulas, validation
from ..config import ConfigError, Scenario
from ..core.evolution import IntegrationError
from ..core.rng import stream_rng
from ..core.trajectories import TrajectoryError
from ..emission import (
    detuning_series,
    fit_rabi_curve,
    generate_click_stream,
    lifetime_trace,
    linear_dephasing_map,
    rabi_curve,
)
from ..fitting import LorentzianPurcellRegressor, fit_lifetimes
from ..stats import ClickStream, G2Estimator, split_hbt

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4
NUMERIC_ERRORS = (IntegrationError, TrajectoryError, np.linalg.LinAlgError, FloatingPointError)
MANIFEST = "manifest.json"
MIN_FIT_POINTS = 5


_csv = validation.write_csv
_json = validation.write_json


# ---- subcommands -----------------------------------------------------------
def cmd_design_sweep(sc: Scenario, out: Path, args) -> int:
    a = sc.doc["analysis"]
    q_table = a["q_table"]
    ref_d = a["reference_diameter_um"]
    if ref_d not in q_table:
        raise ConfigError("analysis.reference_diameter_um", "no Q value for the reference diameter")
    ref_v = formulas.mode_volume_for_purcell(q_table[ref_d], a["reference_purcell"])
    try:
        rows = formulas.design_sweep(sc.doc["sweep"]["diameters_um"], q_table, ref_d, ref_v,
                                     a["q_2d"], a["gamma_fraction"])
    except KeyError as exc:
        raise ConfigError("sweep.diameters_um", exc.args[0]) from exc
    formulas.write_design_csv(rows, out / "design_sweep.csv")
    for r in rows:
        print(f"d={r['diameter_um']:4.1f} um  Q={r['Q']:7.0f}  F_P,max={r['F_P_max']:5.2f}  "
              f"eta_ext={r['eta_ext']:.3f}")
    return EXIT_OK


def cmd_detuning_scan(sc: Scenario, out: Path, args) -> int:
    a = sc.doc["analysis"]
    deltas = np.asarray(sc.doc["sweep"]["scan_deltas_ueV"])
    gamma_c = sc.doc["system"]["kappa_ueV"]
    clean = formulas.intensity_vs_detuning(a["scan_purcell"], gamma_c, deltas)
    sigma = a["scan_noise_fraction"] * clean
    y = clean + sigma * stream_rng(sc.seeds["noise_seed"], 21).standard_normal(deltas.size)
    fixed = {"A": 1.0} if a["scan_fix_amplitude"] else None
    use_sigma = sigma if np.all(sigma > 0) else None
    est = LorentzianPurcellRegressor(gamma_c=gamma_c, fixed=fixed).fit(deltas, y, sigma=use_sigma)
    _csv(out / "detuning_scan.csv", ["delta_ueV", "intensity", "sigma", "noiseless", "fit"],
         zip(deltas, y, sigma, clean, est.predict(deltas)))
    _json(out / "detuning_fit.json", est.result_.to_dict())
    print(f"F_P = {est.params_['F']:.3f} +- {est.std_errors_['F']:.3f} (true {a['scan_purcell']})")
    return EXIT_OK


def cmd_lifetime(sc: Scenario, out: Path, args) -> int:
    a = sc.doc["analysis"]
    exp = sc.experiment(calibrate=False)
    common = dict(background_tau=a["lifetime_background_tau_ps"], total_counts=a["lifetime_total_counts"],
                  dark_counts_per_bin=a["lifetime_dark_counts_per_bin"],
                  bin_width=a["lifetime_bin_width_ps"], seed=sc.seeds["noise_seed"])
    fits = {}
    for name, delta, bg, mode in (("on", a["lifetime_delta_on_ueV"], a["lifetime_background_amplitude"], "bi"),
                                  ("off", a["lifetime_delta_off_ueV"], 0.0, "auto")):
        trace = lifetime_trace(exp, delta, background_amplitude=bg, **common)
        fit = fit_lifetimes(trace, mode=mode)
        fits[name] = fit
        _csv(out / f"lifetime_{name}.csv", ["t_ps", "counts", "expected"],
             ((r["t_ps"], r["counts"], r["expected"]) for r in trace.rows()))
        print(f"{name:>3}: delta={delta:g} ueV  {fit.model} fit  T={fit.lifetime:.1f} +- "
              f"{fit.lifetime_error:.1f} ps  reliable={fit.reliable}")
    f = formulas.purcell_from_lifetimes(fits["on"].lifetime, fits["off"].lifetime,
                                        fits["on"].lifetime_error, fits["off"].lifetime_error)
    _json(out / "lifetime_fits.json", {"on": fits["on"].to_dict(), "off": fits["off"].to_dict(),
                                       "purcell": f.value, "purcell_error": f.error})
    print(f"F_P = {f.value:.2f} +- {f.error:.2f}")
    return EXIT_OK


def cmd_rabi(sc: Scenario, out: Path, args) -> int:
    areas = np.asarray(sc.doc["sweep"]["areas_pi"]) * math.pi
    exp = sc.experiment(calibrate=False)
    curve = rabi_curve(exp, areas, threads=args.threads)
    rows = curve.rows()
    _csv(out / "rabi_curve.csv", ["area_rad", "sqrt_power", "emission"],
         ((r["area_rad"], r["sqrt_power"], r["emission"]) for r in rows))
    fit = fit_rabi_curve(curve) if areas.size >= MIN_FIT_POINTS else None
    _json(out / "rabi_fit.json", {"delta_ueV": curve.delta, "fit": fit})
    print(f"delta={curve.delta:g} ueV: {areas.size} areas, peak emission {curve.peak:.4f}")

    deltas = sc.doc["sweep"]["rabi_deltas_ueV"]
    if deltas and areas.size >= MIN_FIT_POINTS:
        a = sc.doc["analysis"]
        dmap = linear_dephasing_map(a["dephasing_offset"], a["dephasing_slope_per_ueV"])
        curves = detuning_series(exp, deltas, areas, dmap, threads=args.threads)
        _csv(out / "detuning_series.csv",
             ["delta_ueV", "area_rad", "effective_area_rad", "sqrt_power", "emission"],
             ((r["delta_ueV"], r["area_rad"], r["effective_area_rad"], r["sqrt_power"], r["emission"])
              for c in curves for r in c.rows()))
        fits = [fit_rabi_curve(c) for c in curves]
        _json(out / "detuning_series_fits.json", {"fits": fits})
        for f in fits:
            print(f"  delta={f['delta_ueV']:6.1f}  peak={f['peak']:.3f}  pi-power={f['pi_power']:.3f}  "
                  f"damping/pi={f['damping_per_pi']:.4f}")
    return EXIT_OK


def cmd_hbt(sc: Scenario, out: Path, args) -> int:
    a = sc.doc["analysis"]
    if args.clicks:
        stream = ClickStream.from_csv(args.clicks)
        if stream.rep_period is None:
            stream.meta["rep_period"] = sc.rep_period
    else:
        exp = sc.experiment()
        stream = generate_click_stream(exp, n_workers=args.threads)
        print(f"background photons per pulse: {exp.background.mean_photons:.5f}")
    if not stream.is_two_channel:
        stream = split_hbt(stream, sc.seeds["split_seed"])
    if sc.doc["outputs"]["write_click_stream"] and not args.clicks:
        stream.to_csv(out / "click_stream.csv")
    est = G2Estimator(n_side_peaks=a["n_side_peaks"], bin_width=a["bin_width_ps"], window=a["window_ps"],
                      n_workers=args.threads).fit(stream)
    est.histogram_.to_csv(out / "g2_histogram.csv")
    est.write_report(out / "g2_report.json")
    print(f"{len(stream)} events, g2(0) = {est.g2_:.4f} +- {est.g2_error_:.4f}")
    return EXIT_OK


def cmd_check(sc: Scenario, out: Path, args) -> int:
    results = validation.run_checks(sc, out, threads=args.threads)
    data_files = sorted(p.name for p in out.iterdir())
    with tempfile.TemporaryDirectory() as again:
        validation.run_checks(sc, Path(again), threads=args.threads)
        same, diffs = validation.compare_outputs(out, again, data_files)
    results.append(validation.CheckResult(
        9, "reproducibility", same,
        f"{len(data_files)} data files byte-identical" if same else f"differs: {', '.join(diffs)}",
        "byte-identical rerun"))
    _json(out / "acceptance.json", {"results": [r.to_dict() for r in results]})
    print(f"{'#':>2}  {'result':6}  {'check':42}  measured")
    for r in results:
        print(f"{r.cid:>2}  {'PASS' if r.passed else 'FAIL':6}  {r.name:42}  {r.measured}")
        for flag in r.flags:
            print(f"{'':>12}note: {flag}")
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} checks passed")
    return EXIT_OK if n_pass == len(results) else EXIT_ACCEPTANCE


COMMANDS = {
    "design-sweep": (cmd_design_sweep, "pillar diameter sweep of Q, F_P,max and eta_ext"),
    "detuning-scan": (cmd_detuning_scan, "QD intensity against detuning with a Purcell Lorentzian fit"),
    "lifetime": (cmd_lifetime, "on/off-resonance decay traces and exponential fits"),
    "rabi": (cmd_rabi, "emission against pulse area, with the detuning series"),
    "hbt": (cmd_hbt, "click stream, coincidence histogram and g2(0) report"),
    "paper-check": (cmd_check, "run the acceptance suite and print a pass/fail table"),
}


# ---- plumbing --------------------------------------------------------------
def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "scikit-learn", "PyYAML"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def write_manifest(out: Path, command: str, sc: Scenario, scenario_path) -> None:
    files = sorted(p for p in out.iterdir() if p.name != MANIFEST)
    manifest = {
        "command": command,
        "scenario": str(scenario_path) if scenario_path else "<default>",
        "config_sha256": sc.digest,
        "seeds": sc.seeds,
        "versions": _versions(),
        "files": {p.name: _sha256(p) for p in files},
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _json(out / MANIFEST, manifest)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdsps", description="Quantum-dot micropillar single-photon source toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", type=Path, default=None, help="scenario YAML (default: shipped)")
        p.add_argument("--out", type=Path, default=Path("qdsps-out") / name, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override seeds.base_seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        if name == "hbt":
            p.add_argument("--clicks", type=Path, default=None, help="analyse an existing click-stream CSV")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, _ = COMMANDS[args.command]
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sc = Scenario.load(args.scenario, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out.resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    try:
        status = fn(sc, stage, args)
        write_manifest(stage, args.command, sc, args.scenario)
    except ConfigError as exc:
        shutil.rmtree(stage, ignore_errors=True)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        shutil.rmtree(stage, ignore_errors=True)
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    out.mkdir(exist_ok=True)
    for p in sorted(stage.iterdir()):
        shutil.move(str(p), str(out / p.name))
    stage.rmdir()
    print(f"wrote {out}")
    return status


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
