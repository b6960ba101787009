"""Command-line orchestration: config parsing, scenario execution, file output.

Configuration is INI-style, one section per concern; frequencies are plain
Hz in the file and converted to angular units at this boundary.  Every run
writes a manifest recording the config digest, seed, and produced files, so
identical (config, seed) reruns are byte-identical and auditable.

Exit codes: 0 ok, 2 config parse error, 3 validation error, 4 numerical
failure inside a scenario.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, LatticeClockError
from .analysis import (analyze_record, estimate_to_json, read_record_csv,
                       synthesize_record, write_record_csv)
from .lineshape import (clock_shift, rescale_shift, suppression_surface,
                        thermal_lineshape, write_surface_csv)
from .modes import thermal_ensemble
from .spinmodel import DriveParams
from .tunneling import (TiltParams, band_structure, interaction_tunneling_regime_check,
                        thermal_effective_tunneling, thermal_tunneling,
                        write_dispersion_csv)
from .units import (CONSTANTS, TrapGeometry, angular_to_hz, hz_to_angular)

SCENARIOS = ("lineshape", "shift", "surface", "fig4", "tunneling", "analyze", "synth")

_DEFAULTS = {
    "trap": {
        "omega_x_hz": "90e3",
        "omega_y_hz": "55e3",
        "omega_z_hz": "0.7e3",
        "eta_z": "0.046",
        "eta_y": "0.0",
        "scattering_length_a0": "-40.0",
    },
    "drive": {
        "omega0b_hz": "",        # empty -> pi pulse for pulse_time
        "pulse_time_s": "0.08",
        "target_excitation": "0.3",
    },
    "ensemble": {
        "n_particles": "2",
        "temp_z_uk": "3.5",
        "coverage": "0.999",
        "n_samples": "2000",
        "pair_fraction": "0.25",
    },
    "lineshape": {"grid_points": "201", "span_mean_rabi": "4.0"},
    "surface": {
        "u_hz": "",              # comma list; empty -> geometry u only
        "omega0b_hz": "",
        "temp_z_uk": "6.5",
        "eta_z": "0.06",
        "target_excitation": "0.3",
    },
    "fig4": {
        "omega_z_fix_hz": "0.7e3",
        "temp_z_fix_uk": "3.5",
        "points": "",            # lines: measured_hz, omega_z_hz, temp_z_uk
    },
    "tunneling": {
        "depth_er": "64.0",
        "n_bands": "8",
        "temp_y_uk": "2.5,4.0",
        "omega_dy_hz": "485.0",
        "mean_site_index": "25",
        "mean_u_hz": "1e3",
    },
    "analysis": {
        "record": "",
        "string_length": "4",
        "protocol": "by-run",
        "startup_cut": "0",
    },
    "synth": {
        "true_shift_hz": "0.05",
        "noise_sigma_hz": "1.0",
        "drift_poly_hz": "0,0,0",
        "length": "2000",
        "n_runs": "4",
        "n_days": "2",
    },
}


def load_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    for section, values in _DEFAULTS.items():
        cp[section] = dict(values)
    with open(path) as fh:
        cp.read_file(fh)
    return cp


def _geometry(cp) -> TrapGeometry:
    trap = cp["trap"]
    return TrapGeometry(
        omegaX=hz_to_angular(trap.getfloat("omega_x_hz")),
        omegaY=hz_to_angular(trap.getfloat("omega_y_hz")),
        omegaZ=hz_to_angular(trap.getfloat("omega_z_hz")),
        etaZ=trap.getfloat("eta_z"),
        etaY=trap.getfloat("eta_y"),
        scattering_length=trap.getfloat("scattering_length_a0") * CONSTANTS.a0,
    )


def _drive(cp) -> DriveParams:
    d = cp["drive"]
    pulse = d.getfloat("pulse_time_s")
    raw = d.get("omega0b_hz").strip()
    om = hz_to_angular(float(raw)) if raw else math.pi / pulse
    return DriveParams(om, 0.0, pulse, d.getfloat("target_excitation"))


def _ensemble(cp, geometry, seed):
    e = cp["ensemble"]
    return thermal_ensemble(
        e.getint("n_particles"), e.getfloat("temp_z_uk") * 1e-6,
        geometry.omegaZ, seed=seed, coverage=e.getfloat("coverage"),
        n_samples=e.getint("n_samples"))


def validate_config(path: str) -> list:
    """Collect invariant violations with module provenance; empty if valid."""
    violations = []
    try:
        cp = load_config(path)
    except (OSError, configparser.Error) as exc:
        raise DomainError(f"config unreadable/unparsable: {exc}") from exc
    try:
        geo = _geometry(cp)
    except LatticeClockError as exc:
        violations.append(f"TrapGeometry: {exc}")
        geo = None
    try:
        _drive(cp)
    except LatticeClockError as exc:
        violations.append(f"DriveParams: {exc}")
    e = cp["ensemble"]
    if e.getint("n_particles") < 1:
        violations.append("ThermalEnsemble: n_particles must be >= 1")
    if e.getfloat("temp_z_uk") <= 0:
        violations.append("ThermalEnsemble: temp_z_uk must be positive")
    if not (0.9 <= e.getfloat("coverage") < 1.0):
        violations.append("ThermalEnsemble: coverage must lie in [0.9, 1)")
    if not (0.0 < e.getfloat("pair_fraction") <= 1.0):
        violations.append("lineshape: pair_fraction must lie in (0, 1]")
    if cp["tunneling"].getfloat("depth_er") <= 0:
        violations.append("BandStructure: depth_er must be positive")
    return violations


class _SurfaceMapper:
    """Deterministic-order pool mapper (chunked, ordered gather)."""

    def __init__(self, workers: int):
        self.workers = workers

    def __call__(self, fn, args):
        args = list(args)
        if self.workers <= 1 or len(args) <= 1:
            return [fn(a) for a in args]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, args))


def _write_manifest(outdir: Path, scenario: str, cfg_path: str, seed: int,
                    outputs: list) -> None:
    digest = hashlib.sha256(Path(cfg_path).read_bytes()).hexdigest()
    manifest = {
        "artifact": "latticeclock",
        "version": __version__,
        "scenario": scenario,
        "config_sha256": digest,
        "seed": seed,
        "outputs": sorted(outputs),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                     sort_keys=True) + "\n")


def _scenario_lineshape(cp, outdir, seed, workers):
    geo = _geometry(cp)
    drive = _drive(cp)
    ens = _ensemble(cp, geo, seed)
    ls = cp["lineshape"]
    # grid in units of the thermally averaged Rabi frequency
    from .lineshape import _EnsembleEvaluator
    ev = _EnsembleEvaluator(ens, drive, geo)
    span = ls.getfloat("span_mean_rabi") * ev.mean_rabi
    grid = np.linspace(-span, span, ls.getint("grid_points"))
    vals = thermal_lineshape(ens, drive, geo, grid)
    path = outdir / "lineshape.csv"
    with open(path, "w", newline="") as fh:
        fh.write("delta_hz,excitation\n")
        for d, v in zip(grid, vals):
            fh.write(f"{angular_to_hz(d)!r},{v!r}\n")
    return [path.name]

def _scenario_shift(cp, outdir, seed, workers):
    geo = _geometry(cp)
    drive = _drive(cp)
    ens = _ensemble(cp, geo, seed)
    res = clock_shift(ens, drive, geo,
                      pair_fraction=cp["ensemble"].getfloat("pair_fraction"))
    path = outdir / "shift.json"
    path.write_text(json.dumps({
        "u_hz": angular_to_hz(geo.u),
        "shift_hz": res.shift_hz,
        "shift_fractional": res.shift_fractional,
        "delta1_hz": angular_to_hz(res.delta_low),
        "delta2_hz": angular_to_hz(res.delta_high),
        "peak_excitation": res.peak_excitation,
        "coverage": res.ensemble_coverage,
    }, indent=2, sort_keys=True) + "\n")
    return [path.name]


def _scenario_surface(cp, outdir, seed, workers):
    geo = _geometry(cp)
    drive = _drive(cp)
    s = cp["surface"]
    u_list = [hz_to_angular(float(x)) for x in s.get("u_hz").split(",") if x.strip()] \
        or [geo.u]
    om_list = [hz_to_angular(float(x)) for x in s.get("omega0b_hz").split(",")
               if x.strip()] or [drive.omega0B]
    rows = suppression_surface(
        u_list, om_list, s.getfloat("temp_z_uk") * 1e-6, s.getfloat("eta_z"),
        s.getfloat("target_excitation"), geo, drive.pulse_time,
        cp["ensemble"].getfloat("pair_fraction"),
        cp["ensemble"].getfloat("coverage"),
        cp["ensemble"].getint("n_particles"),
        map_fn=_SurfaceMapper(workers))
    path = outdir / "surface.csv"
    write_surface_csv(rows, str(path))
    return [path.name]


def _scenario_fig4(cp, outdir, seed, workers):
    geo = _geometry(cp)
    drive = _drive(cp)
    f = cp["fig4"]
    fix = {"omegaZ": hz_to_angular(f.getfloat("omega_z_fix_hz")),
           "tempZ": f.getfloat("temp_z_fix_uk") * 1e-6}
    rows = []
    for line in f.get("points").strip().splitlines():
        measured_hz, omega_z_hz, temp_z_uk = (float(x) for x in line.split(","))
        cond = {"omegaZ": hz_to_angular(omega_z_hz), "tempZ": temp_z_uk * 1e-6}
        out = rescale_shift(hz_to_angular(measured_hz), cond, fix, geo, geo.u,
                            drive.target_excitation, drive.pulse_time,
                            drive.omega0B,
                            coverage=cp["ensemble"].getfloat("coverage"))
        rows.append((measured_hz, omega_z_hz, temp_z_uk, out["ratio"],
                     angular_to_hz(out["rescaled"])))
    path = outdir / "fig4_rescaled.csv"
    with open(path, "w", newline="") as fh:
        fh.write("measured_hz,omega_z_hz,temp_z_uk,ratio,rescaled_hz\n")
        for r in rows:
            fh.write(",".join(repr(float(x)) for x in r) + "\n")
    return [path.name]


def _scenario_tunneling(cp, outdir, seed, workers):
    tn = cp["tunneling"]
    bands = band_structure(tn.getfloat("depth_er"), tn.getint("n_bands"))
    disp = outdir / "dispersion.csv"
    write_dispersion_csv(bands, str(disp))
    geo = _geometry(cp)
    tilt = TiltParams(hz_to_angular(tn.getfloat("omega_dy_hz")),
                      tn.getint("mean_site_index"))
    report = {"depth_er": bands.depth, "bound_bands": bands.bound_band_count}
    for temp_uk in (float(x) for x in tn.get("temp_y_uk").split(",")):
        tj = thermal_tunneling(bands, temp_uk * 1e-6, geo.omegaY)
        te = thermal_effective_tunneling(bands, temp_uk * 1e-6, geo.omegaY, tilt)
        report[f"T{temp_uk}uK"] = {
            "mean_J_Er": tj["mean_J"], "time_ms": tj["time"] * 1e3,
            "mean_J_eff_Er": te["mean_J_eff"], "time_eff_ms": te["time"] * 1e3,
        }
    check = interaction_tunneling_regime_check(
        hz_to_angular(tn.getfloat("mean_u_hz")), geo.omegaY)
    report["interaction_assisted_tunneling"] = check
    path = outdir / "tunneling.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return [disp.name, path.name]


def _scenario_analyze(cp, outdir, seed, workers):
    a = cp["analysis"]
    record_path = a.get("record")
    if not record_path:
        raise DomainError("analysis.record must point to a record CSV")
    record = read_record_csv(record_path)
    est = analyze_record(record, a.getint("string_length"), a.get("protocol"),
                         a.getint("startup_cut"))
    path = outdir / "analysis.json"
    path.write_text(estimate_to_json(est) + "\n")
    return [path.name]


def _scenario_synth(cp, outdir, seed, workers):
    s = cp["synth"]
    drift = [float(x) for x in s.get("drift_poly_hz").split(",") if x.strip()]
    record = synthesize_record(
        s.getfloat("true_shift_hz"), drift, s.getfloat("noise_sigma_hz"),
        s.getint("length"), seed=seed, n_runs=s.getint("n_runs"),
        n_days=s.getint("n_days"))
    path = outdir / "record.csv"
    write_record_csv(record, str(path))
    return [path.name]


_RUNNERS = {
    "lineshape": _scenario_lineshape,
    "shift": _scenario_shift,
    "surface": _scenario_surface,
    "fig4": _scenario_fig4,
    "tunneling": _scenario_tunneling,
    "analyze": _scenario_analyze,
    "synth": _scenario_synth,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latticeclock",
        description="Lattice-clock collisional-shift simulations and statistics")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute a scenario from a config file")
    run_p.add_argument("scenario", choices=SCENARIOS)
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--workers", type=int, default=1)
    run_p.add_argument("--output-dir", default=".")
    val_p = sub.add_parser("validate", help="check a config against module invariants")
    val_p.add_argument("--config", required=True)
    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            violations = validate_config(args.config)
        except DomainError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for v in violations:
            print(f"violation: {v}")
        if not violations:
            print("config ok")
        return 0 if not violations else 3

    try:
        cp = load_config(args.config)
    except (OSError, configparser.Error) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        violations = validate_config(args.config)
        if violations:
            for v in violations:
                print(f"violation: {v}", file=sys.stderr)
            return 3
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        outputs = _RUNNERS[args.scenario](cp, outdir, args.seed, args.workers)
    except LatticeClockError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    _write_manifest(outdir, args.scenario, args.config, args.seed, outputs)
    print(f"wrote {', '.join(outputs)} and manifest.json to {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
