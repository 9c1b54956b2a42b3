"""``phasescope`` command-line entry point.

Each subcommand resolves a configuration from ``--config`` (JSON) plus
flags, validates it against the bundled schema before computing anything,
and embeds the resolved configuration and version in every file it writes.

Exit codes: 0 success, 2 partial success (failed sweep cells), 1 invalid
input or error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import __version__

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for partial sweeps
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def load_schema(name: str) -> dict[str, Any]:
    text = resources.files("phasescope").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(data: dict[str, Any], schema: str) -> None:
    try:
        jsonschema.validate(data, load_schema(schema))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(f"invalid {schema} at {where}: {exc.message}") from None


DEFAULTS: dict[str, Any] = {
    "model": {"num_sites": 6, "num_particles": 6, "u_over_j": 1.0, "rescale_span": 20.0, "boundary": "open",
              "measurement_kind": "population", "sublattice": "even"},
    "trajectory": {"total_time": 2000.0, "gamma": 0.01, "seed": 0, "dt": None, "scheme": "split_step",
                   "log_stride": 10, "drive": "filter", "backend": None, "initial": "ground"},
    "spectrum": {"remove_mean": True, "omega_cap": 40.0, "source": "record"},
    "probe": {"idealized": True, "depth": 5.0, "mode": "shifted_same_period", "coupling_scale": 1.0,
              "plane_wave_cutoff": 15, "num_quasi_momenta": 64},
    "perturbative": {"u_over_j": np.geomspace(0.2, 50.0, 12).tolist(), "kinds": ["coherence", "population"],
                     "grid_points": 4001, "omega_cap": 40.0, "center": False, "components": False},
    "verbosity": 0,
}

# flag dest -> (section, key)
FLAG_MAP = {
    "L": ("model", "num_sites"), "N": ("model", "num_particles"), "u_over_j": ("model", "u_over_j"),
    "boundary": ("model", "boundary"), "kind": ("model", "measurement_kind"), "sublattice": ("model", "sublattice"),
    "span": ("model", "rescale_span"),
    "gamma": ("trajectory", "gamma"), "T": ("trajectory", "total_time"), "seed": ("trajectory", "seed"),
    "dt": ("trajectory", "dt"), "scheme": ("trajectory", "scheme"), "log_stride": ("trajectory", "log_stride"),
    "drive": ("trajectory", "drive"), "backend": ("trajectory", "backend"), "initial": ("trajectory", "initial"),
    "cap": ("spectrum", "omega_cap"), "source": ("spectrum", "source"),
    "depth": ("probe", "depth"), "probe_mode": ("probe", "mode"),
    "grid_points": ("perturbative", "grid_points"),
}


def resolve_config(args: argparse.Namespace, sections: Sequence[str]) -> dict[str, Any]:
    """Defaults, overlaid by ``--config`` and then explicit flags; validated."""
    user: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from None
        validate(user, "config")
    cfg = {s: copy.deepcopy(DEFAULTS[s]) for s in sections}
    for s in sections:
        cfg[s].update(user.get(s, {}))
    for dest, (section, key) in FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None and section in cfg:
            cfg[section][key] = value
    if getattr(args, "no_rescale", False):
        cfg["model"]["rescale_span"] = None
    if getattr(args, "no_mean_removal", False):
        cfg["spectrum"]["remove_mean"] = False
    if getattr(args, "lattice_probe", False):
        cfg["probe"]["idealized"] = False
    if "model" in cfg and cfg["model"].get("u_over_j") in (math.inf, "inf"):
        cfg["model"]["u_over_j"] = "inf"
    if "perturbative" in cfg:
        if getattr(args, "u_list", None):
            cfg["perturbative"]["u_over_j"] = args.u_list
        if getattr(args, "kinds", None):
            cfg["perturbative"]["kinds"] = args.kinds
        if getattr(args, "center", False):
            cfg["perturbative"]["center"] = True
        if getattr(args, "components", False):
            cfg["perturbative"]["components"] = True
    validate(cfg, "config")
    return cfg


def _header(cfg: dict[str, Any], command: str, **extra) -> dict[str, Any]:
    return {"command": command, "config": cfg, "version": __version__, **extra}


def _write(path: str | Path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _emit(obj: Any) -> None:
    print(json.dumps(obj, sort_keys=True, default=str))


# -- model construction ---------------------------------------------------------


def _model_spec(cfg: dict[str, Any]):
    from .model import ModelSpec

    m = dict(cfg["model"])
    m["u_over_j"] = math.inf if m["u_over_j"] == "inf" else float(m["u_over_j"])
    mm = None
    probe = cfg.get("probe")
    if probe is not None and not probe["idealized"]:
        mm = _lattice_matrix(cfg, m["num_sites"])
    return ModelSpec(measurement_matrix=mm, **m)


def _lattice_matrix(cfg: dict[str, Any], num_sites: int):
    from .lattice import LatticeSpec, ProbeSpec, measurement_matrix, solve_bands

    p = cfg["probe"]
    lspec = LatticeSpec(depth=p["depth"], num_sites=num_sites, plane_wave_cutoff=p["plane_wave_cutoff"],
                        num_quasi_momenta=p["num_quasi_momenta"])
    sub = cfg.get("model", {}).get("sublattice", "even")
    return measurement_matrix(solve_bands(lspec), ProbeSpec(p["mode"], p["coupling_scale"], sub))


def _initial_state(cfg, h, m, spectral):
    from .model import ground_state

    init = cfg["trajectory"]["initial"]
    if init == "ground":
        return ground_state(h, spectral)
    if isinstance(init, list):
        return h.basis.fock_state(init).astype(complex)
    vals, vecs = np.linalg.eigh(m.toarray())
    target = vals[-1] if init == "m_max" else vals[0]
    if m.is_diagonal:
        # deterministic pick among degenerate eigenstates: first basis state
        k = int(np.flatnonzero(np.isclose(m.matrix.diagonal().real, target, atol=1e-12))[0])
        v = np.zeros(m.dim, complex)
        v[k] = 1
        return v
    v = vecs[:, -1 if init == "m_max" else 0].astype(complex)
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


# -- commands -------------------------------------------------------------------


def cmd_basis(args) -> int:
    from .fock import build_basis

    cfg = resolve_config(args, ["model"])
    basis = build_basis(cfg["model"]["num_sites"], cfg["model"]["num_particles"])
    print(f"dimension {basis.dim}")
    if args.out:
        data = {**_header(cfg, "basis"), "basis": basis.to_dict()}
        _write(args.out, json.dumps(data, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_model(args) -> int:
    from .model import basis_for, build_hamiltonian, build_measurement, diagonalize

    cfg = resolve_config(args, ["model", "probe"])
    spec = _model_spec(cfg)
    basis = basis_for(spec)
    h = build_hamiltonian(spec, basis)
    m = build_measurement(spec, basis)
    sd = diagonalize(h)
    evals = sd.eigenvalues
    print(f"dimension {basis.dim}")
    print(f"spectral span {float(evals[-1] - evals[0])!r}")
    print(f"rescale factor {h.meta['rescale']!r}")
    print(f"J {h.meta['J']!r} U {h.meta['U']!r}")
    if basis.dim <= args.max_print:
        print("eigenvalues " + " ".join(repr(float(e)) for e in evals))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        head = _header(cfg, "model")
        _write(out / "basis.json", json.dumps({**head, "basis": basis.to_dict()}, sort_keys=True) + "\n")
        _write(out / "hamiltonian.json", json.dumps({**head, "operator": h.to_dict()}, sort_keys=True, default=str) + "\n")
        _write(out / "measurement.json", json.dumps({**head, "operator": m.to_dict()}, sort_keys=True, default=str) + "\n")
        lines = ["# " + json.dumps(head, sort_keys=True), "index,energy"]
        lines += [f"{i},{float(e)!r}" for i, e in enumerate(evals)]
        _write(out / "spectrum.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_lattice(args) -> int:
    from .lattice import LatticeSpec, ProbeSpec, hopping_from_bands, measurement_matrix, solve_bands

    cfg = resolve_config(args, ["model", "probe"])
    p = cfg["probe"]
    lspec = LatticeSpec(depth=p["depth"], num_sites=cfg["model"]["num_sites"],
                        plane_wave_cutoff=p["plane_wave_cutoff"], num_quasi_momenta=p["num_quasi_momenta"])
    bloch = solve_bands(lspec)
    probe = ProbeSpec(p["mode"], p["coupling_scale"], cfg["model"]["sublattice"])
    mm = measurement_matrix(bloch, probe)
    mm.params.update(_header(cfg, "lattice", J_band=hopping_from_bands(bloch)))
    diag = np.diag(mm.entries)
    print(f"diagonal {' '.join(f'{d:.6g}' for d in diag)}")
    if mm.num_sites > 2:
        nn, nnn = mm.entries[1, 2], mm.entries[1, 3] if mm.num_sites > 3 else 0.0
        print(f"nearest {nn:.6g} next-nearest {nnn:.6g}")
    if args.out:
        _write(args.out, mm.to_csv())
    return EXIT_OK


def cmd_perturbative(args) -> int:
    from .perturbative import default_grid, fig1_csv, fig1_scan

    cfg = resolve_config(args, ["model", "perturbative"])
    pc = cfg["perturbative"]
    grid = default_grid(pc["omega_cap"], pc["grid_points"])
    m = cfg["model"]
    scan = fig1_scan(pc["u_over_j"], m["num_sites"], m["num_particles"], pc["kinds"], grid, m["boundary"],
                     m["rescale_span"] if m["rescale_span"] is not None else 20.0, center=pc["center"])
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    head = _header(cfg, "perturbative")
    summary = []
    for kind, entries in scan.items():
        for e in entries:
            ps = e.spectrum
            norm = float(ps.to_spectrum().square_integral())
            summary.append({"kind": kind, "u_over_j": e.u_over_j, "F": e.fit.overlap, "Gamma_max": e.fit.gamma_max,
                            "boundary_flag": e.fit.boundary, "delta_weight": ps.delta_fraction,
                            "delta_weight_at_zero": ps.delta_weight_at_zero, "components": len(ps.omega),
                            "unit_square_integral": norm})
            print(f"{kind} U/J={e.u_over_j:.4g} F={e.fit.overlap:.4f} Gamma_max={e.fit.gamma_max:.4g} "
                  f"boundary={int(e.fit.boundary)} delta_weight={ps.delta_fraction:.4f}")
            if out and pc["components"]:
                text = "# " + json.dumps({**head, "kind": kind, "u_over_j": e.u_over_j}, sort_keys=True) + "\n"
                _write(out / f"components_{kind}_{e.u_over_j:.6g}.csv", text + ps.components_csv())
        if out:
            body = fig1_csv(entries)
            first, rest = body.split("\n", 1)
            fhead = json.loads(first[2:])
            fhead.update(head)
            fhead["unit_square_integral"] = [s["unit_square_integral"] for s in summary if s["kind"] == kind]
            _write(out / f"fig1_{kind}.csv", "# " + json.dumps(fhead, sort_keys=True) + "\n" + rest)
    if out:
        cols = ["kind", "u_over_j", "F", "Gamma_max", "boundary_flag", "delta_weight", "delta_weight_at_zero",
                "components", "unit_square_integral"]
        lines = ["# " + json.dumps(head, sort_keys=True), ",".join(cols)]
        lines += [",".join(repr(s[c]) if isinstance(s[c], float) else str(s[c]) for c in cols) for s in summary]
        _write(out / "audit.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_trajectory(args) -> int:
    from .model import basis_for, build_hamiltonian, build_measurement, coherence_operator, diagonalize, ground_state
    from .trajectory import TrajectoryConfig, run_trajectory

    cfg = resolve_config(args, ["model", "trajectory", "probe"])
    spec = _model_spec(cfg)
    basis = basis_for(spec)
    h = build_hamiltonian(spec, basis)
    m = build_measurement(spec, basis)
    sd = diagonalize(h)
    psi0 = _initial_state(cfg, h, m, sd)
    tc = {k: v for k, v in cfg["trajectory"].items() if k != "initial"}
    config = TrajectoryConfig(**tc)
    refs = {}
    try:
        refs["ground"] = ground_state(h, sd)
    except Exception:
        pass  # degenerate ground level: residence not logged
    record, log = run_trajectory(h, m, psi0, config, observables={"M": m, "M_coh": coherence_operator(basis, spec.boundary)},
                                 references=refs, model_hash=spec.digest())
    record.meta.update(_header(cfg, "trajectory"))
    log.meta.update(_header(cfg, "trajectory"))
    out = args.out or "record.csv"
    record.save(out)
    if args.log:
        _write(args.log, log.to_csv())
    _emit({"record": str(out), "digest": record.digest(), "steps": len(record), "dt": record.dt,
           "mean_M": float(np.mean(record.means)) if record.means is not None else None})
    return EXIT_OK


def cmd_psd(args) -> int:
    from .spectrum import periodogram
    from .trajectory import MeasurementRecord

    cfg = resolve_config(args, ["spectrum"])
    record = MeasurementRecord.load(args.record)
    sc = cfg["spectrum"]
    spec = periodogram(record, remove_mean=sc["remove_mean"], omega_cap=sc["omega_cap"], source=sc["source"])
    spec.meta.update(_header(cfg, "psd", record_config=record.meta.get("config")))
    _write(args.out or "spectrum.csv", spec.to_csv())
    nonzero = int(np.count_nonzero(spec.values))
    _emit({"spectrum": str(args.out or "spectrum.csv"), "bins": len(spec.values), "nonzero_bins": nonzero,
           "mean_removed": spec.mean_removed})
    return EXIT_OK


def cmd_fit(args) -> int:
    from .spectrum import Spectrum, maximize_overlap

    cfg = resolve_config(args, ["spectrum"])
    spec = Spectrum.from_csv(Path(args.spectrum).read_text())
    fit = maximize_overlap(spec, width_max=args.width_max)
    result = {"gamma_max": fit.gamma_max, "overlap": fit.overlap}
    print(json.dumps(result, sort_keys=True))
    if fit.boundary:
        print("note: maximum on the search boundary (flat or delta-like spectrum)", file=sys.stderr)
    if args.out:
        payload = {**fit.to_dict(), **_header(cfg, "fit", spectrum_meta=spec.meta)}
        _write(args.out, json.dumps(payload, sort_keys=True, default=str) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import SweepPlan, run_sweep, write_outputs

    try:
        data = json.loads(Path(args.plan).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read plan {args.plan}: {exc}") from None
    validate(data, "plan")
    workers = args.workers if args.workers is not None else data.pop("workers", None)
    data.pop("workers", None)
    try:
        plan = SweepPlan.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid plan: {exc}") from None
    diagram = run_sweep(plan, args.out, workers=workers)
    paths = write_outputs(diagram, args.out)
    failed = len(diagram.failures)
    _emit({"cells": len(diagram.cells), "failed": failed, "plan_hash": plan.digest(),
           **{k: str(v) for k, v in paths.items()}})
    return EXIT_PARTIAL if failed else EXIT_OK


# -- parser ---------------------------------------------------------------------


def _u_value(text: str) -> float | str:
    if text.lower() in ("inf", "infinity"):
        return "inf"
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phasescope", description="Measurement-record phase diagnostics for the Bose-Hubbard chain.")
    p.add_argument("--version", action="version", version=f"phasescope {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(sp, full=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--L", type=int, help="number of sites")
        sp.add_argument("--N", type=int, help="number of particles")
        if full:
            sp.add_argument("--u-over-j", dest="u_over_j", type=_u_value, help="U/J ('inf' for J = 0)")
            sp.add_argument("--boundary", choices=["open", "periodic"])
            sp.add_argument("--kind", choices=["population", "coherence"], help="measured operator")
            sp.add_argument("--sublattice", choices=["even", "odd"])
            sp.add_argument("--span", type=float, help="rescaled spectral span")
            sp.add_argument("--no-rescale", action="store_true", help="keep J^2 + U^2 = 1 units")

    def probe_flags(sp):
        sp.add_argument("--depth", type=float, help="lattice depth V0 in recoil energies")
        sp.add_argument("--probe-mode", dest="probe_mode", choices=["half_period", "shifted_same_period"])
        sp.add_argument("--lattice-probe", action="store_true", help="use the Wannier-derived measurement matrix")

    s = sub.add_parser("basis", help="Fock basis dimension and dump")
    model_flags(s, full=False)
    s.add_argument("--out", help="write the basis as JSON")
    s.set_defaults(func=cmd_basis)

    s = sub.add_parser("model", help="Hamiltonian, measurement operator and spectrum")
    model_flags(s)
    probe_flags(s)
    s.add_argument("--max-print", type=int, default=50, help="print eigenvalues up to this dimension")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_model)

    s = sub.add_parser("lattice", help="Wannier-derived measurement matrix (site-space CSV)")
    s.add_argument("--config")
    s.add_argument("--L", type=int)
    s.add_argument("--sublattice", choices=["even", "odd"])
    s.add_argument("--depth", type=float)
    s.add_argument("--probe-mode", dest="probe_mode", choices=["half_period", "shifted_same_period"])
    s.add_argument("--out", help="CSV output path")
    s.set_defaults(func=cmd_lattice)

    s = sub.add_parser("perturbative", help="weak-measurement spectra across U/J")
    model_flags(s)
    s.add_argument("--u-list", dest="u_list", type=float, nargs="+", help="U/J values")
    s.add_argument("--kinds", nargs="+", choices=["population", "coherence"])
    s.add_argument("--grid-points", dest="grid_points", type=int)
    s.add_argument("--center", action="store_true", help="subtract the equal-population mean of M")
    s.add_argument("--components", action="store_true", help="write per-component audit files")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_perturbative)

    s = sub.add_parser("trajectory", help="one seeded measurement record")
    model_flags(s)
    probe_flags(s)
    s.add_argument("--gamma", type=float)
    s.add_argument("--T", type=float, help="total time")
    s.add_argument("--dt", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--scheme", choices=["split_step", "euler_maruyama"])
    s.add_argument("--drive", choices=["filter", "literal"])
    s.add_argument("--backend", choices=["cython", "python"])
    s.add_argument("--log-stride", dest="log_stride", type=int)
    s.add_argument("--initial", type=lambda t: t if t in ("ground", "m_max", "m_min") else [int(v) for v in t.split(",")],
                   help="ground, m_max, m_min or comma-separated occupations")
    s.add_argument("--out", help="record path (.csv or .npz)")
    s.add_argument("--log", help="observable log CSV path")
    s.set_defaults(func=cmd_trajectory)

    s = sub.add_parser("psd", help="periodogram of a record")
    s.add_argument("--config")
    s.add_argument("--record", required=True)
    s.add_argument("--no-mean-removal", action="store_true")
    s.add_argument("--cap", type=float, help="frequency cap |omega|")
    s.add_argument("--source", choices=["record", "signal"])
    s.add_argument("--out", help="spectrum CSV path")
    s.set_defaults(func=cmd_psd)

    s = sub.add_parser("fit", help="maximal Lorentzian overlap of a spectrum")
    s.add_argument("--config")
    s.add_argument("--spectrum", required=True)
    s.add_argument("--width-max", dest="width_max", type=float, default=20.0)
    s.add_argument("--out", help="fit JSON path")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("sweep", help="phase-diagram sweep over (U/J, gamma)")
    s.add_argument("--plan", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int, help="worker processes (default: $PHASESCOPE_WORKERS or 1)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"phasescope: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ZeroDivisionError, RuntimeError, OSError, KeyError) as exc:
        print(f"phasescope: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
