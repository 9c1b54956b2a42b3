"""Seeded trajectory sweeps over (U/J, gamma) and the phase-diagram reports.

Every cell is a pure function of the plan and its cell index. Results are
checkpointed as ``cells/<plan hash>_<index>.json`` so that an interrupted
sweep resumes by skipping finished cells, and the aggregated outputs are
byte-identical whether or not a resume happened.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .model import (
    MeasurementKind,
    ModelSpec,
    basis_for,
    build_hamiltonian,
    build_measurement,
    coherence_operator,
    diagonalize,
    ground_state,
)
from .spectrum import maximize_overlap, periodogram
from .trajectory import MeasurementRecord, TrajectoryConfig, ground_state_residence, run_trajectory, time_average_expectation

WORKERS_ENV = "PHASESCOPE_WORKERS"
SIGNIFICANCE = 5.0
MIN_SIDE_POINTS = 4
TRANSIENT_FRACTION = 0.1


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value:
        n = int(value)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return 1


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class SweepPlan:
    """Grid, model template and per-cell trajectory/spectrum settings.

    ``model`` holds ModelSpec fields other than ``u_over_j`` and
    ``measurement_kind``; ``trajectory`` holds TrajectoryConfig fields other
    than ``gamma`` and ``seed``; ``spectrum`` holds the periodogram policy.
    """

    u_over_j: tuple[float, ...] = tuple(np.geomspace(0.2, 50.0, 12).tolist())
    gamma: tuple[float, ...] = tuple(np.geomspace(1e-3, 1.0, 8).tolist())
    kinds: tuple[str, ...] = ("population", "coherence")
    seeds: int = 4
    base_seed: int = 0
    model: dict[str, Any] = field(default_factory=lambda: {"num_sites": 6, "num_particles": 6})
    trajectory: dict[str, Any] = field(default_factory=lambda: {"total_time": 2000.0})
    spectrum: dict[str, Any] = field(default_factory=lambda: {"remove_mean": True, "omega_cap": 40.0, "source": "signal"})
    save_records: bool = False

    def __post_init__(self):
        for name in ("u_over_j", "gamma"):
            grid = tuple(float(v) for v in getattr(self, name))
            if not grid:
                raise ValueError(f"{name} grid is empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} grid must be strictly increasing")
            object.__setattr__(self, name, grid)
        if any(u < 0 for u in self.u_over_j):
            raise ValueError("u_over_j values must be >= 0")
        if any(g <= 0 for g in self.gamma):
            raise ValueError("gamma values must be > 0")
        kinds = tuple(MeasurementKind(k).value for k in self.kinds)
        if not kinds or len(set(kinds)) != len(kinds):
            raise ValueError("kinds must be nonempty and unique")
        object.__setattr__(self, "kinds", kinds)
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if not 0 <= int(self.base_seed) < 2**63:
            raise ValueError("base_seed out of range")
        bad = {"u_over_j", "measurement_kind"} & set(self.model)
        if bad:
            raise ValueError(f"model template may not set {sorted(bad)}")
        bad = {"gamma", "seed"} & set(self.trajectory)
        if bad:
            raise ValueError(f"trajectory template may not set {sorted(bad)}")
        # fail early on unknown fields
        self.model_spec(self.u_over_j[0], self.kinds[0])
        self.trajectory_config(self.gamma[0], 0)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k in ("u_over_j", "gamma", "kinds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SweepPlan":
        data = dict(data)
        for k in ("u_over_j", "gamma", "kinds"):
            if k in data:
                data[k] = tuple(data[k])
        return cls(**data)

    def digest(self) -> str:
        payload = {"plan": self.to_dict(), "version": __version__}
        return hashlib.sha256(_canonical(payload).encode()).hexdigest()[:16]

    def model_spec(self, u_over_j: float, kind: str) -> ModelSpec:
        return ModelSpec(u_over_j=u_over_j, measurement_kind=kind, **self.model)

    def trajectory_config(self, gamma: float, seed: int) -> TrajectoryConfig:
        return TrajectoryConfig(gamma=gamma, seed=seed, **self.trajectory)

    def cells(self) -> list[dict[str, Any]]:
        """Cells in a fixed order: kind, then U/J, then gamma, then seed."""
        out = []
        for ik, kind in enumerate(self.kinds):
            for iu, u in enumerate(self.u_over_j):
                for ig, g in enumerate(self.gamma):
                    for s in range(self.seeds):
                        out.append({
                            "index": len(out), "kind": kind, "u_over_j": u, "gamma": g,
                            "seed_index": s, "seed": derived_seed(self.base_seed, (ik, iu, ig, s)),
                        })
        return out


def derived_seed(base_seed: int, indices: Sequence[int]) -> int:
    """Deterministic 63-bit seed for one grid point, independent of run order."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(i) for i in indices))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _truncated(record: MeasurementRecord, fraction: float) -> MeasurementRecord:
    start = int(math.ceil(fraction * len(record)))
    means = None if record.means is None else record.means[start:]
    return MeasurementRecord(record.gamma, record.dt, record.increments[start:], record.seed, record.scheme,
                             record.operator, record.model_hash, record.meta, means)


def run_cell(plan_dict: dict[str, Any], cell: dict[str, Any], record_dir: str | None = None) -> dict[str, Any]:
    """Ground state, one trajectory, periodogram and Lorentzian fit for one cell."""
    plan = SweepPlan.from_dict(plan_dict)
    result = dict(cell)
    try:
        spec = plan.model_spec(cell["u_over_j"], cell["kind"])
        basis = basis_for(spec)
        h = build_hamiltonian(spec, basis)
        m = build_measurement(spec, basis)
        psi0 = ground_state(h, diagonalize(h))
        coh = coherence_operator(basis, spec.boundary)
        config = plan.trajectory_config(cell["gamma"], cell["seed"])
        record, log = run_trajectory(h, m, psi0, config, observables={"M_coh": coh},
                                     references={"ground": psi0}, model_hash=spec.digest())
        sp = dict(plan.spectrum)
        fit = maximize_overlap(periodogram(record, **sp), width_max=spec.rescale_span or 20.0)
        fit_cut = maximize_overlap(periodogram(_truncated(record, TRANSIENT_FRACTION), **sp),
                                   width_max=spec.rescale_span or 20.0)
        if record_dir is not None:
            record.save(Path(record_dir) / f"record_{cell['index']:06d}.npz")
        result.update({
            "status": "ok",
            "F": fit.overlap,
            "Gamma_max": fit.gamma_max,
            "boundary_flag": fit.boundary,
            "F_cut": fit_cut.overlap,
            "coh_ground": coh.expect(psi0),
            "coh_after": time_average_expectation(log, "M_coh"),
            "residence": ground_state_residence(log, psi0),
            "dt": record.dt,
            "T": record.total_time,
            "record_digest": record.digest(),
        })
    except Exception as exc:  # recorded, never fatal for the sweep
        result.update({"status": "failed", "error": f"{type(exc).__name__}: {exc}",
                       "traceback": traceback.format_exc(limit=3)})
    return result


CSV_COLUMNS = ["index", "kind", "u_over_j", "gamma", "seed_index", "seed", "status", "F", "Gamma_max",
               "boundary_flag", "F_cut", "coh_ground", "coh_after", "residence", "dt", "T"]


@dataclass
class PhaseDiagram:
    plan: SweepPlan
    cells: list[dict[str, Any]]

    def __post_init__(self):
        for c in self.ok_cells():
            if not -1e-12 <= c["F"] <= 1 + 1e-12:
                raise ValueError(f"overlap outside [0, 1] in cell {c['index']}")

    def ok_cells(self) -> list[dict[str, Any]]:
        return [c for c in self.cells if c.get("status") == "ok"]

    @property
    def failures(self) -> list[dict[str, Any]]:
        return [c for c in self.cells if c.get("status") != "ok"]

    def values(self, kind: str, gamma: float, key: str = "F") -> np.ndarray:
        """Array [u index, seed index] of ``key`` on one gamma slice (NaN where failed)."""
        ig = _index_of(self.plan.gamma, gamma)
        out = np.full((len(self.plan.u_over_j), self.plan.seeds), np.nan)
        for c in self.ok_cells():
            if c["kind"] == kind and c["gamma"] == self.plan.gamma[ig]:
                out[_index_of(self.plan.u_over_j, c["u_over_j"]), c["seed_index"]] = c[key]
        return out

    def row(self, kind: str, u_over_j: float, key: str = "F") -> np.ndarray:
        """Array [gamma index, seed index] of ``key`` at fixed U/J."""
        iu = _index_of(self.plan.u_over_j, u_over_j)
        out = np.full((len(self.plan.gamma), self.plan.seeds), np.nan)
        for c in self.ok_cells():
            if c["kind"] == kind and c["u_over_j"] == self.plan.u_over_j[iu]:
                out[_index_of(self.plan.gamma, c["gamma"]), c["seed_index"]] = c[key]
        return out

    def metadata(self) -> dict[str, Any]:
        return {
            "format": "phasescope.diagram/1",
            "plan": self.plan.to_dict(),
            "plan_hash": self.plan.digest(),
            "version": __version__,
            "cells": len(self.cells),
            "failed": len(self.failures),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + _canonical(self.metadata()) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for c in self.cells:
            writer.writerow([_fmt(c.get(k)) for k in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {**self.metadata(), "results": self.cells}
        return json.dumps(payload, sort_keys=True, indent=1, default=_json_default) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PhaseDiagram":
        data = json.loads(text)
        return cls(SweepPlan.from_dict(data["plan"]), data["results"])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"not JSON serialisable: {type(v)}")


def _index_of(grid: Sequence[float], value: float) -> int:
    arr = np.asarray(grid)
    i = int(np.argmin(np.abs(arr - value)))
    if not math.isclose(arr[i], value, rel_tol=1e-9, abs_tol=1e-15):
        raise KeyError(f"{value} is not on the grid")
    return i


def _normalise_result(result: dict[str, Any]) -> dict[str, Any]:
    # round-trip through JSON so fresh and resumed cells are indistinguishable
    result = {k: v for k, v in result.items() if k != "traceback"}
    return json.loads(json.dumps(result, sort_keys=True, default=_json_default))


def run_sweep(plan: SweepPlan, out_dir: str | os.PathLike | None = None, workers: int | None = None,
              cells: Iterable[int] | None = None) -> PhaseDiagram:
    """Run (or resume) every cell of ``plan``; failed cells are recorded, not raised.

    With ``out_dir`` each finished cell is checkpointed under ``out_dir/cells``
    and existing checkpoints for the same plan hash are reused.
    """
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    plan_dict = plan.to_dict()
    token = plan.digest()
    todo = plan.cells()
    if cells is not None:
        wanted = set(cells)
        todo = [c for c in todo if c["index"] in wanted]
    ckpt_dir = record_dir = None
    if out_dir is not None:
        ckpt_dir = Path(out_dir) / "cells"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        if plan.save_records:
            record_dir = Path(out_dir) / "records"
            record_dir.mkdir(parents=True, exist_ok=True)
            record_dir = str(record_dir)

    results: dict[int, dict[str, Any]] = {}
    pending = []
    for c in todo:
        path = ckpt_dir / f"{token}_{c['index']:06d}.json" if ckpt_dir else None
        if path is not None and path.exists():
            try:
                stored = json.loads(path.read_text())
                if stored.get("plan_hash") == token and stored["result"].get("status") == "ok":
                    results[c["index"]] = stored["result"]
                    continue
            except (json.JSONDecodeError, KeyError):
                pass  # corrupt checkpoint: recompute
        pending.append(c)

    def store(res):
        res = _normalise_result(res)
        results[res["index"]] = res
        if ckpt_dir is not None:
            path = ckpt_dir / f"{token}_{res['index']:06d}.json"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"plan_hash": token, "result": res}, sort_keys=True))
            tmp.replace(path)

    if workers == 1 or len(pending) <= 1:
        for c in pending:
            store(run_cell(plan_dict, c, record_dir))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, plan_dict, c, record_dir) for c in pending]
            for fut in futures:
                store(fut.result())
    return PhaseDiagram(plan, [results[c["index"]] for c in todo])


# -- reports -----------------------------------------------------------------


class InsufficientPointsError(ValueError):
    pass


@dataclass
class TransitionReport:
    kind: str
    gamma: float
    boundary_index: int | None  # first U/J index on the high side
    boundary_u: tuple[float, float] | None
    jump: float
    pooled_sigma: float
    significance: float
    significant: bool
    cell_means: list[float]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def transition_report(diagram: PhaseDiagram, kind: str, gamma: float, threshold: float = SIGNIFICANCE,
                      min_side: int = MIN_SIDE_POINTS) -> TransitionReport:
    """Largest consecutive jump of F along U/J in units of the pooled within-phase sigma.

    Candidate boundaries leave at least ``min_side`` U/J points on each side.
    Among them the one with the largest jump in seed-averaged F is chosen.
    The sigma pools the spread of every seed and every cell on a side about
    that side's mean, so any within-phase trend also counts as noise.
    """
    values = diagram.values(kind, gamma)
    return transition_from_values(values, diagram.plan.u_over_j, kind, gamma, threshold, min_side)


def transition_from_values(values: np.ndarray, u_grid: Sequence[float], kind: str = "", gamma: float = float("nan"),
                           threshold: float = SIGNIFICANCE, min_side: int = MIN_SIDE_POINTS) -> TransitionReport:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    keep = ~np.all(np.isnan(values), axis=1)
    values = values[keep]
    u_grid = np.asarray(u_grid, dtype=float)[keep]
    n = len(values)
    if n < 2 * min_side:
        raise InsufficientPointsError(f"need >= {min_side} U/J points per side, have {n} in total")
    means = np.nanmean(values, axis=1)
    candidates = range(min_side, n - min_side + 1)
    b = max(candidates, key=lambda k: (abs(means[k] - means[k - 1]), -k))
    jump = float(abs(means[b] - means[b - 1]))
    left, right = values[:b], values[b:]
    dev = np.concatenate([(left - np.nanmean(left)).ravel(), (right - np.nanmean(right)).ravel()])
    dev = dev[~np.isnan(dev)]
    dof = max(dev.size - 2, 1)
    sigma = float(np.sqrt(np.sum(dev**2) / dof))
    if jump == 0:
        z = 0.0
    else:
        z = jump / sigma if sigma > 0 else math.inf
    return TransitionReport(kind, float(gamma), int(b), (float(u_grid[b - 1]), float(u_grid[b])), jump, sigma, z,
                            bool(z > threshold), means.tolist())


@dataclass
class CoherenceRow:
    u_over_j: float
    before: float
    after: float
    after_sigma: float
    residence: float


def superfluid_reference(plan: SweepPlan) -> float:
    """Ground-state <M_coh> at U/J = 0 for the plan's model template."""
    spec = plan.model_spec(0.0, "coherence")
    basis = basis_for(spec)
    h = build_hamiltonian(spec, basis)
    return coherence_operator(basis, spec.boundary).expect(ground_state(h))


def coherence_report(diagram: PhaseDiagram, kind: str, gamma: float, reference: float | None = None) -> list[CoherenceRow]:
    """Ground-state and post-measurement <M_coh>, both divided by the U/J = 0 value."""
    reference = superfluid_reference(diagram.plan) if reference is None else reference
    if reference == 0:
        raise ValueError("superfluid reference coherence vanishes")
    before = diagram.values(kind, gamma, "coh_ground")
    after = diagram.values(kind, gamma, "coh_after")
    residence = diagram.values(kind, gamma, "residence")
    rows = []
    for i, u in enumerate(diagram.plan.u_over_j):
        if np.all(np.isnan(after[i])):
            continue
        a = after[i][~np.isnan(after[i])]
        rows.append(CoherenceRow(u, float(np.nanmean(before[i])) / reference, float(a.mean()) / reference,
                                 float(a.std(ddof=1)) / abs(reference) if a.size > 1 else 0.0,
                                 float(np.nanmean(residence[i]))))
    if not rows:
        raise ValueError("no completed cells carry coherence observables on this slice")
    return rows


def render_report(diagram: PhaseDiagram) -> str:
    """Markdown summary: transition per slice, coherence tables, failures."""
    plan = diagram.plan
    lines = [f"# Sweep report", "", f"plan hash `{plan.digest()}`, version {__version__}, "
             f"{len(diagram.cells)} cells, {len(diagram.failures)} failed.", "",
             "## Transition", "",
             f"Jump in seed-averaged F between consecutive U/J points, in units of the pooled "
             f"within-phase standard deviation (all seeds and all cells on each side). "
             f"Significant above {SIGNIFICANCE:g}.", "",
             "| kind | gamma | boundary U/J | jump | sigma | jump/sigma | significant |",
             "|---|---|---|---|---|---|---|"]
    for kind in plan.kinds:
        for g in plan.gamma:
            try:
                r = transition_report(diagram, kind, g)
            except InsufficientPointsError as exc:
                lines.append(f"| {kind} | {g:.4g} | n/a ({exc}) | | | | |")
                continue
            lo, hi = r.boundary_u
            lines.append(f"| {kind} | {g:.4g} | {lo:.4g} -> {hi:.4g} | {r.jump:.4f} | {r.pooled_sigma:.4f} | "
                         f"{r.significance:.2f} | {'yes' if r.significant else 'no'} |")
    lines += ["", "## Coherence before and after measurement", "",
              "Normalised to the U/J = 0 ground-state value.", ""]
    try:
        ref = superfluid_reference(plan)
    except Exception as exc:  # pragma: no cover - reported, not fatal
        lines.append(f"reference unavailable: {exc}")
        ref = None
    if ref is not None:
        for kind in plan.kinds:
            for g in plan.gamma:
                try:
                    rows = coherence_report(diagram, kind, g, ref)
                except ValueError:
                    continue
                lines += [f"### {kind}, gamma = {g:.4g}", "", "| U/J | before | after | after sigma | GS residence |",
                          "|---|---|---|---|---|"]
                lines += [f"| {r.u_over_j:.4g} | {r.before:.4f} | {r.after:.4f} | {r.after_sigma:.4f} | {r.residence:.4f} |"
                          for r in rows]
                lines.append("")
    lines += ["## Failures", ""]
    if diagram.failures:
        lines += [f"- cell {c['index']} ({c['kind']}, U/J={c['u_over_j']:.4g}, gamma={c['gamma']:.4g}, "
                  f"seed {c['seed_index']}): {c.get('error', 'unknown')}" for c in diagram.failures]
    else:
        lines.append("none")
    return "\n".join(lines) + "\n"


def write_outputs(diagram: PhaseDiagram, out_dir: str | os.PathLike) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "diagram.csv", "json": out / "diagram.json", "report": out / "report.md"}
    paths["csv"].write_text(diagram.to_csv())
    paths["json"].write_text(diagram.to_json())
    paths["report"].write_text(render_report(diagram))
    return paths
