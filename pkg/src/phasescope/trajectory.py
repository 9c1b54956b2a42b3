"""Single seeded realisations of the diffusive stochastic Schrödinger equation.

The record increments are

    dI_n = gamma <M>_n dt + sqrt(gamma) dW_n,        dW_n ~ Normal(0, dt)

with <M>_n taken on the normalised state before step n. The state is driven
by the linear equation

    d|psi> = [-i H - (gamma/2) M^2] dt |psi> + M dX_n |psi>

and renormalised after every step. With ``drive="filter"`` (default) the
driving increment is dX_n = dI_n + gamma <M>_n dt, which makes the ensemble
average obey the Lindblad equation with rate gamma and keeps the M-basis
populations martingales when [H, M] = 0. ``drive="literal"`` uses
dX_n = dI_n unchanged.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import __version__, kernels
from .fock import BasisMismatchError, HermitianOperator

CHECK_STEPS = 400
CHECK_TOL = 1e-2
MAX_HALVINGS = 6


class Scheme(str, enum.Enum):
    EULER_MARUYAMA = "euler_maruyama"
    SPLIT_STEP = "split_step"


class StepSizeError(RuntimeError):
    """The state norm collapsed during a step; retry with a smaller dt."""


@dataclass(frozen=True)
class TrajectoryConfig:
    total_time: float = 2000.0
    gamma: float = 0.01
    seed: int = 0
    dt: float | None = None
    scheme: Scheme = Scheme.SPLIT_STEP
    log_stride: int = 10
    drive: str = "filter"
    backend: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if self.dt is not None and self.total_time < self.dt:
            raise ValueError("total_time must be >= dt")
        if self.log_stride < 1:
            raise ValueError("log_stride must be >= 1")
        if self.drive not in ("filter", "literal"):
            raise ValueError("drive must be 'filter' or 'literal'")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_time": self.total_time,
            "gamma": self.gamma,
            "seed": int(self.seed),
            "dt": self.dt,
            "scheme": self.scheme.value,
            "log_stride": self.log_stride,
            "drive": self.drive,
        }


@dataclass
class MeasurementRecord:
    gamma: float
    dt: float
    increments: np.ndarray
    seed: int | None = None
    scheme: str = ""
    operator: str = ""
    model_hash: str = ""
    meta: dict[str, Any] = field(default_factory=dict)
    means: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=float)
        if self.means is not None:
            self.means = np.asarray(self.means, dtype=float)
            if self.means.shape != self.increments.shape:
                raise ValueError("means must align with increments")
        if self.increments.ndim != 1:
            raise ValueError("increments must be one-dimensional")
        if not np.all(np.isfinite(self.increments)):
            raise FloatingPointError("record contains non-finite increments")

    def __len__(self) -> int:
        return self.increments.shape[0]

    @property
    def total_time(self) -> float:
        return len(self) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def header(self) -> dict[str, Any]:
        return {
            "format": "phasescope.record/1",
            "gamma": self.gamma,
            "dt": self.dt,
            "T": self.total_time,
            "n": len(self),
            "seed": self.seed,
            "scheme": self.scheme,
            "operator": self.operator,
            "model_hash": self.model_hash,
            "version": __version__,
            "meta": self.meta,
        }

    def digest(self) -> str:
        h = hashlib.sha256(self.increments.tobytes())
        h.update(json.dumps([self.gamma, self.dt], sort_keys=True).encode())
        return h.hexdigest()[:16]

    def save(self, path) -> None:
        """Write the record as CSV (JSON header line) or, for ``.npz`` paths, compactly."""
        path = str(path)
        header = json.dumps(self.header(), sort_keys=True, default=str)
        if path.endswith(".npz"):
            arrays = {"increments": self.increments}
            if self.means is not None:
                arrays["means"] = self.means
            np.savez(path, header=header, **arrays)
            return
        with open(path, "w", newline="") as fh:
            fh.write("# " + header + "\n")
            if self.means is None:
                fh.write("dI\n")
                fh.writelines(f"{v!r}\n" for v in self.increments.tolist())
            else:
                fh.write("dI,mean_M\n")
                fh.writelines(f"{v!r},{m!r}\n" for v, m in zip(self.increments.tolist(), self.means.tolist()))

    @classmethod
    def load(cls, path) -> "MeasurementRecord":
        path = str(path)
        means = None
        if path.endswith(".npz"):
            with np.load(path) as data:
                header = json.loads(str(data["header"]))
                increments = data["increments"]
                if "means" in data:
                    means = data["means"]
        else:
            with open(path) as fh:
                header = json.loads(fh.readline()[2:])
                columns = fh.readline().strip().split(",")
                rows = np.array([[float(v) for v in line.split(",")] for line in fh if line.strip()])
            rows = rows.reshape(-1, len(columns))
            increments = rows[:, 0]
            if len(columns) > 1:
                means = rows[:, 1]
        return cls(
            header["gamma"], header["dt"], increments, header.get("seed"), header.get("scheme", ""),
            header.get("operator", ""), header.get("model_hash", ""), header.get("meta", {}), means,
        )


@dataclass
class TrajectoryLog:
    times: np.ndarray
    values: dict[str, np.ndarray]
    final_state: np.ndarray
    references: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.meta, sort_keys=True, default=str) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.values)
        writer.writerow(["time", *names])
        for i, t in enumerate(self.times):
            writer.writerow([repr(float(t)), *(repr(float(self.values[n][i])) for n in names)])
        return buf.getvalue()


def standard_normals(seed: int, n: int) -> np.ndarray:
    """Counter-based (Philox) stream of standard normal variates."""
    return np.random.Generator(np.random.Philox(int(seed))).standard_normal(n)


def white_noise_record(gamma: float, dt: float, total_time: float, seed: int) -> MeasurementRecord:
    """Record of pure measurement noise, dI_n = sqrt(gamma) dW_n."""
    n = int(round(total_time / dt))
    inc = np.sqrt(gamma * dt) * standard_normals(seed, n)
    return MeasurementRecord(gamma, dt, inc, seed, "white_noise", "none")


def default_dt(h: HermitianOperator, scheme: Scheme, gamma: float) -> float:
    """Step-size policy before the automatic halving check.

    Euler-Maruyama: spectral width * dt = 0.01. Split-step: the unitary part
    is exact, so dt = 0.01 limited only by the measurement rate.
    """
    if scheme is Scheme.EULER_MARUYAMA:
        evals = np.linalg.eigvalsh(h.toarray())
        width = max(float(evals[-1] - evals[0]), 1e-12)
        return 0.01 / width
    return 0.01 / max(1.0, gamma)


def _prepare_split(h, m, dt, observables, references):
    mvals, mvecs = np.linalg.eigh(m.toarray())
    evals, evecs = np.linalg.eigh(h.toarray())
    in_m = mvecs.conj().T @ evecs
    propagator = np.ascontiguousarray((in_m * np.exp(-1j * evals * dt)) @ in_m.conj().T)
    d = h.dim
    obs = np.zeros((len(observables), d, d), dtype=complex)
    for a, op in enumerate(observables.values()):
        obs[a] = mvecs.conj().T @ op.toarray() @ mvecs
    refs = np.zeros((len(references), d), dtype=complex)
    for a, vec in enumerate(references.values()):
        refs[a] = mvecs.conj().T @ vec
    return propagator, np.ascontiguousarray(mvals), mvecs, obs, refs


def _csr_parts(mat):
    mat = mat.tocsr()
    mat.sort_indices()
    return (
        np.ascontiguousarray(mat.indptr, dtype=np.int32),
        np.ascontiguousarray(mat.indices, dtype=np.int32),
        np.ascontiguousarray(mat.data, dtype=complex),
    )


def integrate(h: HermitianOperator, m: HermitianOperator, psi0: np.ndarray, *, dt: float, gamma: float,
              normals: np.ndarray, scheme: Scheme = Scheme.SPLIT_STEP, drive: str = "filter",
              observables: Mapping[str, HermitianOperator] | None = None,
              references: Mapping[str, np.ndarray] | None = None, log_stride: int = 10,
              backend: str | None = None):
    """Integrate with an explicit array of standard normals (one per step).

    Returns ``(increments, means, logs, final_state)``: ``means[n]`` is <M> on
    the normalised state before step n, and ``logs`` has one column per
    observable followed by one per reference-state overlap.
    """
    observables = dict(observables or {})
    references = {k: np.asarray(v, dtype=complex) for k, v in (references or {}).items()}
    for op in (m, *observables.values()):
        if not op.basis.same_as(h.basis):
            raise BasisMismatchError("H, M and observables must share a basis")
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (h.dim,) or any(v.shape != (h.dim,) for v in references.values()):
        raise BasisMismatchError("state vectors do not match the basis dimension")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalised")
    kern = kernels.get_backend(backend)
    coeff = 1.0 if drive == "filter" else 0.0
    normals = np.ascontiguousarray(normals, dtype=float)
    scheme = Scheme(scheme)
    if scheme is Scheme.SPLIT_STEP:
        prop, mvals, mvecs, obs, refs = _prepare_split(h, m, dt, observables, references)
        start = np.ascontiguousarray(mvecs.conj().T @ psi0)
        inc, means, logs, psi, status, fail = kern.split_step(prop, mvals, start, dt, gamma, normals, coeff, obs, refs, log_stride)
        psi = mvecs @ psi
    else:
        obs = np.ascontiguousarray(np.array([op.toarray() for op in observables.values()], dtype=complex).reshape(len(observables), h.dim, h.dim))
        refs = np.ascontiguousarray(np.array(list(references.values()), dtype=complex).reshape(len(references), h.dim))
        m2 = m.matrix @ m.matrix
        inc, means, logs, psi, status, fail = kern.euler_maruyama(
            *_csr_parts(h.matrix), *_csr_parts(m.matrix), *_csr_parts(m2),
            np.ascontiguousarray(psi0), dt, gamma, normals, coeff, obs, refs, log_stride,
        )
    if status == kernels.STATUS_NORM_COLLAPSE:
        raise StepSizeError(f"state norm collapsed below 1e-12 at step {fail}; reduce dt (dt={dt})")
    if status == kernels.STATUS_NONFINITE:
        raise FloatingPointError(f"non-finite state at step {fail} (dt={dt})")
    return inc, means, logs, psi


def check_step_size(h, m, psi0, gamma, dt, scheme, drive="filter", steps=CHECK_STEPS, seed=0, backend=None) -> float:
    """Max deviation of <M>(t) between dt and dt/2 on a shared Brownian path."""
    fine = standard_normals(seed ^ 0x5EED, 2 * steps)
    coarse = (fine[0::2] + fine[1::2]) / np.sqrt(2.0)
    obs = {"M": m}
    _, _, lc, _ = integrate(h, m, psi0, dt=dt, gamma=gamma, normals=coarse, scheme=scheme, drive=drive,
                         observables=obs, log_stride=1, backend=backend)
    _, _, lf, _ = integrate(h, m, psi0, dt=dt / 2, gamma=gamma, normals=fine, scheme=scheme, drive=drive,
                         observables=obs, log_stride=2, backend=backend)
    return float(np.max(np.abs(lc[:, 0] - lf[:, 0])))


def resolve_dt(h, m, psi0, config: TrajectoryConfig) -> tuple[float, dict[str, Any]]:
    """Explicit dt, or the policy default halved until the check passes."""
    if config.dt is not None:
        return float(config.dt), {"dt_policy": "explicit"}
    dt = default_dt(h, config.scheme, config.gamma)
    history = []
    for _ in range(MAX_HALVINGS + 1):
        dev = check_step_size(h, m, psi0, config.gamma, dt, config.scheme, config.drive, backend=config.backend)
        history.append([dt, dev])
        if dev <= CHECK_TOL:
            break
        dt /= 2
    return dt, {"dt_policy": "auto", "dt_check": history}


def run_trajectory(h: HermitianOperator, m: HermitianOperator, psi0: np.ndarray, config: TrajectoryConfig,
                   observables: Mapping[str, HermitianOperator] | None = None,
                   references: Mapping[str, np.ndarray] | None = None,
                   model_hash: str = "") -> tuple[MeasurementRecord, TrajectoryLog]:
    """Run one seeded trajectory and return its record and observable log.

    Identical (seed, scheme, dt, backend) give a bit-identical record.
    """
    dt, dt_meta = resolve_dt(h, m, psi0, config)
    nsteps = int(round(config.total_time / dt))
    if nsteps < 1:
        raise ValueError("total_time shorter than one step")
    normals = standard_normals(config.seed, nsteps)
    observables = dict(observables or {})
    references = dict(references or {})
    inc, means, logs, psi = integrate(
        h, m, psi0, dt=dt, gamma=config.gamma, normals=normals, scheme=config.scheme, drive=config.drive,
        observables=observables, references=references, log_stride=config.log_stride, backend=config.backend,
    )
    names = list(observables) + list(references)
    times = np.arange(logs.shape[0]) * config.log_stride * dt
    meta = {
        **config.to_dict(),
        "dt": dt,
        **dt_meta,
        "operator": m.label,
        "operator_meta": {k: v for k, v in m.meta.items() if k != "model"},
        "model_hash": model_hash,
        "backend": kernels.BACKEND if config.backend is None else config.backend,
        "version": __version__,
    }
    record = MeasurementRecord(config.gamma, dt, inc, int(config.seed), config.scheme.value, m.label, model_hash, meta, means)
    log = TrajectoryLog(times, {n: logs[:, i] for i, n in enumerate(names)}, psi,
                        {k: np.asarray(v, dtype=complex) for k, v in references.items()}, meta)
    return record, log


def time_average_expectation(log: TrajectoryLog, tag: str, discard: float = 0.0) -> float:
    """Mean of a logged series after dropping the initial ``discard`` fraction."""
    if tag not in log.values:
        raise KeyError(f"observable {tag!r} was not logged")
    if not 0 <= discard <= 1:
        raise ValueError("discard must lie in [0, 1]")
    series = log.values[tag]
    start = int(np.ceil(discard * len(series)))
    if start >= len(series):
        raise ValueError("averaging window is empty")
    return float(np.mean(series[start:]))


def ground_state_residence(log: TrajectoryLog, ground: np.ndarray, discard: float = 0.0) -> float:
    """Time average of |<GS|psi(t)>|^2 from the logged reference overlaps."""
    ground = np.asarray(ground, dtype=complex)
    for tag, ref in log.references.items():
        if ref.shape != ground.shape:
            raise BasisMismatchError("ground state dimension does not match the logged states")
        if abs(abs(np.vdot(ref, ground)) - 1.0) < 1e-10:
            return time_average_expectation(log, tag, discard)
    raise KeyError("the given ground state was not logged as a reference overlap")
