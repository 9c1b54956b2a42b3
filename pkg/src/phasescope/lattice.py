"""1D optical-lattice band structure, Wannier functions and overlap integrals.

Units: hbar = 1, lattice wavenumber k_l = 1 and recoil energy E_r = k_l^2/2m = 1,
so the kinetic energy of a plane wave e^{ikx} is k^2 and the lattice period
is a = pi. The lattice potential is ``V(x) = depth * sin(x)^2`` with site
``j`` (1-based) centred at ``x_j = (j - 1) * pi``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

LATTICE_PERIOD = np.pi
CONVERGENCE_RTOL = 1e-6


class QuadratureError(RuntimeError):
    """An overlap integral did not converge under grid refinement."""


class BandSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    depth: float = 5.0
    num_sites: int = 6
    plane_wave_cutoff: int = 15
    num_quasi_momenta: int = 64
    points_per_period: int = 64
    support_periods: int = 10

    def __post_init__(self):
        if not self.depth > 0:
            raise ValueError("lattice depth must be > 0")
        if self.plane_wave_cutoff < 8:
            raise ValueError("plane_wave_cutoff must be >= 8")
        if self.points_per_period < 16:
            raise ValueError("need at least 16 quadrature points per lattice period")
        if self.num_quasi_momenta < 2 * self.support_periods + 2:
            raise ValueError("quasi-momentum grid too small for the Wannier support window")
        if self.num_sites < 1:
            raise ValueError("num_sites must be >= 1")


class ProbeMode(str, enum.Enum):
    HALF_PERIOD = "half_period"
    SHIFTED_SAME_PERIOD = "shifted_same_period"


@dataclass(frozen=True)
class ProbeSpec:
    mode: ProbeMode = ProbeMode.SHIFTED_SAME_PERIOD
    coupling_scale: float = 1.0
    sublattice: str = "even"

    def __post_init__(self):
        object.__setattr__(self, "mode", ProbeMode(self.mode))
        if self.sublattice not in ("even", "odd"):
            raise ValueError("sublattice must be 'even' or 'odd'")

    def intensity(self, x: np.ndarray) -> np.ndarray:
        """|f_a(x)|^2 of the cavity mode, up to ``coupling_scale``."""
        if self.mode is ProbeMode.SHIFTED_SAME_PERIOD:
            # maxima between the wells
            return np.sin(x) ** 2
        # period 2a; bright on 1-based even sites (x = pi, 3pi, ...) by default
        return np.sin(x / 2) ** 2 if self.sublattice == "even" else np.cos(x / 2) ** 2


@dataclass(frozen=True)
class BlochData:
    spec: LatticeSpec
    quasi_momenta: np.ndarray  # (Nk,), in [-1, 1)
    energies: np.ndarray  # (Nk,), lowest band
    coefficients: np.ndarray  # (Nk, 2Q+1), real, phase-fixed
    gaps: np.ndarray  # (Nk,), E_1(q) - E_0(q)

    @property
    def reciprocal_orders(self) -> np.ndarray:
        q = self.spec.plane_wave_cutoff
        return np.arange(-q, q + 1)


def central_equation(q: float, depth: float, cutoff: int) -> np.ndarray:
    """Plane-wave Hamiltonian at quasi-momentum ``q`` (basis e^{i(q+2n)x})."""
    n = np.arange(-cutoff, cutoff + 1)
    h = np.diag((q + 2.0 * n) ** 2 + depth / 2.0)
    off = -depth / 4.0 * np.ones(2 * cutoff)
    return h + np.diag(off, 1) + np.diag(off, -1)


def solve_bands(spec: LatticeSpec) -> BlochData:
    """Lowest band of the cosine lattice on a uniform quasi-momentum grid.

    The grid is ``q_m = 2m / Nk`` for ``m = -Nk/2 .. Nk/2 - 1`` and includes
    q = 0. Bloch phases follow the Kohn convention: the periodic part is
    real with ``u_q(0) > 0``.
    """
    nk = spec.num_quasi_momenta
    qs = 2.0 * np.arange(-(nk // 2), nk - nk // 2) / nk
    size = 2 * spec.plane_wave_cutoff + 1
    energies = np.empty(nk)
    gaps = np.empty(nk)
    coeffs = np.empty((nk, size))
    for m, q in enumerate(qs):
        try:
            evals, evecs = np.linalg.eigh(central_equation(q, spec.depth, spec.plane_wave_cutoff))
        except np.linalg.LinAlgError as exc:
            raise BandSolverError(f"eigensolver failed at quasi-momentum q={q:.6f}") from exc
        c = evecs[:, 0]
        at_center = c.sum()
        if abs(at_center) < 1e-10:
            raise BandSolverError(f"phase fixing ambiguous at q={q:.6f} (u_q(0) vanishes)")
        coeffs[m] = c * np.sign(at_center)
        energies[m] = evals[0]
        gaps[m] = evals[1] - evals[0]
    return BlochData(spec, qs, energies, coeffs, gaps)


def wannier_function(bloch: BlochData, site: int, x: np.ndarray) -> np.ndarray:
    """Wannier function of ``site`` (1-based) sampled at positions ``x``.

    w_j(x) = Nk^{-1/2} sum_q e^{-i q x_j} psi_q(x) with Bloch functions
    normalised on the Nk-site supercell.
    """
    x = np.asarray(x, dtype=float)
    xj = (site - 1) * LATTICE_PERIOD
    nk = len(bloch.quasi_momenta)
    k = bloch.quasi_momenta[:, None] + 2.0 * bloch.reciprocal_orders[None, :]
    amp = bloch.coefficients * np.exp(-1j * bloch.quasi_momenta * xj)[:, None]
    w = np.zeros(x.shape, dtype=complex)
    for kk, aa in zip(k, amp):
        w += np.exp(1j * np.multiply.outer(x, kk)) @ aa
    w /= nk * np.sqrt(LATTICE_PERIOD)
    return w.real


def wannier_second_derivative(bloch: BlochData, site: int, x: np.ndarray) -> np.ndarray:
    """d^2 w_j / dx^2, evaluated spectrally from the plane-wave expansion."""
    x = np.asarray(x, dtype=float)
    xj = (site - 1) * LATTICE_PERIOD
    nk = len(bloch.quasi_momenta)
    k = bloch.quasi_momenta[:, None] + 2.0 * bloch.reciprocal_orders[None, :]
    amp = -(k**2) * bloch.coefficients * np.exp(-1j * bloch.quasi_momenta * xj)[:, None]
    out = np.zeros(x.shape, dtype=complex)
    for kk, aa in zip(k, amp):
        out += np.exp(1j * np.multiply.outer(x, kk)) @ aa
    return (out / (nk * np.sqrt(LATTICE_PERIOD))).real


@dataclass
class WannierData:
    """Wannier functions of sites 1..L sampled on a common uniform grid."""

    bloch: BlochData
    x: np.ndarray
    dx: float
    w: np.ndarray  # (L, len(x))
    d2w: np.ndarray  # (L, len(x))

    @property
    def potential(self) -> np.ndarray:
        return self.bloch.spec.depth * np.sin(self.x) ** 2


def sample_wannier(bloch: BlochData, num_sites: int | None = None, points_per_period: int | None = None) -> WannierData:
    spec = bloch.spec
    num_sites = num_sites or spec.num_sites
    ppp = points_per_period or spec.points_per_period
    lo = -spec.support_periods * LATTICE_PERIOD
    hi = (num_sites - 1 + spec.support_periods) * LATTICE_PERIOD
    n = int(round((hi - lo) / LATTICE_PERIOD * ppp))
    x = lo + (hi - lo) * np.arange(n + 1) / n
    w = np.array([wannier_function(bloch, j, x) for j in range(1, num_sites + 1)])
    d2w = np.array([wannier_second_derivative(bloch, j, x) for j in range(1, num_sites + 1)])
    # zero outside each function's own +-support window
    for j in range(num_sites):
        outside = np.abs(x - j * LATTICE_PERIOD) > spec.support_periods * LATTICE_PERIOD
        w[j, outside] = 0.0
        d2w[j, outside] = 0.0
    return WannierData(bloch, x, (hi - lo) / n, w, d2w)


def _trapz(values: np.ndarray, dx: float) -> float:
    return float(np.trapezoid(values, dx=dx)) if hasattr(np, "trapezoid") else float(np.trapz(values, dx=dx))


def _refined(fn, bloch: BlochData, num_sites: int):
    """Evaluate ``fn(wannier_data)`` at two resolutions and demand agreement."""
    ppp = bloch.spec.points_per_period
    coarse = np.asarray(fn(sample_wannier(bloch, num_sites, ppp)), dtype=float)
    fine = np.asarray(fn(sample_wannier(bloch, num_sites, 2 * ppp)), dtype=float)
    scale = max(float(np.max(np.abs(fine))), 1e-300)
    change = float(np.max(np.abs(fine - coarse))) / scale
    if change > CONVERGENCE_RTOL:
        raise QuadratureError(f"integral changed by {change:.2e} (relative) under grid refinement")
    return fine


def hopping_integral(wd: WannierData, j: int = 1) -> float:
    """J = -<w_j| p^2/2m + V |w_{j+1}> (positive for the lowest band)."""
    a, b = wd.w[j - 1], wd.w[j]
    h_b = -wd.d2w[j] + wd.potential * b
    return -_trapz(a * h_b, wd.dx)


def interaction_integral(wd: WannierData, interaction_strength: float, j: int = 1) -> float:
    return interaction_strength * _trapz(wd.w[j - 1] ** 4, wd.dx)


def hubbard_parameters(bloch: BlochData, interaction_strength: float, site: int = 1) -> tuple[float, float]:
    """(J, U) from real-space quadrature, checked for grid convergence."""
    need = max(site + 1, 2)

    def both(wd):
        return [hopping_integral(wd, site), interaction_integral(wd, 1.0, site)]

    j_val, u_unit = _refined(both, bloch, need)
    return float(j_val), float(interaction_strength * u_unit)


def hopping_from_bands(bloch: BlochData, distance: int = 1) -> float:
    """J via the Fourier sum of the band dispersion, -(1/Nk) sum_q E(q) e^{i q d a}."""
    phase = np.cos(bloch.quasi_momenta * distance * LATTICE_PERIOD)
    return -float(np.mean(bloch.energies * phase))


@dataclass
class MeasurementMatrix:
    """Site-space matrix M_jk of the probe coupling, max diagonal scaled to 1."""

    entries: np.ndarray
    provenance: str  # "computed-from-Wannier" | "idealized"
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("measurement matrix must be square")
        if not np.allclose(m, m.T, atol=1e-12, rtol=0):
            raise ValueError("measurement matrix must be symmetric")
        self.entries = m

    @property
    def num_sites(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def idealized_population(cls, num_sites: int, m_pop: float = 1.0, sublattice: str = "even") -> "MeasurementMatrix":
        parity = 0 if sublattice == "even" else 1
        diag = np.array([m_pop if (j % 2 == parity) else 0.0 for j in range(1, num_sites + 1)])
        return cls(np.diag(diag), "idealized", {"kind": "population", "sublattice": sublattice})

    @classmethod
    def idealized_coherence(cls, num_sites: int, v: float = 1.0, periodic: bool = False) -> "MeasurementMatrix":
        m = np.zeros((num_sites, num_sites))
        for j in range(num_sites - 1):
            m[j, j + 1] = m[j + 1, j] = v
        if periodic and num_sites > 2:
            m[0, -1] = m[-1, 0] = v
        return cls(m, "idealized", {"kind": "coherence", "periodic": periodic})

    def to_csv(self) -> str:
        lines = ["# " + json.dumps({"provenance": self.provenance, **self.params}, sort_keys=True, default=str)]
        lines.append("j,k,M_jk")
        n = self.num_sites
        for j in range(n):
            for k in range(n):
                lines.append(f"{j + 1},{k + 1},{self.entries[j, k]:.17g}")
        return "\n".join(lines) + "\n"


def measurement_matrix(bloch: BlochData, probe: ProbeSpec, num_sites: int | None = None) -> MeasurementMatrix:
    """M_jk = int |f(x)|^2 w_j(x) w_k(x) dx, normalised to max diagonal 1.

    The physical prefactor g^2/Delta (``probe.coupling_scale``) is absorbed
    into the measurement strength and recorded in ``params`` only.
    """
    num_sites = num_sites or bloch.spec.num_sites

    def overlaps(wd):
        weighted = wd.w * probe.intensity(wd.x)[None, :]
        m = np.trapezoid(weighted[:, None, :] * wd.w[None, :, :], dx=wd.dx, axis=-1) if hasattr(np, "trapezoid") else np.trapz(weighted[:, None, :] * wd.w[None, :, :], dx=wd.dx, axis=-1)
        return m / np.max(np.abs(np.diag(m)))

    m = _refined(overlaps, bloch, num_sites)
    m = 0.5 * (m + m.T)
    params = {
        "mode": probe.mode.value,
        "sublattice": probe.sublattice,
        "coupling_scale": probe.coupling_scale,
        "lattice": asdict(bloch.spec),
    }
    return MeasurementMatrix(m, "computed-from-Wannier", params)
