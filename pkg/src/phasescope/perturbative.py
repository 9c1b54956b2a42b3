"""Weak-measurement (perturbative) power spectra from exact eigendata.

Each ordered pair of eigenstates (i, j) contributes a Lorentzian centred at
w_ij = E_i - E_j with width

    G_ij = <i|M^2|i> + <j|M^2|j> - 2 <i|M|i><j|M|j>

and weight |<j|M|i>|^2, all states equally populated. The weight is the
squared modulus of the transition matrix element so that the spectrum is
real and nonnegative. Components narrower than ``DELTA_WIDTH`` are kept as
delta lines of area pi * weight and deposited in the nearest grid bin.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__, kernels
from .fock import HermitianOperator
from .model import (
    DEGENERACY_TOL,
    MeasurementKind,
    ModelSpec,
    basis_for,
    build_hamiltonian,
    build_measurement,
    diagonalize,
    SpectralData,
)
from .spectrum import LorentzFit, Normalization, Spectrum, maximize_overlap, trapezoid_weights

DELTA_WIDTH = 1e-9
WEIGHT_FLOOR = 1e-20
UNIT_SQUARE_TOL = 1e-6


def default_grid(cap: float = 40.0, points: int = 4001) -> np.ndarray:
    return np.linspace(-cap, cap, points)


@dataclass
class PerturbativeSpectrum:
    frequencies: np.ndarray
    values: np.ndarray
    omega: np.ndarray  # per component
    width: np.ndarray
    weight: np.ndarray
    pairs: np.ndarray  # (n, 2) eigenstate indices (i, j)
    delta_mask: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("perturbative PSD must be nonnegative")
        norm = float(trapezoid_weights(len(self.frequencies), self.frequencies[1] - self.frequencies[0]) @ self.values**2)
        if abs(norm - 1.0) > UNIT_SQUARE_TOL:
            raise ValueError(f"UnitSquare normalisation violated ({norm})")

    @property
    def delta_fraction(self) -> float:
        """Share of the total integrated weight carried by delta lines."""
        total = self.weight.sum()
        return float(self.weight[self.delta_mask].sum() / total) if total > 0 else 0.0

    @property
    def delta_weight_at_zero(self) -> float:
        """Share of the total weight in delta lines at w = 0."""
        total = self.weight.sum()
        at_zero = self.delta_mask & (np.abs(self.omega) < DEGENERACY_TOL)
        return float(self.weight[at_zero].sum() / total) if total > 0 else 0.0

    def to_spectrum(self) -> Spectrum:
        return Spectrum(self.frequencies, self.values, Normalization.UNIT_SQUARE, False,
                        {"source": "perturbative", **self.diagnostics})

    def components_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "j", "omega_ij", "Gamma_ij", "weight", "delta"])
        for (i, j), w, g, a, d in zip(self.pairs.tolist(), self.omega.tolist(), self.width.tolist(),
                                      self.weight.tolist(), self.delta_mask.tolist()):
            writer.writerow([i, j, repr(w), repr(g), repr(a), int(d)])
        return buf.getvalue()


def transition_data(spectral: SpectralData, m: HermitianOperator, weight_floor: float = WEIGHT_FLOOR):
    """Centres, widths, weights and index pairs of all non-negligible components."""
    v = spectral.eigenvectors
    if v.shape[0] != m.dim:
        raise ValueError("spectral data and measurement operator live in different bases")
    m_eig = v.conj().T @ (m.matrix @ v)
    diag = m_eig.diagonal().real
    diag_sq = np.sum(np.abs(m_eig) ** 2, axis=1)  # <i|M^2|i>
    weights = np.abs(m_eig.T) ** 2  # [i, j] -> |<j|M|i>|^2
    i_idx, j_idx = np.nonzero(weights > weight_floor)
    e = spectral.eigenvalues
    omega = e[i_idx] - e[j_idx]
    width = diag_sq[i_idx] + diag_sq[j_idx] - 2.0 * diag[i_idx] * diag[j_idx]
    width = np.maximum(width, 0.0)
    return omega, width, weights[i_idx, j_idx], np.stack([i_idx, j_idx], axis=1)


def centered(m: HermitianOperator) -> HermitianOperator:
    """M - Tr(M)/D. Leaves every width unchanged and only reweights the w = 0 lines."""
    import scipy.sparse as sp

    shift = float(m.matrix.diagonal().real.mean())
    mat = (m.matrix - shift * sp.identity(m.dim, format="csr", dtype=m.matrix.dtype)).tocsr()
    return HermitianOperator(m.basis, mat, m.label + " (centered)", {**m.meta, "center_shift": shift})


def perturbative_psd(spectral: SpectralData, m: HermitianOperator, grid: np.ndarray | None = None,
                     center: bool = False) -> PerturbativeSpectrum:
    """Sum of Lorentzians over all eigenstate pairs, normalised to int S^2 = 1.

    With ``center`` the equal-population mean of M is subtracted first, the
    analogue of removing the record mean before the periodogram.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if center:
        m = centered(m)
    step = grid[1] - grid[0]
    if not np.allclose(grid, -grid[::-1], atol=1e-12 * max(1.0, abs(grid[-1]))):
        raise ValueError("frequency grid must be symmetric about zero")
    omega, width, weight, pairs = transition_data(spectral, m)
    delta = width < DELTA_WIDTH
    lor = ~delta
    values = kernels.render_lorentzians(
        np.ascontiguousarray(omega[lor]), np.ascontiguousarray(width[lor]),
        np.ascontiguousarray(weight[lor]), np.ascontiguousarray(grid),
    )
    if np.any(delta):
        bins = np.clip(np.rint((omega[delta] - grid[0]) / step).astype(int), 0, len(grid) - 1)
        np.add.at(values, bins, math.pi * weight[delta] / step)
    values = 0.5 * (values + values[::-1])
    norm = trapezoid_weights(len(grid), step) @ values**2
    if norm <= 0:
        raise ValueError("perturbative PSD vanishes identically")
    values = values / math.sqrt(norm)
    positive = width[lor]
    min_width = float(positive.min()) if positive.size else None
    diagnostics = {
        "components": int(len(omega)),
        "delta_components": int(delta.sum()),
        "min_positive_width": min_width,
        "grid_step": float(step),
        "degenerate_pairs": spectral.degenerate_pairs,
        "centered": bool(center),
        "version": __version__,
    }
    if min_width is not None and min_width < step:
        diagnostics["warning"] = "grid too coarse to resolve the narrowest Lorentzian"
    return PerturbativeSpectrum(grid, values, omega, width, weight, pairs, delta, diagnostics)


@dataclass
class Fig1Entry:
    u_over_j: float
    kind: str
    spectrum: PerturbativeSpectrum
    fit: LorentzFit


def fig1_scan(u_over_j: Iterable[float], num_sites: int = 6, num_particles: int = 6,
              kinds: Sequence[str] = ("coherence", "population"), grid: np.ndarray | None = None,
              boundary: str = "open", rescale_span: float = 20.0,
              center: bool = False) -> dict[str, list[Fig1Entry]]:
    """Perturbative spectra and their maximal Lorentzian overlap across U/J."""
    u_over_j = list(u_over_j)
    out: dict[str, list[Fig1Entry]] = {}
    for kind in kinds:
        kind = MeasurementKind(kind).value
        entries = []
        for r in u_over_j:
            spec = ModelSpec(num_sites, num_particles, u_over_j=r, rescale_span=rescale_span,
                             boundary=boundary, measurement_kind=kind)
            basis = basis_for(spec)
            h = build_hamiltonian(spec, basis)
            m = build_measurement(spec, basis)
            ps = perturbative_psd(diagonalize(h), m, grid, center=center)
            entries.append(Fig1Entry(r, kind, ps, maximize_overlap(ps.to_spectrum(), width_max=rescale_span)))
        out[kind] = entries
    return out


def fig1_csv(entries: list[Fig1Entry]) -> str:
    buf = io.StringIO()
    header = {"format": "phasescope.fig1/1", "kind": entries[0].kind if entries else None,
              "normalization": "unit_square", "version": __version__}
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["u_over_j", "omega", "S"])
    for e in entries:
        for w, s in zip(e.spectrum.frequencies.tolist(), e.spectrum.values.tolist()):
            writer.writerow([repr(float(e.u_over_j)), repr(w), repr(s)])
    return buf.getvalue()
