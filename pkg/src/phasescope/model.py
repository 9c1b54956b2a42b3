"""Bose-Hubbard Hamiltonian, measurement operators and exact spectra."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

from .fock import (
    FockBasis,
    HermitianOperator,
    bonds,
    build_basis,
    hopping_operator,
    interaction_operator,
    number_operator,
    one_body_operator,
)
from .lattice import MeasurementMatrix

DENSE_DIM_CAP = 5000
COMMUTATOR_ATOL = 1e-12
DEGENERACY_TOL = 1e-10


class MeasurementKind(str, enum.Enum):
    POPULATION = "population"
    COHERENCE = "coherence"


class DegenerateGroundStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Dimensionless Bose-Hubbard chain.

    ``u_over_j`` may be ``math.inf`` (J = 0). Internally J and U are fixed by
    J^2 + U^2 = 1 before the spectrum is rescaled to ``rescale_span``.
    """

    num_sites: int = 6
    num_particles: int = 6
    u_over_j: float = 1.0
    rescale_span: float | None = 20.0
    boundary: str = "open"
    measurement_kind: MeasurementKind = MeasurementKind.POPULATION
    sublattice: str = "even"
    measurement_matrix: MeasurementMatrix | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "measurement_kind", MeasurementKind(self.measurement_kind))
        if not self.u_over_j >= 0:
            raise ValueError("u_over_j must be >= 0")
        if self.rescale_span is not None and not self.rescale_span > 0:
            raise ValueError("rescale_span must be > 0")
        if self.boundary not in ("open", "periodic"):
            raise ValueError("boundary must be 'open' or 'periodic'")
        if self.sublattice not in ("even", "odd"):
            raise ValueError("sublattice must be 'even' or 'odd'")

    @property
    def couplings(self) -> tuple[float, float]:
        """(J, U) before rescaling, normalised so that J^2 + U^2 = 1."""
        r = self.u_over_j
        if math.isinf(r):
            return 0.0, 1.0
        norm = math.hypot(1.0, r)
        return 1.0 / norm, r / norm

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["measurement_kind"] = self.measurement_kind.value
        d["u_over_j"] = "inf" if math.isinf(self.u_over_j) else self.u_over_j
        if self.measurement_matrix is not None:
            d["measurement_matrix"] = self.measurement_matrix.entries.tolist()
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def basis_for(spec: ModelSpec) -> FockBasis:
    return build_basis(spec.num_sites, spec.num_particles)


def hopping_term(basis: FockBasis, boundary: str = "open") -> HermitianOperator:
    """sum over bonds <j,k> of (b†_j b_k + h.c.)."""
    total = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for j, k in bonds(basis.num_sites, boundary):
        total = total + hopping_operator(basis, j, k).matrix
    return HermitianOperator(basis, total, "hopping")


def _check_basis(spec: ModelSpec, basis: FockBasis) -> None:
    if (basis.num_sites, basis.num_particles) != (spec.num_sites, spec.num_particles):
        raise ValueError("basis does not match model spec (L, N)")


def _spectral_range(matrix: sp.csr_matrix) -> tuple[float, float]:
    if matrix.shape[0] <= DENSE_DIM_CAP:
        evals = np.linalg.eigvalsh(matrix.toarray())
        return float(evals[0]), float(evals[-1])
    from scipy.sparse.linalg import eigsh

    lo = eigsh(matrix, k=1, which="SA", return_eigenvectors=False)[0]
    hi = eigsh(matrix, k=1, which="LA", return_eigenvectors=False)[0]
    return float(lo), float(hi)


def build_hamiltonian(spec: ModelSpec, basis: FockBasis | None = None) -> HermitianOperator:
    """-J sum (b†_j b_k + h.c.) + U/2 sum n_j(n_j - 1), optionally rescaled.

    With ``rescale_span`` set, H -> c H so that E_max - E_min equals the span;
    no shift is applied. ``meta['rescale']`` records c.
    """
    basis = basis or basis_for(spec)
    _check_basis(spec, basis)
    j, u = spec.couplings
    mat = -j * hopping_term(basis, spec.boundary).matrix + 0.5 * u * interaction_operator(basis).matrix
    factor = 1.0
    if spec.rescale_span is not None:
        lo, hi = _spectral_range(mat)
        if hi - lo <= 1e-14:
            raise ValueError("Hamiltonian spectrum has zero width; cannot rescale")
        factor = spec.rescale_span / (hi - lo)
    meta = {"J": j * factor, "U": u * factor, "rescale": factor, "model": spec.to_dict()}
    return HermitianOperator(basis, mat * factor, "H_BH", meta)


def _idealized_measurement(spec: ModelSpec, basis: FockBasis) -> HermitianOperator:
    if spec.measurement_kind is MeasurementKind.POPULATION:
        parity = 0 if spec.sublattice == "even" else 1
        sites = [s for s in range(1, spec.num_sites + 1) if s % 2 == parity]
        diag = basis.states[:, [s - 1 for s in sites]].sum(axis=1).astype(complex) if sites else np.zeros(basis.dim, complex)
        return HermitianOperator(basis, sp.diags(diag, format="csr"), "M_pop", {"sites": sites})
    # M_coh = sum_j (b†_j b_{j+1} + h.c.) over the chain bonds
    op = hopping_term(basis, spec.boundary)
    return HermitianOperator(basis, op.matrix, "M_coh")


def build_measurement(spec: ModelSpec, basis: FockBasis | None = None) -> HermitianOperator:
    """Measurement operator scaled to unit operator norm.

    Idealized operators are checked at build time: M_pop must commute with
    the interaction term and M_coh with the hopping term (to 1e-12). An
    operator built from ``spec.measurement_matrix`` instead records its
    commutator norms in ``meta``; for the coherence kind the uniform
    diagonal (total-population offset) is dropped.
    """
    basis = basis or basis_for(spec)
    _check_basis(spec, basis)
    hop = hopping_term(basis, spec.boundary)
    inter = interaction_operator(basis)
    if spec.measurement_matrix is None:
        raw = _idealized_measurement(spec, basis)
        partner = inter if spec.measurement_kind is MeasurementKind.POPULATION else hop
        residual = raw.commutator_norm(partner)
        if residual > COMMUTATOR_ATOL:
            raise RuntimeError(f"{raw.label} fails its commutation check ({residual:.2e})")
        provenance = "idealized"
    else:
        mm = spec.measurement_matrix
        if mm.num_sites != spec.num_sites:
            raise ValueError(f"measurement matrix is {mm.num_sites}x{mm.num_sites}, model has L={spec.num_sites}")
        entries = mm.entries.copy()
        if spec.measurement_kind is MeasurementKind.COHERENCE:
            entries -= np.mean(np.diag(entries)) * np.eye(spec.num_sites)
        label = "M_pop" if spec.measurement_kind is MeasurementKind.POPULATION else "M_coh"
        raw = one_body_operator(basis, entries, label)
        provenance = mm.provenance
    norm = raw.operator_norm()
    if norm == 0:
        raise ValueError(f"{raw.label} is the zero operator for this model")
    meta = {
        "kind": spec.measurement_kind.value,
        "raw_norm": norm,
        "normalization": "unit operator norm",
        "provenance": provenance,
        "commutator_with_interaction": raw.commutator_norm(inter) / norm,
        "commutator_with_hopping": raw.commutator_norm(hop) / norm,
        **raw.meta,
    }
    return HermitianOperator(basis, raw.matrix / norm, raw.label, meta)


def coherence_operator(basis: FockBasis, boundary: str = "open") -> HermitianOperator:
    """Unit-norm M_coh, used as a logged observable regardless of what is measured."""
    spec = ModelSpec(basis.num_sites, basis.num_particles, boundary=boundary, measurement_kind="coherence")
    return build_measurement(spec, basis)


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rescale: float = 1.0
    degenerate_pairs: int = 0

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


def diagonalize(h: HermitianOperator, dim_cap: int = DENSE_DIM_CAP) -> SpectralData:
    """Dense eigendecomposition with ascending eigenvalues.

    Exactly diagonal matrices are handled without LAPACK so that the
    eigenvectors are the Fock states themselves (stable ordering of ties).
    """
    if h.dim > dim_cap:
        raise ValueError(f"dimension {h.dim} exceeds dense solver cap {dim_cap}")
    if h.is_diagonal:
        diag = h.matrix.diagonal().real
        order = np.argsort(diag, kind="stable")
        evals = diag[order]
        evecs = np.eye(h.dim, dtype=complex)[:, order]
    else:
        try:
            evals, evecs = np.linalg.eigh(h.toarray())
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"eigensolver failed for {h.label}") from exc
    gaps = np.diff(evals)
    return SpectralData(evals, evecs, float(h.meta.get("rescale", 1.0)), int(np.sum(gaps < DEGENERACY_TOL)))


def ground_state(h: HermitianOperator, spectral: SpectralData | None = None) -> np.ndarray:
    """Normalised lowest eigenvector; raises if the ground level is degenerate."""
    spectral = spectral or diagonalize(h)
    if spectral.dim > 1 and spectral.eigenvalues[1] - spectral.eigenvalues[0] < DEGENERACY_TOL:
        raise DegenerateGroundStateError(
            f"ground state of {h.label} is degenerate (gap {spectral.eigenvalues[1] - spectral.eigenvalues[0]:.2e})"
        )
    v = spectral.eigenvectors[:, 0].astype(complex)
    # deterministic global phase: largest component real and positive
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    return v / np.linalg.norm(v)


def total_number(basis: FockBasis) -> HermitianOperator:
    return number_operator(basis)
