"""Bosonic Fock space of N particles on L sites and sparse b†_j b_k operators.

Site labels in the public API are 1-based (site 1 .. site L), matching the
usual lattice notation in which the probed sublattice is "the even sites".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb
from typing import Any, Iterable

import numpy as np
import scipy.sparse as sp

ORDERING = "lex-desc"
DEFAULT_DIM_CAP = 20000
HERMITICITY_RTOL = 1e-12


class CapacityError(ValueError):
    """Requested Hilbert space exceeds the configured dimension cap."""


class BasisMismatchError(ValueError):
    """Operators or states do not live in the same Fock basis."""


def _enumerate_desc(num_sites: int, num_particles: int) -> list[tuple[int, ...]]:
    # descending lexicographic order: (N,0,..,0) first, (0,..,0,N) last
    if num_sites == 1:
        return [(num_particles,)]
    out = []
    for first in range(num_particles, -1, -1):
        for rest in _enumerate_desc(num_sites - 1, num_particles - first):
            out.append((first,) + rest)
    return out


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupation-number basis with an exact inverse index map."""

    num_sites: int
    num_particles: int
    states: np.ndarray  # (dim, num_sites) int64, read-only
    index_of: dict[tuple[int, ...], int] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def __len__(self) -> int:
        return self.dim

    def keys(self, states: np.ndarray) -> np.ndarray:
        """Integer hash of occupation vectors (exact, base N+1)."""
        radix = self.num_particles + 1
        weights = radix ** np.arange(self.num_sites - 1, -1, -1, dtype=np.int64)
        return np.asarray(states, dtype=np.int64) @ weights

    def lookup(self, states: np.ndarray) -> np.ndarray:
        """Vectorised ``index_of`` for an array of occupation vectors."""
        keys = self.keys(states)
        # keys are strictly decreasing along the lex-desc ordering
        pos = np.searchsorted(-self._sorted_keys, -keys)
        pos = np.clip(pos, 0, self.dim - 1)
        if not np.array_equal(self._sorted_keys[pos], keys):
            raise KeyError("occupation vector not in basis")
        return pos

    @property
    def _sorted_keys(self) -> np.ndarray:
        cached = self.__dict__.get("_keys_cache")
        if cached is None:
            cached = self.keys(self.states)
            object.__setattr__(self, "_keys_cache", cached)
        return cached

    def same_as(self, other: "FockBasis") -> bool:
        return (
            self is other
            or (self.num_sites == other.num_sites and self.num_particles == other.num_particles)
        )

    def fock_state(self, occupations: Iterable[int]) -> np.ndarray:
        """Unit vector for a single occupation configuration."""
        vec = np.zeros(self.dim, dtype=complex)
        vec[self.index_of[tuple(int(n) for n in occupations)]] = 1.0
        return vec

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "phasescope.fock-basis/1",
            "num_sites": self.num_sites,
            "num_particles": self.num_particles,
            "dim": self.dim,
            "ordering": ORDERING,
            "site_labels": "1-based",
            "states": self.states.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def build_basis(num_sites: int, num_particles: int, dim_cap: int = DEFAULT_DIM_CAP) -> FockBasis:
    """Enumerate all occupation vectors with ``sum(n) == num_particles``.

    Raises
    ------
    CapacityError
        If binomial(N+L-1, L-1) exceeds ``dim_cap``. The basis is never
        silently truncated.
    """
    if int(num_sites) != num_sites or num_sites < 1:
        raise ValueError(f"num_sites must be an integer >= 1, got {num_sites!r}")
    if int(num_particles) != num_particles or num_particles < 0:
        raise ValueError(f"num_particles must be an integer >= 0, got {num_particles!r}")
    num_sites, num_particles = int(num_sites), int(num_particles)
    dim = comb(num_particles + num_sites - 1, num_sites - 1)
    if dim > dim_cap:
        raise CapacityError(f"Fock dimension {dim} exceeds cap {dim_cap} (L={num_sites}, N={num_particles})")
    tuples = _enumerate_desc(num_sites, num_particles)
    states = np.array(tuples, dtype=np.int64).reshape(dim, num_sites)
    states.setflags(write=False)
    index_of = {s: i for i, s in enumerate(tuples)}
    return FockBasis(num_sites, num_particles, states, index_of)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Sparse Hermitian matrix acting on a :class:`FockBasis`.

    Hermiticity is verified at construction (relative tolerance 1e-12);
    ``meta`` carries free-form provenance such as rescale factors or norms.
    """

    basis: FockBasis
    matrix: sp.csr_matrix
    label: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        mat = sp.csr_matrix(self.matrix, dtype=complex)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        if mat.shape != (self.basis.dim, self.basis.dim):
            raise BasisMismatchError(f"matrix shape {mat.shape} does not match basis dim {self.basis.dim}")
        diff = abs(mat - mat.conj().T)
        scale = abs(mat).max() if mat.nnz else 0.0
        if diff.nnz and diff.max() > HERMITICITY_RTOL * max(scale, 1e-300):
            raise ValueError(f"operator {self.label!r} is not Hermitian (max |A - A^H| = {diff.max():.3e})")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def is_hermitian(self) -> bool:
        return True

    @property
    def is_diagonal(self) -> bool:
        coo = self.matrix.tocoo()
        return bool(np.all(coo.row == coo.col))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def expect(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.matrix @ psi).real)

    def scaled(self, factor: float, label: str | None = None, **meta) -> "HermitianOperator":
        return HermitianOperator(self.basis, self.matrix * factor, label or self.label, {**self.meta, **meta})

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        _check_same_basis(self, other)
        return HermitianOperator(self.basis, self.matrix + other.matrix, f"{self.label}+{other.label}")

    def commutator(self, other: "HermitianOperator") -> sp.csr_matrix:
        _check_same_basis(self, other)
        return self.matrix @ other.matrix - other.matrix @ self.matrix

    def commutator_norm(self, other: "HermitianOperator") -> float:
        c = self.commutator(other)
        return float(abs(c).max()) if c.nnz else 0.0

    def operator_norm(self) -> float:
        """Spectral norm (largest |eigenvalue|)."""
        if self.is_diagonal:
            return float(np.max(np.abs(self.matrix.diagonal()))) if self.dim else 0.0
        evals = np.linalg.eigvalsh(self.toarray())
        return float(np.max(np.abs(evals)))

    def to_dict(self) -> dict[str, Any]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        entries = [
            [int(coo.row[i]), int(coo.col[i]), float(coo.data[i].real), float(coo.data[i].imag)]
            for i in order
        ]
        return {
            "format": "phasescope.operator/1",
            "label": self.label,
            "dim": self.dim,
            "num_sites": self.basis.num_sites,
            "num_particles": self.basis.num_particles,
            "ordering": ORDERING,
            "meta": self.meta,
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], basis: FockBasis | None = None) -> "HermitianOperator":
        if basis is None:
            basis = build_basis(data["num_sites"], data["num_particles"])
        if data["dim"] != basis.dim or data.get("ordering", ORDERING) != ORDERING:
            raise BasisMismatchError("serialized operator does not match basis")
        rows, cols, re, im = (np.array(c) for c in zip(*data["entries"])) if data["entries"] else ([], [], [], [])
        mat = sp.csr_matrix((np.asarray(re) + 1j * np.asarray(im), (rows, cols)), shape=(basis.dim, basis.dim))
        return cls(basis, mat, data.get("label", ""), data.get("meta", {}))


def _check_same_basis(a: HermitianOperator, b: HermitianOperator) -> None:
    if not a.basis.same_as(b.basis):
        raise BasisMismatchError("operators live in different bases")


def _check_site(basis: FockBasis, site: int) -> int:
    if int(site) != site or not 1 <= site <= basis.num_sites:
        raise IndexError(f"site {site!r} out of range 1..{basis.num_sites}")
    return int(site) - 1


def transfer_matrix(basis: FockBasis, j: int, k: int) -> sp.csr_matrix:
    """Sparse matrix of the single term b†_j b_k (1-based sites, not symmetrised)."""
    jj, kk = _check_site(basis, j), _check_site(basis, k)
    states = basis.states
    if jj == kk:
        return sp.diags(states[:, jj].astype(complex), format="csr")
    src = np.nonzero(states[:, kk] > 0)[0]
    targets = states[src].copy()
    amp = np.sqrt((targets[:, jj] + 1) * targets[:, kk], dtype=float)
    targets[:, jj] += 1
    targets[:, kk] -= 1
    dst = basis.lookup(targets)
    return sp.csr_matrix((amp.astype(complex), (dst, src)), shape=(basis.dim, basis.dim))


def hopping_operator(basis: FockBasis, j: int, k: int) -> HermitianOperator:
    """b†_j b_k + b†_k b_j, or the number operator n_j when ``j == k``."""
    if j == k:
        return HermitianOperator(basis, transfer_matrix(basis, j, j), f"n_{j}")
    t = transfer_matrix(basis, j, k)
    return HermitianOperator(basis, t + t.conj().T, f"hop_{j}_{k}")


def number_operator(basis: FockBasis, site: int | None = None) -> HermitianOperator:
    """n_site, or the total particle number when ``site`` is None."""
    if site is None:
        diag = basis.states.sum(axis=1).astype(complex)
        return HermitianOperator(basis, sp.diags(diag, format="csr"), "n_total")
    return hopping_operator(basis, site, site)


def interaction_operator(basis: FockBasis) -> HermitianOperator:
    """Diagonal operator sum_j n_j (n_j - 1)."""
    n = basis.states
    diag = (n * (n - 1)).sum(axis=1).astype(complex)
    return HermitianOperator(basis, sp.diags(diag, format="csr"), "interaction")


def bonds(num_sites: int, boundary: str = "open") -> list[tuple[int, int]]:
    """Nearest-neighbour bonds (1-based) of a chain."""
    if boundary not in ("open", "periodic"):
        raise ValueError(f"unknown boundary {boundary!r}")
    out = [(j, j + 1) for j in range(1, num_sites)]
    if boundary == "periodic" and num_sites > 2:
        out.append((num_sites, 1))
    return out


def one_body_operator(basis: FockBasis, matrix: np.ndarray, label: str = "one_body") -> HermitianOperator:
    """sum_jk A_jk b†_j b_k for an L x L Hermitian site matrix ``A``."""
    a = np.asarray(matrix)
    if a.shape != (basis.num_sites, basis.num_sites):
        raise BasisMismatchError(f"site matrix shape {a.shape} does not match L={basis.num_sites}")
    total = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for j in range(basis.num_sites):
        for k in range(basis.num_sites):
            if a[j, k] != 0:
                total = total + a[j, k] * transfer_matrix(basis, j + 1, k + 1)
    return HermitianOperator(basis, total, label)
