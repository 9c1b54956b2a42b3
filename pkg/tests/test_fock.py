import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasescope.fock import (
    CapacityError,
    HermitianOperator,
    bonds,
    build_basis,
    hopping_operator,
    interaction_operator,
    number_operator,
    one_body_operator,
    transfer_matrix,
)

small = st.tuples(st.integers(1, 5), st.integers(0, 5))


def test_dimension_462():
    assert build_basis(6, 6).dim == 462


def test_ordering_is_lex_descending():
    b = build_basis(3, 2)
    assert [tuple(s) for s in b.states[:3]] == [(2, 0, 0), (1, 1, 0), (1, 0, 1)]
    assert tuple(b.states[-1]) == (0, 0, 2)


@given(small)
def test_dimension_and_particle_number(ln):
    L, N = ln
    b = build_basis(L, N)
    assert b.dim == comb(N + L - 1, L - 1)
    assert np.all(b.states.sum(axis=1) == N)
    assert len({tuple(s) for s in b.states}) == b.dim


@given(small)
def test_index_roundtrip(ln):
    b = build_basis(*ln)
    for i, s in enumerate(b.states):
        assert b.index_of[tuple(s)] == i
    assert np.array_equal(b.lookup(b.states), np.arange(b.dim))


def test_lookup_rejects_foreign_state():
    b = build_basis(3, 2)
    with pytest.raises(KeyError):
        b.lookup(np.array([[1, 1, 1]]))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        build_basis(0, 3)
    with pytest.raises(ValueError):
        build_basis(3, -1)
    with pytest.raises(CapacityError):
        build_basis(12, 12, dim_cap=1000)


def test_single_site_and_empty():
    assert build_basis(1, 4).dim == 1
    assert build_basis(4, 0).dim == 1


def test_transfer_matrix_elements():
    b = build_basis(2, 2)
    t = transfer_matrix(b, 1, 2).toarray()  # b1^dag b2
    i, j = b.index_of[(2, 0)], b.index_of[(1, 1)]
    assert t[i, j] == pytest.approx(np.sqrt(2))
    k = b.index_of[(0, 2)]
    assert t[j, k] == pytest.approx(np.sqrt(2))


@given(small)
@settings(max_examples=25)
def test_number_conservation_and_hermiticity(ln):
    L, N = ln
    b = build_basis(L, N)
    total = number_operator(b).toarray()
    assert np.allclose(total, N * np.eye(b.dim))
    for j, k in bonds(L):
        op = hopping_operator(b, j, k)
        assert np.allclose(op.toarray(), op.toarray().conj().T)
        assert op.commutator_norm(number_operator(b)) < 1e-12


def test_interaction_diagonal():
    b = build_basis(3, 3)
    inter = interaction_operator(b)
    assert inter.is_diagonal
    assert inter.matrix[b.index_of[(3, 0, 0)], b.index_of[(3, 0, 0)]] == pytest.approx(6)
    assert inter.matrix[b.index_of[(1, 1, 1)], b.index_of[(1, 1, 1)]] == 0


def test_bonds_open_and_periodic():
    assert bonds(4) == [(1, 2), (2, 3), (3, 4)]
    assert bonds(4, "periodic")[-1] == (4, 1)


def test_one_body_matches_hopping():
    b = build_basis(3, 2)
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1
    assert np.allclose(one_body_operator(b, a).toarray(), hopping_operator(b, 1, 2).toarray())


def test_non_hermitian_rejected():
    import scipy.sparse as sp

    b = build_basis(2, 1)
    with pytest.raises(ValueError):
        HermitianOperator(b, sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex)), "bad")


def test_operator_serialisation_roundtrip():
    b = build_basis(3, 2)
    op = hopping_operator(b, 1, 2)
    data = json.loads(json.dumps(op.to_dict()))
    back = HermitianOperator.from_dict(data, b)
    assert np.array_equal(back.toarray(), op.toarray())


def test_basis_json_is_canonical():
    b = build_basis(3, 2)
    d = json.loads(b.to_json())
    assert d["dim"] == 6 and d["site_labels"] == "1-based"
    assert build_basis(3, 2).to_json() == b.to_json()
