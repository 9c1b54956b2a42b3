import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasescope.fock import build_basis
from phasescope.lattice import MeasurementMatrix
from phasescope.model import (
    DegenerateGroundStateError,
    ModelSpec,
    basis_for,
    build_hamiltonian,
    build_measurement,
    coherence_operator,
    diagonalize,
    ground_state,
)


def two_site_oracle(j, u):
    r = math.sqrt(u * u / 4 + 4 * j * j)
    return sorted([u, u / 2 + r, u / 2 - r])


@pytest.mark.parametrize("ratio", [0.0, 0.3, 1.0, 7.0])
def test_two_site_oracle(ratio):
    spec = ModelSpec(2, 2, u_over_j=ratio, rescale_span=None)
    h = build_hamiltonian(spec)
    j, u = spec.couplings
    assert np.allclose(np.linalg.eigvalsh(h.toarray()), two_site_oracle(j, u), atol=1e-10)


def test_j_zero_limit():
    spec = ModelSpec(3, 3, u_over_j=math.inf, rescale_span=None)
    assert spec.couplings == (0.0, 1.0)
    h = build_hamiltonian(spec)
    assert h.is_diagonal


@given(st.floats(0.05, 60))
@settings(max_examples=20, deadline=None)
def test_rescale_sets_span(ratio):
    h = build_hamiltonian(ModelSpec(4, 4, u_over_j=ratio))
    e = np.linalg.eigvalsh(h.toarray())
    assert e[-1] - e[0] == pytest.approx(20.0, rel=1e-10)
    assert h.meta["J"] / h.meta["U"] == pytest.approx(1 / ratio)


def test_measurement_unit_norm_and_commutation():
    for kind, partner in (("population", "commutator_with_interaction"), ("coherence", "commutator_with_hopping")):
        m = build_measurement(ModelSpec(4, 4, measurement_kind=kind))
        assert m.operator_norm() == pytest.approx(1.0, abs=1e-12)
        assert m.meta[partner] < 1e-12


def test_population_sites_are_one_based_even():
    spec = ModelSpec(4, 2, measurement_kind="population")
    m = build_measurement(spec)
    assert m.meta["sites"] == [2, 4]
    b = basis_for(spec)
    i = b.index_of[(0, 2, 0, 0)]
    assert m.matrix[i, i].real == pytest.approx(1.0)


def test_lattice_matrix_override_records_commutators():
    mm = MeasurementMatrix.idealized_population(4)
    spec = ModelSpec(4, 4, measurement_kind="population", measurement_matrix=mm)
    m = build_measurement(spec)
    ideal = build_measurement(ModelSpec(4, 4, measurement_kind="population"))
    assert np.allclose(m.toarray(), ideal.toarray())
    with pytest.raises(ValueError):
        build_measurement(ModelSpec(3, 3, measurement_matrix=mm))


def test_spectral_data_eigenpairs():
    h = build_hamiltonian(ModelSpec(4, 4, u_over_j=2.0))
    sd = diagonalize(h)
    a = h.toarray()
    assert np.allclose(a @ sd.eigenvectors, sd.eigenvectors * sd.eigenvalues, atol=1e-9)
    assert np.all(np.diff(sd.eigenvalues) >= 0)


def test_ground_state_phase_convention_is_deterministic():
    h = build_hamiltonian(ModelSpec(4, 4, u_over_j=1.5))
    g1, g2 = ground_state(h), ground_state(h)
    assert np.array_equal(g1, g2)
    k = np.argmax(np.abs(g1))
    assert g1[k].imag == 0 and g1[k].real > 0


def test_mott_ground_state_is_unit_filling():
    spec = ModelSpec(4, 4, u_over_j=math.inf)
    g = ground_state(build_hamiltonian(spec))
    b = basis_for(spec)
    assert abs(g[b.index_of[(1, 1, 1, 1)]]) == pytest.approx(1.0)
    coh = coherence_operator(b)
    assert coh.expect(g) == pytest.approx(0.0, abs=1e-14)


def test_degenerate_ground_state_raises():
    # two particles, J = 0, three sites: (1,1,0), (1,0,1), (0,1,1) all at zero energy
    h = build_hamiltonian(ModelSpec(3, 2, u_over_j=math.inf))
    with pytest.raises(DegenerateGroundStateError):
        ground_state(h)


def test_model_digest_stable():
    assert ModelSpec(4, 4, 1.0).digest() == ModelSpec(4, 4, 1.0).digest()
    assert ModelSpec(4, 4, 1.0).digest() != ModelSpec(4, 4, 2.0).digest()


def test_invalid_specs():
    with pytest.raises(ValueError):
        ModelSpec(4, 4, u_over_j=-1)
    with pytest.raises(ValueError):
        ModelSpec(4, 4, boundary="twisted")
