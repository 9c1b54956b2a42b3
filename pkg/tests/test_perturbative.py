import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasescope.model import ModelSpec, build_hamiltonian, build_measurement, diagonalize
from phasescope.perturbative import (
    centered,
    default_grid,
    fig1_csv,
    fig1_scan,
    perturbative_psd,
    transition_data,
)
from phasescope.spectrum import trapezoid_weights


def pieces(L, N, ratio, kind):
    spec = ModelSpec(L, N, u_over_j=ratio, measurement_kind=kind)
    h = build_hamiltonian(spec)
    return diagonalize(h), build_measurement(spec)


def test_two_level_oracle():
    # one particle on two sites: bonding/antibonding states, M = n_2
    sd, m = pieces(2, 1, 1.0, "population")
    omega, width, weight, pairs = transition_data(sd, m)
    assert np.allclose(width, 0.5)
    assert np.allclose(weight, 0.25)
    gap = sd.eigenvalues[1] - sd.eigenvalues[0]
    assert sorted(np.round(omega, 12)) == sorted(np.round([0, 0, gap, -gap], 12))


@pytest.mark.parametrize("ratio,kind", [(math.inf, "population"), (0.0, "coherence")])
def test_commuting_limits_are_pure_delta(ratio, kind):
    sd, m = pieces(4, 4, ratio, kind)
    ps = perturbative_psd(sd, m)
    assert ps.delta_fraction == pytest.approx(1.0)
    assert ps.delta_weight_at_zero == pytest.approx(1.0)


def test_unit_square_and_symmetry():
    sd, m = pieces(4, 4, 2.0, "coherence")
    ps = perturbative_psd(sd, m)
    w = trapezoid_weights(len(ps.frequencies), ps.frequencies[1] - ps.frequencies[0])
    assert w @ ps.values**2 == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(ps.values, ps.values[::-1])
    assert np.all(ps.values >= 0)


def test_total_weight_is_trace_of_square():
    sd, m = pieces(3, 3, 1.0, "coherence")
    _, _, weight, _ = transition_data(sd, m, weight_floor=0.0)
    assert weight.sum() == pytest.approx(np.trace(m.toarray() @ m.toarray()).real, rel=1e-10)


@given(st.floats(0.1, 30))
@settings(max_examples=10, deadline=None)
def test_centering_preserves_widths(ratio):
    sd, m = pieces(3, 3, ratio, "population")
    _, w1, _, p1 = transition_data(sd, m, weight_floor=0.0)
    _, w2, _, p2 = transition_data(sd, centered(m), weight_floor=0.0)
    assert np.array_equal(p1, p2)
    assert np.allclose(w1, w2, atol=1e-12)


def test_grid_must_be_symmetric():
    sd, m = pieces(3, 3, 1.0, "population")
    with pytest.raises(ValueError):
        perturbative_psd(sd, m, np.linspace(-1, 2, 31))


def test_components_csv():
    sd, m = pieces(3, 3, 1.0, "population")
    ps = perturbative_psd(sd, m)
    rows = ps.components_csv().strip().splitlines()
    assert rows[0] == "i,j,omega_ij,Gamma_ij,weight,delta"
    assert len(rows) == 1 + len(ps.omega)


def test_fig1_scan_and_csv():
    scan = fig1_scan([0.5, 5.0], 3, 3, grid=default_grid(40, 801))
    assert set(scan) == {"coherence", "population"}
    for entries in scan.values():
        for e in entries:
            assert 0 <= e.fit.overlap <= 1
    text = fig1_csv(scan["coherence"])
    assert text.splitlines()[1] == "u_over_j,omega,S"
    assert len(text.splitlines()) == 2 + 2 * 801
