import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from phasescope.spectrum import (
    LorentzFit,
    Normalization,
    Spectrum,
    golden_section_max,
    lorentz_norm_constant,
    lorentz_overlap,
    lorentzian_filter,
    maximize_overlap,
    periodogram,
)
from phasescope.trajectory import MeasurementRecord, white_noise_record

GRID = np.linspace(-40, 40, 4001)


def lorentz_spectrum(width, grid=GRID):
    return Spectrum(grid, 1.0 / (width**2 + grid**2))


def test_constant_record():
    rec = MeasurementRecord(0.1, 0.01, np.full(1000, 0.3 * 0.01))
    s = periodogram(rec, remove_mean=False)
    zero = np.argmin(np.abs(s.frequencies))
    assert s.values[zero] > 0
    assert np.allclose(np.delete(s.values, zero), 0, atol=1e-20)
    assert np.allclose(periodogram(rec, remove_mean=True).values, 0, atol=1e-25)


def test_grid_and_cap():
    rec = white_noise_record(1.0, 0.01, 20.0, seed=0)
    s = periodogram(rec, omega_cap=5.0)
    assert s.step == pytest.approx(2 * math.pi / 20.0)
    assert np.max(np.abs(s.frequencies)) <= 5.0
    assert s.frequencies[len(s.frequencies) // 2] == 0


def test_mean_removal_only_touches_zero_bin():
    rec = white_noise_record(1.0, 0.01, 20.0, seed=1)
    rec.increments += 0.05
    a, b = periodogram(rec, remove_mean=False), periodogram(rec, remove_mean=True)
    zero = len(a.values) // 2
    assert b.values[zero] == pytest.approx(0, abs=1e-20)
    others = np.arange(len(a.values)) != zero
    assert np.allclose(a.values[others], b.values[others], rtol=1e-12, atol=0)


def test_parseval_consistency():
    rec = white_noise_record(0.7, 0.01, 10.0, seed=2)
    s = periodogram(rec, remove_mean=False, omega_cap=1e9)
    x = rec.increments
    n, total = len(x), rec.total_time
    fft = np.abs(np.fft.fft(x)) ** 2
    k = np.arange(-((n - 1) // 2), (n - 1) // 2 + 1)
    expected = (2 * math.pi / total) * fft[k % n].sum() / (rec.gamma * total)
    assert (s.values * s.step).sum() == pytest.approx(expected, rel=1e-10)


def test_zero_gamma_is_an_error():
    with pytest.raises(ZeroDivisionError):
        periodogram(MeasurementRecord(0.0, 0.01, np.zeros(10)))


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum(np.array([0.0, 1.0, 3.0]), np.ones(3))
    with pytest.raises(ValueError):
        Spectrum(GRID, -np.ones_like(GRID))
    with pytest.raises(ValueError):
        Spectrum(GRID, np.ones_like(GRID), Normalization.UNIT_L2)
    s = lorentz_spectrum(1.0).normalized()
    assert s.square_integral() == pytest.approx(1.0, abs=1e-12)


def test_norm_constant_matches_quadrature():
    from scipy.integrate import quad

    for width in (0.1, 1.0, 7.0):
        c = lorentz_norm_constant(width)
        val, _ = quad(lambda w: (c / (width**2 + w**2)) ** 2, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
        assert val == pytest.approx(1.0, abs=1e-8)


def test_filter_unit_norm_on_grid():
    w = np.full(GRID.size, GRID[1] - GRID[0])
    w[[0, -1]] /= 2
    assert w @ lorentzian_filter(GRID, 2.0) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_sampled_lorentzian_overlap_is_one():
    assert lorentz_overlap(lorentz_spectrum(1.0), 1.0) == pytest.approx(1.0, abs=1e-3)
    assert lorentz_overlap(lorentz_spectrum(1.0), 4.0) < 1 - 1e-3


def test_two_side_peaks_lose_to_central():
    # peaks at +-w0 with w0 >> Gamma for every tested Gamma
    w0 = 20.0
    side = 1.0 / (0.25 + (GRID - w0) ** 2) + 1.0 / (0.25 + (GRID + w0) ** 2)
    two = Spectrum(GRID, side)
    one = lorentz_spectrum(0.5)
    for width in np.geomspace(GRID[1] - GRID[0], w0 / 4, 12):
        assert lorentz_overlap(two, width) < lorentz_overlap(one, width)


def test_maximize_recovers_width():
    fit = maximize_overlap(lorentz_spectrum(1.0))
    assert fit.gamma_max == pytest.approx(1.0, abs=1e-3)
    assert fit.overlap == pytest.approx(1.0, abs=1e-3)
    assert not fit.boundary
    assert set(fit.to_dict()) >= {"gamma_max", "overlap", "boundary_flag", "iterations"}


def test_flat_spectrum_hits_boundary():
    fit = maximize_overlap(Spectrum(GRID, np.ones_like(GRID)))
    assert fit.boundary
    assert fit.gamma_max == pytest.approx(20.0, rel=1e-3)


def test_golden_section():
    x, fx, _ = golden_section_max(lambda t: -(t - 0.3) ** 2, -2, 2, 1e-8)
    assert x == pytest.approx(0.3, abs=1e-7)


def test_invalid_width():
    with pytest.raises(ValueError):
        lorentz_overlap(lorentz_spectrum(1.0), 0.0)


def test_csv_roundtrip():
    rec = white_noise_record(1.0, 0.01, 10.0, seed=4)
    s = periodogram(rec)
    back = Spectrum.from_csv(s.to_csv())
    assert np.array_equal(back.frequencies, s.frequencies)
    assert np.array_equal(back.values, s.values)
    assert back.mean_removed and back.meta["record"] == rec.digest()


small_grid = np.linspace(-10, 10, 201)


@given(arrays(float, 201, elements=st.floats(0, 1e3)), st.floats(0.1, 20))
@settings(max_examples=200, deadline=None)
def test_overlap_bounded_by_one(values, width):
    if values.max() <= 0:
        return
    f = lorentz_overlap(Spectrum(small_grid, values), width)
    assert 0 <= f <= 1 + 1e-12
