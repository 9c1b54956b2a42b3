"""Compiled and pure-Python kernels must agree step for step."""

import numpy as np
import pytest

from phasescope import kernels
from phasescope.model import ModelSpec, build_hamiltonian, build_measurement, coherence_operator, ground_state
from phasescope.trajectory import Scheme, integrate, standard_normals

needs_compiled = pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled kernels not built")


@pytest.fixture(scope="module")
def system():
    spec = ModelSpec(3, 3, u_over_j=2.0, measurement_kind="population")
    h = build_hamiltonian(spec)
    m = build_measurement(spec)
    return h, m, ground_state(h), coherence_operator(h.basis)


def test_backend_selection():
    assert kernels.get_backend("python") is kernels.python_backend
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    assert kernels.BACKEND in ("cython", "python")


@needs_compiled
@pytest.mark.parametrize("scheme,dt", [(Scheme.SPLIT_STEP, 0.01), (Scheme.EULER_MARUYAMA, 5e-4)])
def test_backends_agree(system, scheme, dt):
    h, m, psi0, coh = system
    xi = standard_normals(3, 2000)
    out = {}
    for name in ("cython", "python"):
        out[name] = integrate(h, m, psi0, dt=dt, gamma=0.3, normals=xi, scheme=scheme,
                              observables={"coh": coh}, references={"gs": psi0}, log_stride=7, backend=name)
    for a, b in zip(out["cython"], out["python"]):
        assert np.allclose(a, b, rtol=1e-9, atol=1e-11)


@needs_compiled
def test_render_lorentzians_agree():
    rng = np.random.default_rng(0)
    c, w, a = rng.normal(size=50), rng.uniform(0.01, 2, 50), rng.uniform(0, 1, 50)
    grid = np.linspace(-5, 5, 301)
    assert np.allclose(kernels.get_backend("cython").render_lorentzians(c, w, a, grid),
                       kernels.python_backend.render_lorentzians(c, w, a, grid), rtol=1e-12)


def test_render_single_lorentzian():
    grid = np.linspace(-3, 3, 7)
    out = kernels.python_backend.render_lorentzians(np.array([0.0]), np.array([1.0]), np.array([2.0]), grid)
    assert np.allclose(out, 2.0 / (grid**2 + 1))


def test_status_codes_exported():
    assert (kernels.STATUS_OK, kernels.STATUS_NORM_COLLAPSE, kernels.STATUS_NONFINITE) == (0, 1, 2)
