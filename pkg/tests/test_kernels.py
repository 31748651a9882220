import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semlink import _pykernels as py
from semlink import kernels

cy = kernels.compiled_backend
needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")

D, RC = 1024, 0.4375


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    assert (kernels.BACKEND == "cython") == (cy is not None)


def test_env_var_forces_python_backend():
    code = "from semlink import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, SEMLINK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_pointwise_functions_agree():
    rng = np.random.default_rng(0)
    p = rng.uniform(0, 4, 500)
    g = rng.exponential(1.0, 500)
    g[:5] = 0.0
    np.testing.assert_allclose(cy.q_func(np.linspace(-9, 9, 50)), py.q_func(np.linspace(-9, 9, 50)),
                               rtol=1e-13, atol=1e-300)
    np.testing.assert_allclose(cy.rho_hat_vec(p, g, D, RC), py.rho_hat_vec(p, g, D, RC), rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(cy.surrogate_vec(p, g, D, RC), py.surrogate_vec(p, g, D, RC), rtol=1e-12, atol=1e-300)
    w = rng.uniform(0, 5, 500)
    assert cy.weighted_surrogate(p, w, g, D, RC) == pytest.approx(py.weighted_surrogate(p, w, g, D, RC), rel=1e-12)
    assert cy.weighted_rho_hat(p, w, g, D, RC) == pytest.approx(py.weighted_rho_hat(p, w, g, D, RC), rel=1e-12)


@needs_ext
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.integers(0, 2**32 - 1), st.floats(0.1, 5))
def test_dual_allocate_agrees(b, seed, p_ave):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.01, 10, b)
    g = rng.exponential(1.0, b)
    pc, _, _ = cy.dual_allocate(w, g, b * p_ave, D, RC)
    pp, _, _ = py.dual_allocate(w, g, b * p_ave, D, RC)
    np.testing.assert_allclose(pc, pp, rtol=1e-8, atol=1e-9 * b * p_ave)


@pytest.mark.parametrize("backend", [py, pytest.param(cy, marks=needs_ext)], ids=["python", "cython"])
def test_dual_allocate_ties_split_evenly(backend):
    p, _, _ = backend.dual_allocate(np.ones(4), np.full(4, 0.5), 4.0, D, RC)
    np.testing.assert_allclose(p, 1.0, atol=1e-9)
