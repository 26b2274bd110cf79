import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtomo import kernels
from qtomo.detector_sim import QuadratureTable
from qtomo.multimode import kappa, laguerre_nodes, total_photon_weights
from oracles import random_state

compiled = pytest.mark.skipif(kernels.BACKEND_NAME != "compiled", reason="compiled kernels not built")


def both():
    return kernels.get_backend("python"), kernels.get_backend("compiled")


@compiled
@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), eta=st.floats(0.55, 1.0), nmax=st.integers(0, 7))
def test_joint_photon_backends_agree(seed, eta, nmax):
    g = np.random.default_rng(seed)
    x = g.normal(size=64)
    th = g.uniform(0, np.pi / 2, size=64)
    t, w = laguerre_nodes()
    py, cy = both()
    a = py.joint_photon_values(x, th, t, w, kappa(eta), nmax)
    b = cy.joint_photon_values(x, th, t, w, kappa(eta), nmax)
    np.testing.assert_allclose(b, a, rtol=1e-10, atol=1e-10 * np.abs(a).max())


@compiled
@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), eta=st.floats(0.55, 1.0))
def test_total_photon_backends_agree(seed, eta):
    x = np.random.default_rng(seed).normal(size=200) * 1.5
    t, wts = total_photon_weights(10, eta)
    py, cy = both()
    a = py.total_photon_values(x, t, wts, kappa(eta))
    b = cy.total_photon_values(x, t, wts, kappa(eta))
    np.testing.assert_allclose(b, a, rtol=1e-10, atol=1e-10 * np.abs(a).max())


@compiled
@settings(max_examples=10)
@given(seed=st.integers(0, 10_000))
def test_inverse_cdf_backends_agree(seed):
    rho = random_state(seed, dim=6)
    table = QuadratureTable.for_state(rho, step=1e-2)
    g = np.random.default_rng(seed)
    u = g.random(500)
    phi = g.random(500) * np.pi
    py, cy = both()
    a = py.trig_inverse_cdf(u, phi, table.cdf_re, table.cdf_im, table.grid)
    b = cy.trig_inverse_cdf(u, phi, table.cdf_re, table.cdf_im, table.grid)
    np.testing.assert_allclose(b, a, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_environment_forces_python_backend():
    env = dict(os.environ, QTOMO_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import qtomo; print(qtomo.BACKEND_NAME)"], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"


def test_set_threads_accepts_cap():
    kernels.set_threads(1)
