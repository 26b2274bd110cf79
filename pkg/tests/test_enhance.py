import math

import numpy as np
import pytest

from oracles import phase_space_average, random_state
from qtomo.detector_sim import sample_homodyne
from qtomo.enhance import NullEstimatorBasis, adaptive_optimize, deconvolve_estimator, depolarizing_inverse
from qtomo.errors import Divergent, DomainError
from qtomo.estimators import average, kernel_factorized, kernel_matrix_element, kernel_observable
from qtomo.states import StateSpec, make_state

SZ = np.diag([1.0, -1.0]).astype(complex)


def test_deconvolve_identity_at_unit_efficiency():
    est = kernel_observable("n")
    same = deconvolve_estimator(est, 1.0)
    x = np.linspace(-3, 3, 13)
    phi = np.linspace(0, 3, 13)
    np.testing.assert_array_equal(same(x, phi), est(x, phi))


@pytest.mark.parametrize("eta", [0.6, 0.8, 0.95])
def test_deconvolve_photon_number(eta):
    got = deconvolve_estimator(kernel_observable("n"), eta)
    x = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(got(x, 0 * x).real, 2 * x**2 - 1 / (2 * eta), atol=1e-12)
    assert got.eta_domain == (eta, eta)


@pytest.mark.parametrize("n,d", [(0, 0), (1, 2), (3, 1), (2, 4)])
def test_deconvolve_matrix_kernel_matches_direct(n, d):
    got = deconvolve_estimator(kernel_matrix_element(n, d, 1.0), 0.8)
    ref = kernel_matrix_element(n, d, 0.8)
    x = np.linspace(-5, 5, 41)
    phi = np.linspace(0, math.pi, 41)
    np.testing.assert_allclose(got(x, phi), ref(x, phi), atol=1e-6)


def test_deconvolve_divergent():
    with pytest.raises(Divergent):
        deconvolve_estimator(kernel_factorized(0, 0), 0.8)
    with pytest.raises(Divergent):
        deconvolve_estimator(kernel_matrix_element(0, 0, 1.0), 0.5)


def test_depolarizing_examples():
    np.testing.assert_allclose(depolarizing_inverse(0.0)(SZ), SZ)
    np.testing.assert_allclose(depolarizing_inverse(0.5)(SZ), 2 * SZ)
    np.testing.assert_allclose(depolarizing_inverse(0.3)(np.eye(2)), np.eye(2), atol=1e-15)
    with pytest.raises(DomainError):
        depolarizing_inverse(1.0)


def test_depolarizing_round_trip(rng):
    p = 0.35
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    forward = (1 - p) * a + p * np.trace(a) * np.eye(2) / 2
    np.testing.assert_allclose(depolarizing_inverse(p)(forward), a, atol=1e-13)


@pytest.mark.parametrize("eta", [1.0, 0.8])
def test_null_estimators_average_to_zero_exactly(eta):
    rho = random_state(5, dim=6)
    basis = NullEstimatorBasis.default()
    for i in range(0, len(basis), 3):
        got = phase_space_average(basis.estimator(i), rho, eta, half_width=10, x_points=4001, phases=64)
        assert abs(got) < 1e-9


def test_null_estimators_average_to_zero_on_data():
    rho = make_state(StateSpec.coherent(1.0 + 0.5j))
    data = sample_homodyne(rho, 40_000, 0.9, seed=3)
    basis = NullEstimatorBasis.default(kmax=4, nmax=3)
    for i in range(len(basis)):
        r = average(basis.estimator(i), data, check_eta=False)
        assert abs(r.mean.real) < 4 * r.stderr_re + 1e-12
        assert abs(r.mean.imag) < 4 * r.stderr_im + 1e-12


def test_adaptive_lowers_variance():
    rho = make_state(StateSpec.coherent(1.2))
    data = sample_homodyne(rho, 20_000, 1.0, seed=11)
    res = adaptive_optimize(kernel_observable("n"), data)
    assert res.variance_after <= res.variance_before
    assert len(res.nu) == len(NullEstimatorBasis.default())


def test_adaptive_fit_of_second_harmonic():
    alpha = 1.2
    rho = make_state(StateSpec.coherent(alpha))
    basis = NullEstimatorBasis(((0, 0, 1), (0, 0, -1)))
    fits = []
    for seed in range(10):
        data = sample_homodyne(rho, 20_000, 1.0, seed=100 + seed)
        fits.append(adaptive_optimize(kernel_observable("n"), data, basis).nu[0])
    fits = np.array(fits)
    err = fits.real.std(ddof=1) / math.sqrt(len(fits))
    assert abs(fits.real.mean() + alpha**2 / 2) < 4 * err
    assert abs(fits.imag.mean()) < 4 * fits.imag.std(ddof=1) / math.sqrt(len(fits))


def test_adaptive_unbiased_on_held_out_data():
    rho = make_state(StateSpec.coherent(0.8 + 0.4j))
    train = sample_homodyne(rho, 20_000, 0.9, seed=21)
    test = sample_homodyne(rho, 60_000, 0.9, seed=22)
    res = adaptive_optimize(kernel_observable("n", 0.9), train)
    r = average(res.estimator, test)
    assert abs(r.mean.real - abs(0.8 + 0.4j) ** 2) < 4 * r.stderr_re


def test_adaptive_empty_basis():
    rho = make_state(StateSpec.vacuum())
    data = sample_homodyne(rho, 2000, 1.0, seed=1)
    est = kernel_observable("n")
    res = adaptive_optimize(est, data, NullEstimatorBasis(()))
    assert res.estimator is est
    assert res.variance_after == res.variance_before
