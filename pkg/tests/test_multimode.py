import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qtomo.detector_sim import DataSet, sample_twin_beam_homodyne, twin_beam_quadrature_variance
from qtomo.errors import DomainError, EtaOutOfDomain
from qtomo.multimode import (
    joint_photon_table,
    kappa,
    kernel_joint_photon,
    kernel_mm_matrix_element,
    kernel_total_photon,
    mm_element_values,
    mode_weights,
    reconstruct_joint_pmf,
    reconstruct_total_photon,
    total_photon_moments,
)


def _records(x, theta, p0, p1, w, eta):
    flat = [np.asarray(a, dtype=float).reshape(-1) for a in (x, theta, p0, p1, w)]
    data = DataSet(flat[0], np.zeros(flat[0].size), eta, None, "single_lo", flat[1], flat[2], flat[3])
    return data, flat[4]


def _theta_rule(count):
    # cos(2 theta) uniform on [-1, 1] means density sin(2 theta) on [0, pi/2]
    t, w = np.polynomial.legendre.leggauss(count)
    theta = 0.25 * math.pi * (t + 1)
    return theta, 0.25 * math.pi * w * np.sin(2 * theta)


def coherent_dataset(alpha, beta, eta=1.0, x_nodes=60, theta_nodes=24, psi_nodes=16):
    """Product quadrature rule over (theta, psi0, psi1, x) for displaced vacua."""
    theta, wt = _theta_rule(theta_nodes)
    psi = 2 * math.pi * np.arange(psi_nodes) / psi_nodes
    u, wu = np.polynomial.hermite.hermgauss(x_nodes)
    th, p0, p1, uu = np.meshgrid(theta, psi, psi, u, indexing="ij")
    w = wt[:, None, None, None] / psi_nodes**2 * (wu / math.sqrt(math.pi))[None, None, None, :] * np.ones_like(th)
    mean = np.cos(th) * np.real(alpha * np.exp(-1j * p0)) + np.sin(th) * np.real(beta * np.exp(-1j * p1))
    var = twin_beam_quadrature_variance(0.0, th, p0, p1, eta)
    return _records(mean + np.sqrt(2 * var) * uu, th, p0, p1, w, eta)


def quadrature_dataset(xi=0.0, eta=1.0, x_nodes=160, theta_nodes=32, sum_nodes=48, diff_nodes=1):
    """Records on a product quadrature rule with weights whose weighted kernel sums are exact expectations.

    The angles are (theta, s = psi0 + psi1, psi1): a twin beam's quadrature
    law depends on the phases only through s, and the kernels checked here
    are trigonometric polynomials of low degree in psi1 at fixed s.
    """
    theta, wt = _theta_rule(theta_nodes)
    s = 2 * math.pi * np.arange(sum_nodes) / sum_nodes
    q = 2 * math.pi * np.arange(diff_nodes) / diff_nodes
    u, wu = np.polynomial.hermite.hermgauss(x_nodes)
    th, ss, p1, uu = np.meshgrid(theta, s, q, u, indexing="ij")
    p0 = ss - p1
    w = wt[:, None, None, None] / (sum_nodes * diff_nodes) * (wu / math.sqrt(math.pi))[None, None, None, :] * np.ones_like(th)
    var = twin_beam_quadrature_variance(xi, th, p0, p1, eta)
    return _records(np.sqrt(2 * var) * uu, th, p0, p1, w, eta)


def exact(est, data, weights):
    total = 0j
    for start in range(0, len(data), 20_000):
        total += np.sum(est.values(data.slice(start, start + 20_000)) * weights[start : start + 20_000])
    return complex(total)


def weighted_table(data, weights, eta, nmax):
    total = 0
    for start in range(0, len(data), 20_000):
        part = data.slice(start, start + 20_000)
        table = joint_photon_table(part.x, part.theta, eta, nmax)
        total = total + np.einsum("i,inm->nm", weights[start : start + 20_000], table)
    return total


def poisson(mu2, n):
    return math.exp(-mu2) * mu2**n / math.factorial(n)


def coherent_amp(a, n):
    return math.exp(-abs(a) ** 2 / 2) * a**n / math.sqrt(math.factorial(n))


def test_kappa_values():
    assert kappa(1.0) == 2.0
    assert kappa(0.9) == pytest.approx(1.8 / 0.8)
    assert kappa(0.51) > 2
    with pytest.raises(EtaOutOfDomain):
        kappa(0.5)


@given(st.lists(st.floats(0, math.pi / 2), min_size=1, max_size=6))
def test_mode_weights_unit_norm(angles):
    u = mode_weights(np.array([angles]))
    assert abs(np.sum(u**2) - 1.0) < 1e-14


def test_mode_weights_two_modes():
    u = mode_weights(np.array([0.3, 1.1]))
    np.testing.assert_allclose(u, np.column_stack([np.cos([0.3, 1.1]), np.sin([0.3, 1.1])]), atol=1e-15)


@pytest.mark.parametrize("eta", [1.0, 0.85])
@pytest.mark.parametrize(
    "n, m",
    [((0, 0), (0, 0)), ((1, 0), (1, 0)), ((1, 2), (1, 2)), ((1, 0), (0, 0)), ((0, 1), (2, 0)), ((2, 1), (1, 1))],
)
def test_mm_element_exact_on_coherent_product(n, m, eta):
    a, b = 0.7 + 0.2j, -0.3 + 0.5j
    data, w = coherent_dataset(a, b, eta)
    got = exact(kernel_mm_matrix_element(n, m, eta), data, w)
    truth = coherent_amp(a, n[0]) * coherent_amp(b, n[1]) * np.conj(coherent_amp(a, m[0]) * coherent_amp(b, m[1]))
    assert got == pytest.approx(truth, abs=1e-8)


# Gauss-Laguerre nodes integrate the odd part sin(2 sqrt(kappa t) x), which is not
# smooth in t, less accurately; its exact average is zero and it is only a diagnostic.
@pytest.mark.parametrize("n, m", [((0, 0), (0, 0)), ((1, 1), (1, 1)), ((0, 0), (1, 1)), ((2, 2), (1, 1)), ((1, 0), (0, 1))])
def test_mm_element_exact_on_twin_beam(n, m):
    xi = 0.5 * np.exp(0.4j)
    # the phase factor depends on psi1 at fixed psi0 + psi1 only when n - m differs between modes
    diff = 1 if n[0] - m[0] == n[1] - m[1] else 4
    data, w = quadrature_dataset(xi, 0.9, diff_nodes=diff)
    got = exact(kernel_mm_matrix_element(n, m, 0.9), data, w)
    if n[0] == n[1] and m[0] == m[1]:
        truth = (1 - abs(xi) ** 2) * xi ** n[0] * np.conj(xi) ** m[0]
    else:
        truth = 0.0
    assert got == pytest.approx(truth, abs=1e-8)


def test_diagonal_mm_kernel_equals_joint_photon_kernel():
    data = sample_twin_beam_homodyne(0.4, 500, seed=1)
    for n, m in [(0, 0), (2, 1), (3, 4)]:
        a = kernel_mm_matrix_element((n, m), (n, m), 0.8).values(data)
        b = kernel_joint_photon(n, m, 0.8).values(data)
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_diagonal_mm_kernel_phase_independent():
    th = np.full((5, 1), 0.6)
    x = np.linspace(-1, 1, 5)
    p1 = np.zeros((5, 2))
    p2 = np.column_stack([np.linspace(0, 6, 5), np.linspace(3, 1, 5)])
    np.testing.assert_allclose(
        mm_element_values((1, 2), (1, 2), 0.9, x, th, p1), mm_element_values((1, 2), (1, 2), 0.9, x, th, p2), atol=1e-13
    )


def test_mm_kernel_argument_errors():
    with pytest.raises(DomainError):
        mm_element_values((1,), (1,), 1.0, [0.0], [[0.1]], [[0.0, 0.0]])
    with pytest.raises(DomainError):
        kernel_mm_matrix_element((0, 0), (0, 0), 1.0).values(DataSet(np.zeros(2), np.zeros(2)))
    with pytest.raises(EtaOutOfDomain):
        kernel_joint_photon(0, 0, 0.5)


@pytest.mark.parametrize("eta", [1.0, 0.9])
def test_joint_pmf_exact_on_twin_beam(eta):
    xi = 0.6
    data, w = quadrature_dataset(xi, eta)
    p = weighted_table(data, w, eta, 5)
    truth = np.diag([(1 - xi**2) * xi ** (2 * n) for n in range(6)])
    np.testing.assert_allclose(p.real, truth, atol=1e-7)
    np.testing.assert_allclose(p.imag, 0, atol=1e-5)


@pytest.mark.parametrize("eta", [1.0, 0.75])
def test_total_photon_exact(eta):
    xi = 0.6
    data, w = quadrature_dataset(xi, eta)
    for n in range(7):
        got = exact(kernel_total_photon(n, eta), data, w)
        truth = (1 - xi**2) * xi**n if n % 2 == 0 else 0.0
        assert got.real == pytest.approx(truth, abs=1e-7)
        assert abs(got.imag) < 1e-5
    a, b = 0.8, 0.5j
    data, w = coherent_dataset(a, b, eta)
    mu = abs(a) ** 2 + abs(b) ** 2
    for n in range(5):
        got = exact(kernel_total_photon(n, eta), data, w)
        assert got.real == pytest.approx(poisson(mu, n), abs=1e-8)
        assert abs(got.imag) < 1e-5


@pytest.mark.parametrize("eta", [1.0, 0.9, 0.7])
def test_total_moments_exact(eta):
    xi2 = 2 / 3  # two photons per beam
    data, w = quadrature_dataset(math.sqrt(xi2), eta)
    first, second = total_photon_moments(data, eta)
    # recompute the per-record values through the public averages on reweighted data
    k = kappa(eta)
    x2 = data.x**2
    f = 4 * x2 + 2 / k - 2
    s = 8 * x2 * x2 + (24 / k - 20) * x2 + 6 / k**2 - 10 / k + 4
    nbar = xi2 / (1 - xi2)
    assert np.sum(w * f) == pytest.approx(2 * nbar, abs=1e-9)
    assert np.sum(w * s) == pytest.approx(4 * (2 * nbar**2 + nbar), abs=1e-8)


def test_joint_photon_node_refinement():
    data = sample_twin_beam_homodyne(0.5, 300, eta=0.9, seed=3)
    a = joint_photon_table(data.x, data.theta, 0.9, 6, nodes=150)
    b = joint_photon_table(data.x, data.theta, 0.9, 6, nodes=300)
    assert np.max(np.abs(a - b)) < 1e-7 * np.max(np.abs(b))


def test_joint_photon_against_arbitrary_precision():
    g = np.random.default_rng(7)
    for _ in range(5):
        x = float(g.normal() * 0.7)
        th = float(g.uniform(0, math.pi / 2))
        n, m = int(g.integers(0, 4)), int(g.integers(0, 4))
        ref = 4 * mp.quad(
            lambda t: mp.exp(-t + 2j * mp.sqrt(2 * t) * x) * t * mp.laguerre(n, 0, 2 * t * mp.cos(th) ** 2) * mp.laguerre(m, 0, 2 * t * mp.sin(th) ** 2),
            [0, 20, 60, mp.inf],
        )
        got = joint_photon_table(np.array([x]), np.array([th]), 1.0, 3)[0, n, m]
        assert got.real == pytest.approx(float(ref.real), abs=1e-10)
        assert got.imag == pytest.approx(float(ref.imag), abs=1e-5)


def test_two_mode_vacuum_monte_carlo():
    data = sample_twin_beam_homodyne(0.0, 100_000, seed=4)
    res = kernel_mm_matrix_element((0, 0), (0, 0), 1.0)
    from qtomo.estimators import average

    r = average(res, data)
    assert r.consistent_with(1.0, 3.0)
    pmf = reconstruct_joint_pmf(data, 2)
    assert abs(pmf.p[0, 0] - 1) < 4 * pmf.stderr[0, 0]
    tot = reconstruct_total_photon(data, 2)
    assert abs(tot.p[0] - 1) < 4 * tot.stderr[0]
    first, _ = total_photon_moments(data)
    assert first.consistent_with(0.0)


def test_twin_beam_monte_carlo(tmp_path):
    xi = math.sqrt(2 / 3)
    data = sample_twin_beam_homodyne(xi, 200_000, eta=0.9, seed=5)
    pmf = reconstruct_joint_pmf(data, 4)
    truth = np.diag([(1 - xi**2) * xi ** (2 * n) for n in range(5)])
    assert np.all(np.abs(pmf.p - truth) < 4 * pmf.stderr)
    # marginals: thermal with two photons per beam
    marg = pmf.p.sum(axis=1)
    thermal = np.array([(1 / 3) * (2 / 3) ** n for n in range(5)])
    assert np.all(np.abs(marg - thermal) < 4 * np.sqrt(np.sum(pmf.stderr**2, axis=1)))
    first, second = total_photon_moments(data)
    assert first.consistent_with(4.0)
    assert second.consistent_with(4 * (2 * 4 + 2))
    tot = reconstruct_total_photon(data, 16)
    assert abs(tot.p.sum() - 1) < 4 * np.sqrt(np.sum(tot.stderr**2))
    path = pmf.save_csv(tmp_path / "pmf.csv")
    assert path.read_text().splitlines()[0] == "n,m,p,stderr"
