"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line naming its criterion; run with
``pytest -m acceptance -s`` to see them.  Two criteria are unattainable
at their stated tolerance and are strict xfails; the reasons are in the
decisions ledger.
"""

import math

import numpy as np
import pytest
from scipy.special import eval_laguerre

from qtomo.applications import (
    ReducedStateSpec,
    c_theory,
    estimate_process_matrix,
    sample_reduced_state,
    sr_fidelity,
    test_b as run_b_test,
    test_c as run_c_test,
)
from qtomo.detector_sim import (
    heterodyne_moment,
    sample_gaussian_homodyne,
    sample_heterodyne,
    sample_homodyne,
    sample_twin_beam_homodyne,
    sample_twin_beam_two_channel,
)
from qtomo.errors import EtaBoundViolation
from qtomo.estimators import average, kernel_factorized, kernel_matrix_element, kernel_observable, reconstruct_matrix
from qtomo.imaging import (
    disc_matrix,
    disc_profiles,
    equally_spaced_angles,
    hilbert_distance,
    image_reconstruct,
    profile_reconstruct,
    rhocircle,
    sample_spots,
)
from qtomo.maxlik import GaussianStateParams, gaussian_density_matrix, ml_gaussian_fit, ml_reconstruct, overlap, squeezed_thermal_pn
from qtomo.multimode import reconstruct_joint_pmf, reconstruct_total_photon
from qtomo.states import GaussianState, StateSpec, make_state, quadrature_pdf, wigner_grid

pytestmark = pytest.mark.acceptance

XI2_NBAR5 = 5 / 7


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------- 1. error saturation


def test_error_saturation():
    n = 100_000
    data = sample_homodyne(make_state(StateSpec.coherent(math.sqrt(2))), n, 1.0, seed=101)
    rec = reconstruct_matrix(data, 16)
    err = np.diag(rec.stderr)[8:]
    ratio = err / math.sqrt(2 / n)
    report("1", bool(np.all(np.abs(ratio - 1) <= 0.3)), f"stderr/sqrt(2/N) for n=8..15 in [{ratio.min():.3f}, {ratio.max():.3f}]")


# ---------------------------------------------------------------- 2. twin-beam joint pmf


def test_twin_beam_joint_pmf():
    data = sample_twin_beam_homodyne(math.sqrt(XI2_NBAR5), 1_000_000, 1.0, seed=102)
    pmf = reconstruct_joint_pmf(data, 8)
    n = np.arange(9)
    truth = np.diag((1 - XI2_NBAR5) * XI2_NBAR5**n)
    z = np.abs(pmf.p - truth) / pmf.stderr
    off = ~np.eye(9, dtype=bool)
    diag_ok = bool(np.all(np.diag(z) <= 4))
    frac = float(np.mean(z[off] <= 4))
    report("2", diag_ok and frac >= 0.95, f"max diagonal |z| = {np.diag(z).max():.2f}, off-diagonal consistent with 0: {frac:.1%}")


# ---------------------------------------------------------------- 3. total-photon oscillations


def test_total_photon_odd_entries_vanish():
    data = sample_twin_beam_homodyne(math.sqrt(0.5), 10_000_000, 0.9, seed=103)
    tot = reconstruct_total_photon(data, 8)
    odd = np.arange(1, 9, 2)
    z = np.abs(tot.p[odd]) / tot.stderr[odd]
    report("3", bool(np.all(z <= 4)), f"|p(odd)|/stderr = {np.array2string(z, precision=2)}")


# ---------------------------------------------------------------- 4. nonclassicality B


@pytest.fixture(scope="module")
def cat_b_report():
    data = sample_homodyne(make_state(StateSpec.cat(math.sqrt(5))), 10_000_000, 0.8, seed=104)
    return run_b_test(data, 9, mode="noisy_state")


@pytest.mark.xfail(strict=True, reason="B(0) of the lossy even cat is positive; see decisions ledger")
def test_cat_b0_negative(cat_b_report):
    b0, e0 = cat_b_report.values[0], cat_b_report.stderr[0]
    report("4 (cat)", bool(b0 < -5 * e0), f"B(0) = {b0:.5f} +- {e0:.5f}; needs < -5 sigma")


def test_cat_b_nonclassical_elsewhere(cat_b_report):
    # the lossy cat is still flagged, at B(1) and B(3)
    z = cat_b_report.values / cat_b_report.stderr
    report("4 (cat, other n)", cat_b_report.verdict >= 1, f"B(n)/stderr = {np.array2string(z, precision=1)}")


def test_coherent_b_control():
    data = sample_homodyne(make_state(StateSpec.coherent(math.sqrt(5))), 2_000_000, 0.8, seed=105)
    rep = run_b_test(data, 9, mode="noisy_state")
    z = np.abs(rep.values) / rep.stderr
    report("4 (control)", bool(np.all(z[:7] < 4)), f"|B(n)|/stderr for n <= 6: max {z[:7].max():.2f}")


# ---------------------------------------------------------------- 5. nonclassicality C


def test_c_over_efficiency_scan():
    etas = np.round(np.arange(1.0, 0.299, -0.05), 2)
    worst = 0.0
    last = None
    for k, eta in enumerate(etas):
        rep = run_c_test(sample_twin_beam_two_channel(math.sqrt(0.5), 400_000, float(eta), seed=500 + k), target="lossy")
        c, err = float(rep.values[0]), float(rep.stderr[0])
        assert c_theory(0.5, float(eta)) == pytest.approx(-2 * eta**2)
        worst = max(worst, abs(c + 2 * eta**2) / err)
        last = (c, err)
    separated = abs(last[0]) > 5 * last[1]
    report("5", worst <= 4 and separated, f"max |C - (-2 eta^2)|/stderr = {worst:.2f}; at eta=0.3 C = {last[0]:.4f} +- {last[1]:.4f}")


# ---------------------------------------------------------------- 6. state-reduction fidelity


def test_state_reduction_fidelity():
    spec = ReducedStateSpec("heterodyne", xi=math.sqrt(0.5), eta_r=0.8, alpha=0.5)
    data = sample_reduced_state(spec, 10_000, 0.9, seed=106)
    res = sr_fidelity(spec, data)
    theory = spec.eta_xi / (2 - spec.eta_xi)
    assert res.theory == pytest.approx(theory)
    with pytest.raises(EtaBoundViolation):
        sr_fidelity(spec, data, eta_h=spec.eta_xi / 2 - 0.01)
    ok = abs(res.fidelity - theory) <= 4 * res.stderr
    report("6", ok, f"F = {res.fidelity:.4f} +- {res.stderr:.4f}, theory {theory:.4f}; bound violation raised")


# ---------------------------------------------------------------- 7. process tomography


def test_displacement_process_amplitudes():
    pm = estimate_process_matrix(1.0, math.sqrt(XI2_NBAR5), 0.9, 1_500_000, cutoff=7, seed=107, n_blocks=150)
    n = np.arange(7)
    theory = math.exp(-0.5) * np.abs(eval_laguerre(n, 1.0))
    z = np.abs(pm.amplitudes[:7] - theory) / pm.amplitude_stderr[:7]
    report("7", bool(np.all(z <= 4)), f"|A_nn - theory|/stderr = {np.array2string(z, precision=2)}")


# ---------------------------------------------------------------- 8. ML density matrices


@pytest.mark.parametrize(
    "label,spec",
    [
        ("coherent", StateSpec.coherent(1.0)),
        ("squeezed vacuum", StateSpec.squeezed_thermal(0.0, math.asinh(math.sqrt(0.5)))),
    ],
)
def test_ml_reconstruction(label, spec):
    truth = make_state(spec)
    data = sample_homodyne(truth, 50_000, 0.8, seed=108)
    res = ml_reconstruct(data, 8, seed=1)
    ov = overlap(res.state, truth)
    report(f"8 ({label})", ov >= 0.99, f"overlap {ov:.5f}")


# ---------------------------------------------------------------- 9. Gaussian ML


def test_gaussian_ml_fit():
    r = math.asinh(math.sqrt(3.0))
    truth = GaussianState.from_params(n_th=0.1, r=r)
    data = sample_gaussian_homodyne(truth, 50_000, 0.8, seed=109)
    fit = ml_gaussian_fit(data, seed=1)
    ov = overlap(fit.params, truth)
    p_fit, e_fit = fit.photon_pmf(8)
    p_true = np.array([squeezed_thermal_pn(k, 0.1, r) for k in range(9)])
    tomo = reconstruct_matrix(data, 9)
    p_tomo, e_tomo = np.diag(tomo.rho.entries).real, np.diag(tomo.stderr)
    z_truth = np.abs(p_fit - p_true) / e_fit
    z_tomo = np.abs(p_fit - p_tomo) / np.hypot(e_fit, e_tomo)
    ok = ov >= 0.995 and np.all(z_truth <= 3) and np.all(z_tomo <= 3)
    report("9", bool(ok), f"overlap {ov:.5f}; pmf max z vs truth {z_truth.max():.2f}, vs tomography {z_tomo.max():.2f}")


# ---------------------------------------------------------------- 10. added noise


def _complex_variance(values) -> float:
    v = np.asarray(values)
    return 0.5 * float(np.mean(np.abs(v - v.mean()) ** 2))


@pytest.mark.parametrize("nbar", [1.0, 4.0])
@pytest.mark.parametrize("eta", [0.8, 1.0])
def test_added_noise_ratios(nbar, eta):
    alpha = math.sqrt(nbar)
    n = 400_000
    state = GaussianState.from_params(mu=alpha)
    hom = sample_gaussian_homodyne(state, n, eta, seed=110)
    w_a = kernel_observable("a", eta).values(hom)
    w_x = 2 * hom.x * np.cos(hom.phi)
    het = sample_heterodyne(state, n, eta, seed=111)
    direct = sample_homodyne(make_state(StateSpec.coherent(alpha)), n, eta, seed=112, fixed_phase=0.0)
    delta_a = math.sqrt(_complex_variance(w_a) / _complex_variance(het))
    delta_x = math.sqrt(np.var(w_x) / np.var(direct.x))
    ref_a = math.sqrt(1 + eta * nbar)
    ref_x = math.sqrt(2 * (1 + eta * nbar))
    ok = abs(delta_a / ref_a - 1) <= 0.05 and abs(delta_x / ref_x - 1) <= 0.05
    report(f"10 (nbar={nbar:g}, eta={eta:g})", ok, f"delta_a {delta_a:.4f} vs {ref_a:.4f}, delta_x {delta_x:.4f} vs {ref_x:.4f}")


def _variance_with_error(v):
    v = np.asarray(v, dtype=float)
    c = v - v.mean()
    var = float(np.mean(c**2))
    return var, math.sqrt(max(float(np.mean(c**4)) - var**2, 0.0) / v.size)


@pytest.mark.parametrize("eta", [0.8, 1.0])
def test_photon_number_crossover(eta):
    threshold = 0.5 * (1 + math.sqrt(1 + 4 / eta**2))
    n = 400_000
    lines = []
    ok = True
    for nbar in (0.5, 4.0):
        state = GaussianState.from_params(mu=math.sqrt(nbar))
        hom = sample_gaussian_homodyne(state, n, eta, seed=113)
        het = sample_heterodyne(state, n, eta, seed=114)
        v_hom, e_hom = _variance_with_error(kernel_observable("n", eta).values(hom).real)
        v_het, e_het = _variance_with_error(np.abs(het) ** 2 - 1 / eta)
        het_better = v_het < v_hom
        separated = abs(v_het - v_hom) > 4 * math.hypot(e_hom, e_het)
        ok = ok and separated and het_better == (nbar > threshold)
        lines.append(f"nbar={nbar:g}: hom {v_hom:.3f}, het {v_het:.3f}")
    report(f"10 (crossover, eta={eta:g}, threshold {threshold:.3f})", ok, "; ".join(lines))


# ---------------------------------------------------------------- 11. imaging


@pytest.fixture(scope="module")
def disc_spot_run():
    pr = disc_profiles(equally_spaced_angles(100), x=np.linspace(-1.05, 1.05, 2101))
    spots = sample_spots(pr, 10_000, seed=115)
    return image_reconstruct(spots, 32)


@pytest.fixture(scope="module")
def exact_disc():
    return disc_matrix(332)


def test_disc_diagonal_matches_closed_form(disc_spot_run):
    diag = disc_spot_run.rho.diagonal().real[:17]
    err = np.diag(disc_spot_run.stderr)[:17]
    ref = np.array([rhocircle(k) for k in range(17)])
    z = np.abs(diag - ref) / err
    report("11a", bool(np.all(z <= 4)), f"max |rho_nn - closed form|/stderr for n <= 16: {z.max():.2f}")


def test_disc_distance_decreases(exact_disc):
    prof = disc_profiles(equally_spaced_angles(100))
    dist = [hilbert_distance(exact_disc, profile_reconstruct(prof, d)) for d in (4, 8, 16, 32)]
    ok = all(b < a for a, b in zip(dist, dist[1:]))
    report("11b", ok, "D = " + ", ".join(f"{d:.4f}" for d in dist))


@pytest.mark.xfail(strict=True, reason="truncation tail alone exceeds 0.05 D(2); see decisions ledger")
def test_disc_spot_distance_ratio(disc_spot_run, exact_disc):
    d2 = hilbert_distance(exact_disc, profile_reconstruct(disc_profiles(equally_spaced_angles(100)), 2))
    d32 = hilbert_distance(exact_disc, disc_spot_run.rho)
    report("11c", d32 < 0.05 * d2, f"D(32) = {d32:.4f}, 0.05 D(2) = {0.05 * d2:.4f}")


def test_disc_spot_run_recognizable_within_cutoff(disc_spot_run, exact_disc):
    # distance to the exact disc restricted to the same 32 levels
    d2 = hilbert_distance(exact_disc, profile_reconstruct(disc_profiles(equally_spaced_angles(100)), 2))
    d32 = hilbert_distance(disc_matrix(32), disc_spot_run.rho)
    report("11c (within cutoff)", d32 < 0.05 * d2, f"D = {d32:.4f}, 0.05 D(2) = {0.05 * d2:.4f}")


# ---------------------------------------------------------------- 12. oracle equivalences


def test_oracle_kernel_routes():
    x = np.linspace(-4, 4, 41)
    phi = np.linspace(0, math.pi, 41)
    worst = 0.0
    for n in range(5):
        for d in range(4):
            a = kernel_matrix_element(n, d, 1.0)(x, phi)
            b = kernel_factorized(n, d)(x, phi)
            worst = max(worst, float(np.max(np.abs(a - b))))
    report("12 (kernel routes)", worst < 1e-8, f"max difference {worst:.2e}")


def test_oracle_wigner_marginal():
    rho = make_state(StateSpec.displaced_squeezed(0.7 - 0.3j, 0.4))
    g = np.linspace(-6, 6, 481)
    grid = wigner_grid(rho, g, g)
    marginal = grid.values.sum(axis=0) * (g[1] - g[0])
    pdf = quadrature_pdf(rho, g, 0.0)
    diff = float(np.max(np.abs(marginal - pdf)))
    report("12 (Wigner marginal)", diff < 1e-8, f"max difference {diff:.2e}")


def test_oracle_heterodyne_ordering():
    alpha = 0.9 + 0.4j
    samples = sample_heterodyne(GaussianState.from_params(mu=alpha), 400_000, 0.8, seed=116)
    worst = 0.0
    for n, m in [(1, 1), (2, 1), (2, 2), (0, 2)]:
        res = heterodyne_moment(samples, n, m, 0.8).normal_ordered
        worst = max(worst, abs(res.mean - np.conj(alpha) ** n * alpha**m) / res.stderr)
    report("12 (ordering conversion)", worst <= 4, f"max |moment - truth|/stderr {worst:.2f}")


def test_oracle_gaussian_fock_route():
    state = GaussianState.from_params(n_th=0.2, r=0.3, mu=0.5 + 0.2j)
    fock = gaussian_density_matrix(state, 60)
    params = GaussianStateParams(1 / math.sqrt(1.4), 0.3, 0.5 + 0.2j)
    diff = abs(overlap(fock, params.density_matrix(60)) - 1.0)
    report("12 (Gaussian Fock route)", diff < 1e-8, f"1 - overlap = {diff:.2e}")


def test_oracle_phase_average_of_kernels():
    # ideal-efficiency estimators reproduce the matrix of the sampled state
    rho = make_state(StateSpec.coherent(0.8))
    data = sample_homodyne(rho, 200_000, 1.0, seed=117)
    res = average(kernel_matrix_element(1, 1, 1.0), data)
    report("12 (kernel average)", res.consistent_with(rho.element(1, 2)), f"rho[1,2] = {res.mean:.4f} +- {res.stderr:.4f}")
