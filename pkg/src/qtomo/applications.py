"""Nonclassicality tests, state-reduction fidelity and process tomography."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import eval_laguerre, hyp1f1, hyp2f1

from .detector_sim import DataSet, sample_gaussian_homodyne, sample_homodyne, sample_twin_beam_two_channel
from .errors import DomainError, EmptyData, EtaBoundViolation
from .estimators import CHUNK, MatrixKernelBank, kernel_observable
from .specfun import confluent_phi_1_half
from .states import DensityMatrix, GaussianState
from .stats import DEFAULT_BLOCKS, BlockAccumulator, average_values, jackknife


class VarianceWarning(UserWarning):
    """Raised when estimator weights make the statistical error very large."""


def _block_index(total: int, blocks: int) -> np.ndarray:
    return np.arange(total) * blocks // total


# ---------------------------------------------------------------- B test


@dataclass(frozen=True)
class NonclassicalityReport:
    kind: str
    values: np.ndarray
    stderr: np.ndarray
    threshold: float = 5.0
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def verdict(self) -> int:
        """Number of entries below -threshold standard errors."""
        return int(np.sum(self.values < -self.threshold * self.stderr))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "values": [float(v) for v in np.atleast_1d(self.values)],
            "stderr": [float(v) for v in np.atleast_1d(self.stderr)],
            "threshold_sigmas": self.threshold,
            "verdict": self.verdict,
            **self.extra,
        }


def b_values(pmf) -> np.ndarray:
    """B(n) = (n+2) p(n) p(n+2) - (n+1) p(n+1)^2 for every n with p(n+2) available."""
    p = np.asarray(pmf, dtype=float)
    if p.size < 3:
        raise EmptyData("need at least three probabilities")
    n = np.arange(p.size - 2)
    return (n + 2) * p[:-2] * p[2:] - (n + 1) * p[1:-1] ** 2


def test_b_pmf(pmf) -> NonclassicalityReport:
    """B(n) from exact probabilities (zero error bars)."""
    vals = b_values(pmf)
    return NonclassicalityReport("B", vals, np.zeros_like(vals))


def test_b(data: DataSet, cutoff: int, mode: str = "noisy_state", n_blocks: int = DEFAULT_BLOCKS) -> NonclassicalityReport:
    """B(n) from homodyne data with jackknife error bars over blocks.

    ``mode="noisy_state"`` tests the photon distribution after detection
    loss: outcomes rescaled by sqrt(eta) are ideal quadratures of the lossy
    state, so ideal kernels apply.  ``mode="deconvolved"`` uses kernels at
    the data efficiency and tests the original state.
    """
    if mode == "noisy_state":
        eta, scale = 1.0, math.sqrt(data.eta)
    elif mode == "deconvolved":
        eta, scale = data.eta, 1.0
    else:
        raise DomainError(f"unknown mode {mode!r}")
    bank = MatrixKernelBank(cutoff, eta, max_degree=0)
    total = len(data)
    if total == 0:
        raise EmptyData("no records")
    acc = BlockAccumulator(total, n_blocks, width=len(bank.pairs))
    for s in range(0, total, CHUNK):
        acc.add(np.real(bank.values(scale * data.x[s : s + CHUNK], data.phi[s : s + CHUNK])))
    res = acc.results()
    pmf = np.array([r.mean.real for r in res])
    block_means = np.array([r.block_means.real for r in res]).T  # (blocks, P)
    counts = np.bincount(_block_index(total, acc.blocks), minlength=acc.blocks)
    loo = (pmf * total - block_means * counts[:, None]) / (total - counts)[:, None]
    b_full = b_values(pmf)
    b_loo = np.array([b_values(row) for row in loo])
    err = jackknife(b_loo)
    return NonclassicalityReport("B", b_full, err, extra={"mode": mode, "pmf": pmf.tolist(), "pmf_stderr": [r.stderr_re for r in res]})


# ---------------------------------------------------------------- C test


def c_theory(xi2: float, eta: float = 1.0) -> float:
    """C of the twin beam after loss eta: -2 eta^2 |xi|^2 / (1 - |xi|^2)."""
    return -2.0 * eta * eta * xi2 / (1.0 - xi2)


def test_c(data: DataSet, eta: float | None = None, target: str = "lossy", n_blocks: int = DEFAULT_BLOCKS) -> NonclassicalityReport:
    """C = <(n1-n2)^2> - <n1-n2>^2 - <n1+n2> from two separate homodyne channels.

    ``target="lossy"`` measures the photon statistics after the detection
    loss (C_eta) by rescaling outcomes with sqrt(eta) and applying ideal
    estimators; ``target="ideal"`` corrects for the efficiency.
    """
    if data.kind != "two_channel":
        raise DomainError("test_c needs two-channel records")
    eta = data.eta if eta is None else eta
    if target == "lossy":
        scale, est_eta = math.sqrt(eta), 1.0
    elif target == "ideal":
        scale, est_eta = 1.0, eta
    else:
        raise DomainError(f"unknown target {target!r}")
    n_est = kernel_observable("n", est_eta)
    n2_est = kernel_observable("n2", est_eta)
    x1, x2 = scale * data.x, scale * data.x2
    cols = np.column_stack(
        [
            n_est(x1, data.phi).real,
            n_est(x2, data.phi2).real,
            n2_est(x1, data.phi).real,
            n2_est(x2, data.phi2).real,
        ]
    )
    cols = np.column_stack([cols, cols[:, 0] * cols[:, 1]])
    total = cols.shape[0]
    acc = BlockAccumulator(total, n_blocks, width=5)
    acc.add(cols)
    res = acc.results()
    m = np.array([r.mean.real for r in res])
    blocks = np.array([r.block_means.real for r in res]).T
    counts = np.bincount(_block_index(total, acc.blocks), minlength=acc.blocks)
    loo = (m * total - blocks * counts[:, None]) / (total - counts)[:, None]

    def c_of(v):
        return v[2] + v[3] - 2 * v[4] - (v[0] - v[1]) ** 2 - v[0] - v[1]

    value = c_of(m)
    err = float(jackknife(np.array([c_of(row) for row in loo])))
    return NonclassicalityReport("C", np.array([value]), np.array([err]), extra={"target": target, "eta": eta})


# ---------------------------------------------------------------- state reduction


@dataclass(frozen=True)
class ReducedStateSpec:
    """Conditional state of beam 2 after detecting beam 1 of a twin beam.

    ``kind`` is "heterodyne" (outcome ``alpha``) or "photocount" (outcome
    ``n``); ``eta_r`` is the efficiency of the beam-1 detector.
    """

    kind: str
    xi: complex
    eta_r: float
    alpha: complex = 0j
    n: int = 0

    def __post_init__(self):
        if self.kind not in ("heterodyne", "photocount"):
            raise DomainError(f"unknown reduced-state kind {self.kind!r}")
        if not abs(self.xi) < 1:
            raise DomainError("twin-beam parameter must satisfy |xi| < 1")
        if not 0 < self.eta_r <= 1:
            raise DomainError("efficiency must lie in (0, 1]")
        if self.n < 0:
            raise DomainError("photon count must be non-negative")

    @property
    def eta_xi(self) -> float:
        return 1.0 + (self.eta_r - 1.0) * abs(self.xi) ** 2

    @property
    def gamma(self) -> complex:
        return complex(self.xi) * self.eta_r * np.conj(self.alpha) / self.eta_xi

    def fidelity_theory(self) -> float:
        """Purity Tr[rho^2] of the reduced state."""
        e = self.eta_xi
        if self.kind == "heterodyne":
            return e / (2.0 - e)
        n = self.n
        return e ** (2 + 2 * n) * hyp2f1(n + 1, n + 1, 1, (1 - e) ** 2)

    def gaussian(self) -> GaussianState:
        if self.kind != "heterodyne":
            raise DomainError("only the heterodyne reduced state is Gaussian")
        return GaussianState.from_params(n_th=(1.0 - self.eta_xi) / self.eta_xi, mu=self.gamma)

    def density_matrix(self, tail: float = 1e-12) -> DensityMatrix:
        """Diagonal reduced state for photocounting, truncated once the tail drops below ``tail``."""
        if self.kind != "photocount":
            raise DomainError("density_matrix is built for the photocount case")
        e, n = self.eta_xi, self.n
        probs = []
        k = n
        mass = 0.0
        while True:
            p = math.comb(k, n) * e ** (n + 1) * (1 - e) ** (k - n)
            probs.append(p)
            mass += p
            k += 1
            if 1.0 - mass < tail or k > n + 2000:
                break
        diag = np.concatenate([np.zeros(n), probs])
        return DensityMatrix(np.diag(diag), captured_trace=mass)


def sample_reduced_state(spec: ReducedStateSpec, count: int, eta_h: float, seed: int = 0) -> DataSet:
    """Homodyne records of the conditional state of beam 2, sampled directly."""
    if spec.kind == "heterodyne":
        return sample_gaussian_homodyne(spec.gaussian(), count, eta_h, seed)
    return sample_homodyne(spec.density_matrix(), count, eta_h, seed=seed)


def _check_bound(eta_h: float, eta_xi: float) -> None:
    if not eta_h > 0.5 * eta_xi:
        raise EtaBoundViolation(f"fidelity estimator needs eta_h > eta_xi/2 = {0.5 * eta_xi:.6g}, got eta_h={eta_h}")


def _series_mul(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    """Product of truncated power series; leading axis is the power of z."""
    out = np.zeros((order + 1,) + np.broadcast(a[0], b[0]).shape)
    for i in range(order + 1):
        for j in range(order + 1 - i):
            out[i + j] = out[i + j] + a[i] * b[j]
    return out


def photocount_fidelity_values(x, eta_h: float, eta_xi: float, n: int) -> np.ndarray:
    """(eta_xi d/dz)^n / n! at z = 0 of A(z) Phi(1, 1/2, -B(z) x^2).

    A(z) = 2 eta_h eta_xi / (c + z) and B(z) = 2 eta_h (eta_xi - z) / (c + z)
    with c = 2 eta_h - eta_xi.  The z-expansion is done by truncated power
    series composition.
    """
    _check_bound(eta_h, eta_xi)
    x = np.asarray(x, dtype=float)
    c = 2.0 * eta_h - eta_xi
    j = np.arange(n + 1)
    inv = (-1.0) ** j / c ** (j + 1)  # 1/(c+z)
    a_series = 2.0 * eta_h * eta_xi * inv
    num = np.zeros(n + 1)
    num[0] = 2.0 * eta_h * eta_xi
    if n >= 1:
        num[1] = -2.0 * eta_h
    b_series = _series_mul(num, inv, n)
    w0 = b_series[0] * x * x
    delta = b_series[:, None] * (x * x)[None, :]
    delta[0] = 0.0
    # Phi(1,1/2,-(w0+delta)) = sum_k (-delta)^k/k! (1)_k/(1/2)_k Phi(1+k, 1/2+k, -w0)
    comp = np.zeros((n + 1, x.size))
    power = np.zeros((n + 1, x.size))
    power[0] = 1.0
    for k in range(n + 1):
        if k == 0:
            deriv = confluent_phi_1_half(w0)
        else:
            deriv = hyp1f1(1 + k, 0.5 + k, -w0)
        coef = (-1.0) ** k * math.factorial(k) / (math.factorial(k) * _rising(0.5, k))
        comp += coef * deriv * power
        power = _series_mul(power, delta, n)
    total = _series_mul(a_series[:, None] * np.ones((1, x.size)), comp, n)
    return eta_xi**n * total[n]


def _rising(a: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= a + i
    return out


def fidelity_values(spec: ReducedStateSpec, eta_h: float, x, phi) -> np.ndarray:
    """Per-record estimator of Tr[rho_actual rho_reduced] at readout efficiency eta_h."""
    e = spec.eta_xi
    _check_bound(eta_h, e)
    if spec.kind == "heterodyne":
        c = 2.0 * eta_h * e / (2.0 * eta_h - e)
        shift = np.real(spec.gamma * np.exp(-1j * np.asarray(phi, dtype=float)))
        return c * confluent_phi_1_half(c * (np.asarray(x, dtype=float) - shift) ** 2)
    return photocount_fidelity_values(x, eta_h, e, spec.n)


@dataclass(frozen=True)
class FidelityResult:
    fidelity: float
    stderr: float
    theory: float

    def to_dict(self) -> dict[str, float]:
        return {"fidelity": self.fidelity, "stderr": self.stderr, "theory": self.theory}


def sr_fidelity(spec: ReducedStateSpec, data: DataSet, eta_h: float | None = None, n_blocks: int = DEFAULT_BLOCKS) -> FidelityResult:
    """Measured fidelity of the conditional state against the ideal reduced state."""
    eta_h = data.eta if eta_h is None else eta_h
    _check_bound(eta_h, spec.eta_xi)
    res = average_values(fidelity_values(spec, eta_h, data.x, data.phi), n_blocks)
    return FidelityResult(res.mean.real, res.stderr, spec.fidelity_theory())


# ---------------------------------------------------------------- process tomography


@dataclass(frozen=True)
class ProcessMatrix:
    """Entries R[i, j, l, k] = <<i, j|R|l, k>> with standard errors."""

    entries: np.ndarray
    stderr: np.ndarray
    amplitudes: np.ndarray
    amplitude_stderr: np.ndarray
    theory: np.ndarray | None = None

    @property
    def cutoff(self) -> int:
        return self.entries.shape[0]

    def as_matrix(self) -> np.ndarray:
        m = self.cutoff
        return self.entries.reshape(m * m, m * m)

    def to_dict(self) -> dict[str, Any]:
        return {
            "cutoff": self.cutoff,
            "amplitudes": self.amplitudes.tolist(),
            "amplitude_stderr": self.amplitude_stderr.tolist(),
            "theory": None if self.theory is None else self.theory.tolist(),
            "entries_re": self.entries.real.tolist(),
            "entries_im": self.entries.imag.tolist(),
            "stderr": self.stderr.tolist(),
        }

    def save_amplitude_csv(self, path) -> Path:
        p = Path(path)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "A", "stderr", "theory"])
            for n in range(self.cutoff):
                th = "" if self.theory is None else repr(float(self.theory[n]))
                w.writerow([n, repr(float(self.amplitudes[n])), repr(float(self.amplitude_stderr[n])), th])
        return p


def displacement_amplitude_theory(z: complex, cutoff: int) -> np.ndarray:
    """|<n|D(z)|n>| = e^{-|z|^2/2} |L_n(|z|^2)|."""
    r2 = abs(z) ** 2
    return np.array([math.exp(-r2 / 2) * abs(eval_laguerre(n, r2)) for n in range(cutoff)])


def _element_columns(bank: MatrixKernelBank, x, phi) -> np.ndarray:
    """(N, M, M) values of the kernels for <a|rho|b> for all a, b."""
    m = bank.cutoff
    vals = bank.values(x, phi)
    out = np.empty((vals.shape[0], m, m), dtype=complex)
    for col, (n, d) in enumerate(bank.pairs):
        out[:, n, n + d] = vals[:, col]
        if d:
            out[:, n + d, n] = np.conj(vals[:, col])
    return out


def process_matrix_from_data(data: DataSet, xi: float, cutoff: int, eta: float | None = None, n_blocks: int = 150, z: complex | None = None) -> ProcessMatrix:
    """Average products of single-mode kernels weighted by xi^{-j-k} / (1 - xi^2)."""
    if data.kind != "two_channel":
        raise DomainError("process tomography needs two-channel records")
    xi = float(xi)
    if not 0 < abs(xi) < 1:
        raise DomainError("process tomography needs 0 < |xi| < 1")
    eta = data.eta if eta is None else eta
    if abs(xi) ** (-2 * (cutoff - 1)) > 1e4:
        warnings.warn("small |xi| makes the high-index weights very large", VarianceWarning, stacklevel=2)
    bank = MatrixKernelBank(cutoff, eta)
    m = cutoff
    size = m**4
    total = len(data)
    sums = np.zeros(size, dtype=complex)
    sq = np.zeros(size)
    diag_acc = BlockAccumulator(total, n_blocks, width=m)
    for s in range(0, total, CHUNK):
        a = _element_columns(bank, data.x[s : s + CHUNK], data.phi[s : s + CHUNK]).reshape(-1, m * m)
        b = _element_columns(bank, data.x2[s : s + CHUNK], data.phi2[s : s + CHUNK]).reshape(-1, m * m)
        # product index (i, l) x (j, k)
        sums += (a.T @ b).reshape(-1)
        sq += (np.abs(a.T) ** 2 @ np.abs(b) ** 2).reshape(-1)
        idx = np.arange(m) * (m + 1)
        diag_acc.add(np.real(a[:, idx] * b[:, idx]))
    mean = sums / total
    var = np.maximum(sq / total - np.abs(mean) ** 2, 0.0)
    err = np.sqrt(var / max(total - 1, 1))
    il_jk = mean.reshape(m, m, m, m)  # [i, l, j, k]
    err4 = err.reshape(m, m, m, m)
    weight = xi ** (-np.add.outer(np.arange(m), np.arange(m))) / (1.0 - xi * xi)  # [j, k]
    r = np.transpose(il_jk, (0, 2, 1, 3)) * weight[None, :, None, :]
    r_err = np.transpose(err4, (0, 2, 1, 3)) * np.abs(weight)[None, :, None, :]
    diag_res = diag_acc.results()
    diag_w = xi ** (-2.0 * np.arange(m)) / (1.0 - xi * xi)
    rnn = np.array([d.mean.real for d in diag_res]) * diag_w
    rnn_err = np.array([d.stderr_re for d in diag_res]) * diag_w
    amp = np.sqrt(np.maximum(rnn, 0.0))
    amp_err = np.where(amp > 0, rnn_err / (2.0 * np.where(amp > 0, amp, 1.0)), np.sqrt(rnn_err))
    theory = None if z is None else displacement_amplitude_theory(z, m)
    return ProcessMatrix(r, r_err, amp, amp_err, theory)


def estimate_process_matrix(z: complex, xi: float, eta: float, count: int, cutoff: int, seed: int = 0, n_blocks: int = 150) -> ProcessMatrix:
    """Simulate (D(z) x I) on a twin beam, detect both beams and reconstruct the process."""
    data = sample_twin_beam_two_channel(xi, count, eta, seed, z=z)
    return process_matrix_from_data(data, xi, cutoff, eta, n_blocks, z)


def save_report(path, payload: dict[str, Any]) -> Path:
    p = Path(path)
    p.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return p
