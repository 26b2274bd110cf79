"""Multimode estimators for homodyne detection with a single local oscillator.

A record holds the quadrature outcome x of the combined mode
A = sum_l u_l(theta) e^{-i psi_l} a_l, the mixing angles theta and the phases
psi.  For two modes u = (cos theta, sin theta), with cos(2 theta) uniform on
[-1, 1] and both phases uniform on [0, 2 pi).  The t-integrals of every
kernel use Gauss-Laguerre quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import eval_genlaguerre, roots_laguerre

from . import kernels
from .detector_sim import DataSet
from .errors import DomainError, EmptyData, EtaOutOfDomain
from .estimators import CHUNK, Estimator
from .stats import DEFAULT_BLOCKS, AverageResult, BlockAccumulator, average_values

LAGUERRE_NODES = 150


def kappa(eta: float) -> float:
    """kappa = 2 eta / (2 eta - 1); defined for eta > 1/2."""
    if not (0.5 < eta <= 1.0):
        raise EtaOutOfDomain(f"multimode kernels need 1/2 < eta <= 1, got eta={eta}")
    return 2.0 * eta / (2.0 * eta - 1.0)


@lru_cache(maxsize=8)
def laguerre_nodes(count: int = LAGUERRE_NODES) -> tuple[np.ndarray, np.ndarray]:
    t, w = roots_laguerre(count)
    return t, w


def mode_weights(theta) -> np.ndarray:
    """Unit vector u_l(theta) for hyperspherical angles; last axis indexes modes.

    ``theta`` has shape (..., M) for M + 1 modes:
    u_l = cos(theta_l) prod_{j<l} sin(theta_j) and u_M = prod_j sin(theta_j).
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.ndim == 1:
        th = th[:, None]
    m = th.shape[-1]
    out = np.empty(th.shape[:-1] + (m + 1,))
    running = np.ones(th.shape[:-1])
    for l in range(m):
        out[..., l] = running * np.cos(th[..., l])
        running = running * np.sin(th[..., l])
    out[..., m] = running
    return out


def _record_arrays(data: DataSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if data.kind != "single_lo":
        raise DomainError("multimode estimators need single-LO records with theta, psi0, psi1")
    return data.x, data.theta[:, None], np.column_stack([data.psi0, data.psi1])


def mm_element_values(n, m, eta: float, x, theta, psi, nodes: int = LAGUERRE_NODES) -> np.ndarray:
    """Per-record estimator of <n|rho|m> for occupation vectors n, m.

    ``theta`` has shape (N, M) and ``psi`` shape (N, M + 1).
    """
    n = np.asarray(n, dtype=int)
    m = np.asarray(m, dtype=int)
    if n.shape != m.shape or n.ndim != 1 or n.size < 2:
        raise DomainError("occupation vectors must have equal length >= 2")
    if np.any(n < 0) or np.any(m < 0):
        raise DomainError("occupations must be non-negative")
    k = kappa(eta)
    modes = n.size
    x = np.asarray(x, dtype=float)
    u = mode_weights(theta)
    if u.shape[-1] != modes:
        raise DomainError("angle count does not match the number of modes")
    psi = np.asarray(psi, dtype=float).reshape(x.size, modes)
    hi = np.maximum(n, m)
    lo = np.minimum(n, m)
    order = hi - lo
    t, w = laguerre_nodes(nodes)
    power = (modes - 1) + 0.5 * order.sum()
    base = w * t**power  # (K,)
    # e^{+i(n-m).psi} selects <n|rho|m> rather than <m|rho|n>
    pref = k**modes * np.exp(1j * ((n - m) * psi).sum(axis=1))
    out = np.empty(x.size, dtype=complex)
    for s in range(0, x.size, CHUNK):
        sl = slice(s, min(x.size, s + CHUNK))
        uu = u[sl]
        amp = np.ones(uu.shape[0], dtype=complex)
        prod = np.ones((uu.shape[0], t.size))
        for l in range(modes):
            amp = amp * (-1j * math.sqrt(k) * uu[:, l]) ** order[l] * math.sqrt(
                math.factorial(lo[l]) / math.factorial(hi[l])
            )
            prod = prod * eval_genlaguerre(lo[l], order[l], k * np.outer(uu[:, l] ** 2, t))
        osc = np.exp(2j * np.outer(x[sl], np.sqrt(k * t)))
        out[sl] = pref[sl] * amp * ((osc * prod) @ base)
    return out


def kernel_mm_matrix_element(n, m, eta: float, nodes: int = LAGUERRE_NODES) -> Estimator:
    """Estimator of the two-mode element <n0, n1|rho|m0, m1> from single-LO records."""
    n = tuple(int(v) for v in n)
    m = tuple(int(v) for v in m)
    kappa(eta)

    def evaluate(data):
        x, th, ps = _record_arrays(data)
        return mm_element_values(n, m, eta, x, th, ps, nodes)

    return Estimator(f"rho[{n},{m}]", evaluate, (eta, eta), kind="single_lo", meta={"n": n, "m": m})


def joint_photon_table(x, theta, eta: float, nmax: int, nodes: int = LAGUERRE_NODES) -> np.ndarray:
    """(N, nmax+1, nmax+1) estimator values of the joint photon pmf p(n, m)."""
    t, w = laguerre_nodes(nodes)
    return kernels.joint_photon_values(
        np.ascontiguousarray(x, dtype=float),
        np.ascontiguousarray(theta, dtype=float),
        t,
        w,
        kappa(eta),
        int(nmax),
    )


def kernel_joint_photon(n: int, m: int, eta: float, nodes: int = LAGUERRE_NODES) -> Estimator:
    """Estimator of p(n, m) for the two modes; independent of the LO phases."""
    if n < 0 or m < 0:
        raise DomainError("photon numbers must be non-negative")
    k = kappa(eta)
    t, w = laguerre_nodes(nodes)

    def evaluate(data):
        x, th, _ = _record_arrays(data)
        c2 = np.cos(th[:, 0]) ** 2
        la = eval_genlaguerre(n, 0, k * np.outer(c2, t))
        lb = eval_genlaguerre(m, 0, k * np.outer(1.0 - c2, t))
        osc = np.exp(2j * np.outer(x, np.sqrt(k * t)))
        return k * k * ((osc * la * lb) @ (w * t))

    return Estimator(f"p({n},{m})", evaluate, (eta, eta), kind="single_lo", meta={"n": n, "m": m})


def total_photon_weights(nmax: int, eta: float, nodes: int = LAGUERRE_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and (nmax+1, K) weights of the total-photon kernels."""
    k = kappa(eta)
    t, w = laguerre_nodes(nodes)
    weights = np.array([k * k * w * t * eval_genlaguerre(n, 1, k * t) for n in range(nmax + 1)])
    return t, np.ascontiguousarray(weights)


def kernel_total_photon(n: int, eta: float, nodes: int = LAGUERRE_NODES) -> Estimator:
    """Estimator of Prob(N_total = n); uses only the quadrature outcome."""
    if n < 0:
        raise DomainError("photon number must be non-negative")
    k = kappa(eta)
    t, w = laguerre_nodes(nodes)
    weights = k * k * w * t * eval_genlaguerre(n, 1, k * t)
    root = np.sqrt(k * t)

    def evaluate(data):
        return np.exp(2j * np.outer(data.x, root)) @ weights

    return Estimator(f"P(N={n})", evaluate, (eta, eta), kind="single_lo", meta={"n": n})


@dataclass(frozen=True)
class JointPmf:
    """Reconstructed p(n, m): real parts, standard errors and imaginary diagnostics."""

    p: np.ndarray
    stderr: np.ndarray
    imag: np.ndarray
    n_records: int

    def save_csv(self, path) -> Path:
        out = Path(path)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "m", "p", "stderr"])
            for i in range(self.p.shape[0]):
                for j in range(self.p.shape[1]):
                    w.writerow([i, j, repr(float(self.p[i, j])), repr(float(self.stderr[i, j]))])
        return out


def reconstruct_joint_pmf(data: DataSet, nmax: int, eta: float | None = None, n_blocks: int = DEFAULT_BLOCKS, nodes: int = LAGUERRE_NODES) -> JointPmf:
    """Average the joint photon kernels p(n, m) for n, m <= nmax."""
    eta = data.eta if eta is None else eta
    total = len(data)
    if total == 0:
        raise EmptyData("no records")
    x, th, _ = _record_arrays(data)
    side = nmax + 1
    acc = BlockAccumulator(total, n_blocks, width=side * side)
    for s in range(0, total, CHUNK):
        vals = joint_photon_table(x[s : s + CHUNK], th[s : s + CHUNK, 0], eta, nmax, nodes)
        acc.add(vals.reshape(vals.shape[0], side * side))
    res = acc.results()
    mean = np.array([r.mean for r in res]).reshape(side, side)
    # the estimate is real; the error bar is that of the real part
    err = np.array([r.stderr_re for r in res]).reshape(side, side)
    return JointPmf(mean.real.copy(), err, mean.imag.copy(), total)


@dataclass(frozen=True)
class TotalPhotonPmf:
    p: np.ndarray
    stderr: np.ndarray
    imag: np.ndarray
    n_records: int


def reconstruct_total_photon(data: DataSet, nmax: int, eta: float | None = None, n_blocks: int = DEFAULT_BLOCKS, nodes: int = LAGUERRE_NODES) -> TotalPhotonPmf:
    """Average the total-photon kernels for N_total <= nmax."""
    eta = data.eta if eta is None else eta
    total = len(data)
    if total == 0:
        raise EmptyData("no records")
    t, weights = total_photon_weights(nmax, eta, nodes)
    k = kappa(eta)
    acc = BlockAccumulator(total, n_blocks, width=nmax + 1)
    for s in range(0, total, CHUNK):
        acc.add(kernels.total_photon_values(np.ascontiguousarray(data.x[s : s + CHUNK]), t, weights, k))
    res = acc.results()
    mean = np.array([r.mean for r in res])
    return TotalPhotonPmf(mean.real.copy(), np.array([r.stderr_re for r in res]), mean.imag.copy(), total)


def total_photon_moments(data: DataSet, eta: float | None = None, n_blocks: int = DEFAULT_BLOCKS) -> tuple[AverageResult, AverageResult]:
    """Estimates of <N> and <N^2> for the total photon number N of the two modes."""
    eta = data.eta if eta is None else eta
    k = kappa(eta)
    x = np.asarray(data.x, dtype=float)
    if x.size == 0:
        raise EmptyData("no records")
    x2 = x * x
    first = 4.0 * x2 + 2.0 / k - 2.0
    second = 8.0 * x2 * x2 + (24.0 / k - 20.0) * x2 + 6.0 / k**2 - 10.0 / k + 4.0
    return average_values(first, n_blocks), average_values(second, n_blocks)
