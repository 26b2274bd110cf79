"""Noise deconvolution of estimators and variance reduction with null estimators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .detector_sim import DataSet
from .errors import DomainError, Divergent
from .estimators import CHUNK, Estimator, PolynomialForm
from .states import quadrature_noise_variance


def deconvolve_estimator(est: Estimator, eta_from: float, eta_to: float = 1.0) -> Estimator:
    """Turn an estimator unbiased at efficiency ``eta_to`` into one unbiased at ``eta_from``.

    Data at ``eta_from`` carry extra Gaussian noise of variance
    D = Delta^2(eta_from) - Delta^2(eta_to); the estimator's Fourier transform
    is multiplied by e^{D y^2 / 2}.
    """
    extra = quadrature_noise_variance(eta_from) - quadrature_noise_variance(eta_to)
    dom = (eta_from, eta_from)
    if extra == 0:
        return Estimator(est.target, est.func, dom, est.kind, est.polynomial, est.spectral, dict(est.meta))
    if est.polynomial is not None:
        return Estimator.from_polynomial(est.target, est.polynomial.smear_inverse(extra), dom)
    if est.spectral is not None:
        form = est.spectral.smear_inverse(extra)
        meta = dict(est.meta, eta=eta_from)
        return Estimator.from_spectral(est.target, form, dom, meta)
    raise Divergent(f"estimator {est.target} has no Fourier representation to deconvolve")


def depolarizing_inverse(p: float):
    """Inverse of the qubit depolarizing map O -> (1-p) O + p Tr[O] I / 2."""
    if not 0 <= p < 1:
        raise DomainError("depolarizing parameter must lie in [0, 1)")

    def apply(op):
        o = np.asarray(op, dtype=complex)
        return (o - 0.5 * p * np.trace(o) * np.eye(2)) / (1.0 - p)

    return apply


@dataclass(frozen=True)
class NullEstimatorBasis:
    """Functions x^k e^{sign i (k + 2 + 2n) phi}, each with zero phase average."""

    members: tuple[tuple[int, int, int], ...]

    @classmethod
    def default(cls, kmax: int = 4, nmax: int = 3) -> "NullEstimatorBasis":
        return cls(tuple((k, n, s) for k in range(kmax + 1) for n in range(nmax + 1) for s in (1, -1)))

    def __len__(self) -> int:
        return len(self.members)

    def labels(self) -> list[str]:
        return [f"N[{k},{n},{'+' if s > 0 else '-'}]" for k, n, s in self.members]

    def estimator(self, index: int) -> Estimator:
        k, n, s = self.members[index]
        coeffs = tuple([0.0] * k + [1.0])
        return Estimator.from_polynomial(self.labels()[index], PolynomialForm(((s * (k + 2 + 2 * n), coeffs),)))

    def values(self, x, phi) -> np.ndarray:
        """(N, B) matrix of basis values."""
        x = np.asarray(x, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = np.empty((x.size, len(self.members)), dtype=complex)
        for j, (k, n, s) in enumerate(self.members):
            out[:, j] = x**k * np.exp(1j * s * (k + 2 + 2 * n) * phi)
        return out


@dataclass(frozen=True)
class AdaptiveResult:
    estimator: Estimator
    nu: np.ndarray
    labels: list[str]
    variance_before: float
    variance_after: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "target": self.estimator.target,
            "nu": [{"member": lab, "re": float(v.real), "im": float(v.imag)} for lab, v in zip(self.labels, self.nu)],
            "variance_before": self.variance_before,
            "variance_after": self.variance_after,
        }

    def save_json(self, path) -> Path:
        p = Path(path)
        p.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return p


def adaptive_optimize(est: Estimator, data: DataSet, basis: NullEstimatorBasis | None = None) -> AdaptiveResult:
    """Add the null-estimator combination that minimizes the empirical variance on ``data``.

    Solves the covariance normal equations Cov(N, N) nu = -Cov(N, E) with a
    ridge term 1e-10 * trace / dim.
    """
    basis = NullEstimatorBasis.default() if basis is None else basis
    n = len(data)
    values = np.concatenate([est.values(data.slice(s, s + CHUNK)) for s in range(0, n, CHUNK)])
    var_before = float(np.var(values))
    if len(basis) == 0:
        return AdaptiveResult(est, np.zeros(0, dtype=complex), [], var_before, var_before)
    b = len(basis)
    gram = np.zeros((b, b), dtype=complex)
    cross = np.zeros(b, dtype=complex)
    sums = np.zeros(b, dtype=complex)
    for s in range(0, n, CHUNK):
        nv = basis.values(data.x[s : s + CHUNK], data.phi[s : s + CHUNK])
        gram += nv.conj().T @ nv
        cross += nv.conj().T @ values[s : s + CHUNK]
        sums += nv.sum(axis=0)
    mean_n = sums / n
    mean_e = values.mean()
    gram = gram / n - np.outer(mean_n.conj(), mean_n)
    cross = cross / n - mean_n.conj() * mean_e
    ridge = 1e-10 * np.real(np.trace(gram)) / b
    nu = np.linalg.solve(gram + ridge * np.eye(b), -cross)
    funcs = basis

    def improved(x, phi):
        return est.func(x, phi) + funcs.values(x, phi).reshape(np.size(x), b) @ nu

    new = Estimator(est.target, improved, est.eta_domain, est.kind, meta=dict(est.meta, adaptive=True))
    after = np.concatenate(
        [values[s : s + CHUNK] + basis.values(data.x[s : s + CHUNK], data.phi[s : s + CHUNK]) @ nu for s in range(0, n, CHUNK)]
    )
    return AdaptiveResult(new, nu, basis.labels(), var_before, float(np.var(after)))
