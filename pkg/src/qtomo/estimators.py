"""Single-mode homodyne estimators and Monte Carlo averaging.

Phase convention: the homodyne density is p(x, phi) = Re sum_d e^{i d phi} c_d(x)
with c_d built from rho[n, n+d], so the estimator of rho[n, n+d] = <n|rho|n+d>
carries the factor e^{-i d phi}.  Data phases are uniform on [0, pi).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
from numpy.polynomial import hermite as _herm
from numpy.polynomial import polynomial as _poly
from scipy.special import hyp1f1

from .detector_sim import DataSet, ParityData
from .errors import DomainError, Divergent, EmptyData, EtaOutOfDomain, SOutOfDomain
from .specfun import confluent_phi_1_half, laguerre_function_table
from .states import DensityMatrix, quadrature_noise_variance
from .stats import DEFAULT_BLOCKS, AverageResult, BlockAccumulator

CHUNK = 20000
QUAD_NODES = 200
K_SEARCH_MAX = 60.0
K_SEARCH_STEP = 0.005
ENVELOPE_FLOOR = 1e-14


def _check_matrix_eta(eta: float) -> None:
    if not (0.5 < eta <= 1.0):
        raise EtaOutOfDomain(f"matrix-element kernels need 1/2 < eta <= 1, got eta={eta}")


def _gauss_coefficient(eta: float) -> float:
    """Exponent c in e^{c k^2} that undoes the efficiency smearing."""
    return 2.0 * quadrature_noise_variance(eta)


# ---------------------------------------------------------------- representations


@dataclass(frozen=True)
class PolynomialForm:
    """R(x, phi) = sum_h e^{i h phi} P_h(x); ``terms`` maps h to ascending coefficients."""

    terms: tuple[tuple[int, tuple[float, ...]], ...]

    def evaluate(self, x, phi) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(np.broadcast(x, phi).shape, dtype=complex)
        for h, coeffs in self.terms:
            out = out + np.exp(1j * h * phi) * _poly.polyval(x, coeffs)
        return out

    def smear_inverse(self, variance: float) -> "PolynomialForm":
        """Apply exp(-variance/2 d^2/dx^2), the inverse of Gaussian smearing."""
        new = []
        for h, coeffs in self.terms:
            c = np.array(coeffs, dtype=float)
            total = np.zeros_like(c)
            deriv = c.copy()
            j = 0
            while deriv.size and np.any(deriv):
                padded = np.zeros_like(c)
                padded[: deriv.size] = deriv
                total += (-variance / 2.0) ** j / math.factorial(j) * padded
                deriv = _poly.polyder(deriv, 2) if deriv.size > 2 else np.zeros(0)
                j += 1
            new.append((h, tuple(total)))
        return PolynomialForm(tuple(new))

    def scaled(self, factor: complex) -> "PolynomialForm":
        if np.imag(factor) != 0:
            raise DomainError("polynomial forms hold real coefficients")
        return PolynomialForm(tuple((h, tuple(np.real(factor) * np.array(c))) for h, c in self.terms))


@dataclass(frozen=True)
class SpectralForm:
    """R(x, phi) = e^{-i d phi} int_0^inf A(k) e^{c k^2} T_d(2 k x) dk.

    T_d is cos for even d and sin for odd d.  The integral is truncated where
    the integrand envelope falls below 1e-14 of its maximum and evaluated by
    Gauss-Legendre quadrature.
    """

    d: int
    amplitude: Callable[[np.ndarray], np.ndarray]
    gauss: float
    decay: float = 0.5
    nodes: int = QUAD_NODES

    def cutoff(self) -> float:
        if self.gauss >= self.decay:
            raise Divergent("kernel integrand does not decay")
        k = np.arange(1, int(K_SEARCH_MAX / K_SEARCH_STEP) + 1) * K_SEARCH_STEP
        return _cutoff_from_envelope(_log_envelope(self.amplitude(k), self.gauss, k), k)

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        kmax = self.cutoff()
        t, w = np.polynomial.legendre.leggauss(self.nodes)
        k = 0.5 * kmax * (t + 1.0)
        weights = 0.5 * kmax * w * self.amplitude(k) * np.exp(self.gauss * k * k)
        return k, weights

    def evaluate(self, x, phi) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        phi = np.asarray(phi, dtype=float)
        k, w = self.quadrature()
        trig = np.cos if self.d % 2 == 0 else np.sin
        flat = x.reshape(-1)
        g = np.empty(flat.size)
        for s in range(0, flat.size, CHUNK):
            g[s : s + CHUNK] = trig(2.0 * np.outer(flat[s : s + CHUNK], k)) @ w
        return np.exp(-1j * self.d * phi) * g.reshape(x.shape)

    def smear_inverse(self, variance: float) -> "SpectralForm":
        # frequency of T_d(2kx) is 2k, so e^{variance (2k)^2 / 2} = e^{2 variance k^2}
        return replace(self, gauss=self.gauss + 2.0 * variance)


def _log_envelope(amp: np.ndarray, gauss: float, k: np.ndarray) -> np.ndarray:
    # amplitudes that underflow to zero count as decayed
    with np.errstate(divide="ignore"):
        return np.log(np.abs(amp)) + gauss * k * k


def _cutoff_from_envelope(log_env: np.ndarray, k: np.ndarray) -> float:
    log_env = np.atleast_2d(log_env)
    peak = log_env.max(axis=-1, keepdims=True)
    above = log_env > math.log(ENVELOPE_FLOOR) + peak
    if np.any(above[..., -1]):
        raise Divergent("kernel integrand does not decay within the search range")
    last = np.where(above.any(axis=-1), above.shape[-1] - 1 - np.argmax(above[..., ::-1], axis=-1), 0)
    return float(k[min(int(last.max()) + 1, k.size - 1)])


# ---------------------------------------------------------------- estimator type


@dataclass(frozen=True)
class Estimator:
    """Pattern function mapping measurement records to complex values.

    ``func`` takes (x, phi) arrays for homodyne estimators, or complex
    displacements for ``kind == "parity"``.  ``eta_domain`` is the closed
    interval of data efficiencies the estimator is unbiased for.
    """

    target: str
    func: Callable[..., np.ndarray]
    eta_domain: tuple[float, float] = (0.0, 1.0)
    kind: str = "homodyne"
    polynomial: PolynomialForm | None = None
    spectral: SpectralForm | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __call__(self, *args) -> np.ndarray:
        return self.func(*args)

    def values(self, data) -> np.ndarray:
        if self.kind == "parity":
            if not isinstance(data, ParityData):
                raise DomainError("parity estimators need displaced-parity records")
            return data.outcome * data.weight * self.func(data.alpha)
        if self.kind == "homodyne":
            return np.asarray(self.func(data.x, data.phi), dtype=complex)
        return np.asarray(self.func(data), dtype=complex)

    def accepts_eta(self, eta: float) -> bool:
        lo, hi = self.eta_domain
        return lo - 1e-12 <= eta <= hi + 1e-12 and eta > 0

    def plus(self, other: "Estimator", weight: complex = 1.0, target: str | None = None) -> "Estimator":
        """Estimator self + weight * other."""
        f, g = self.func, other.func

        def combined(*args):
            return f(*args) + weight * g(*args)

        lo = max(self.eta_domain[0], other.eta_domain[0])
        hi = min(self.eta_domain[1], other.eta_domain[1])
        poly = None
        if self.polynomial is not None and other.polynomial is not None and np.imag(weight) == 0:
            poly = PolynomialForm(self.polynomial.terms + other.polynomial.scaled(weight).terms)
        return Estimator(target or self.target, combined, (lo, hi), self.kind, poly)

    @classmethod
    def from_polynomial(cls, target: str, form: PolynomialForm, eta_domain=(0.0, 1.0)) -> "Estimator":
        return cls(target, form.evaluate, eta_domain, "homodyne", polynomial=form)

    @classmethod
    def from_spectral(cls, target: str, form: SpectralForm, eta_domain, meta=None) -> "Estimator":
        k, w = form.quadrature()
        d = form.d
        trig = np.cos if d % 2 == 0 else np.sin

        def evaluate(x, phi):
            x = np.asarray(x, dtype=float)
            g = trig(2.0 * np.multiply.outer(x, k)) @ w
            return np.exp(-1j * d * np.asarray(phi, dtype=float)) * g

        return cls(target, evaluate, eta_domain, "homodyne", spectral=form, meta=dict(meta or {}))


def constant_estimator(value: complex) -> Estimator:
    def const(x, phi=None):
        return np.full(np.shape(x), complex(value))

    return Estimator(f"const({value})", const)


# ---------------------------------------------------------------- matrix elements


def _sign(d: int) -> float:
    return -1.0 if (d // 2) % 2 else 1.0


def _matrix_amplitude(n: int, d: int) -> Callable[[np.ndarray], np.ndarray]:
    s = 2.0 * _sign(d)

    def amp(k):
        k = np.asarray(k, dtype=float)
        return s * k * laguerre_function_table(n, d, k)[n]

    return amp


def kernel_matrix_element(n: int, d: int, eta: float) -> Estimator:
    """Estimator of rho[n, n+d] from homodyne data at efficiency eta."""
    if n < 0 or d < 0:
        raise DomainError("indices must be non-negative")
    _check_matrix_eta(eta)
    form = SpectralForm(d, _matrix_amplitude(n, d), _gauss_coefficient(eta))
    return Estimator.from_spectral(f"rho[{n},{n + d}]", form, (eta, eta), {"n": n, "d": d, "eta": eta})


def _ground_kernel(d: int, x: np.ndarray) -> np.ndarray:
    """Closed form of the phase-stripped eta = 1 kernel of rho[0, d]."""
    pre = 2.0 * _sign(d) / math.sqrt(math.factorial(d))
    z = -2.0 * x * x
    if d % 2 == 0:
        return pre * 2.0 ** (d / 2) * math.gamma(d / 2 + 1) * hyp1f1(d / 2 + 1, 0.5, z)
    return pre * x * 2.0 ** ((d + 3) / 2) * math.gamma((d + 3) / 2) * hyp1f1((d + 3) / 2, 1.5, z)


def _ratio_table(nmax: int, x: np.ndarray) -> np.ndarray:
    """u_j(x) / u_0(x) for the oscillator eigenfunctions, j <= nmax."""
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 2.0 * x
    for j in range(1, nmax):
        out[j + 1] = (2.0 * x * out[j] - math.sqrt(j) * out[j - 1]) / math.sqrt(j + 1)
    return out


def _irregular_scaled(j: int, x: np.ndarray) -> np.ndarray:
    """u_0(x) v_j(x) for the non-normalizable partner solutions."""
    if j >= 1:
        return -_ground_kernel(j - 1, x) / (2.0 * math.sqrt(j))
    return 2.0 * x * _irregular_scaled(1, x) + 0.5 * _ground_kernel(1, x)


def factorized_values(n: int, d: int, x) -> np.ndarray:
    """Phase-stripped eta = 1 kernel of rho[n, n+d] as products of regular and irregular solutions."""
    x = np.asarray(x, dtype=float)
    u = _ratio_table(n + 1, x)
    v_a = _irregular_scaled(n + d, x)
    v_b = _irregular_scaled(n + d + 1, x)
    return 4.0 * x * u[n] * v_a - 2.0 * math.sqrt(n + 1) * u[n + 1] * v_a - 2.0 * math.sqrt(n + d + 1) * u[n] * v_b


def kernel_factorized(n: int, d: int) -> Estimator:
    """Estimator of rho[n, n+d] at eta = 1 built from closed-form eigenfunction products."""
    if n < 0 or d < 0:
        raise DomainError("indices must be non-negative")

    def evaluate(x, phi):
        return np.exp(-1j * d * np.asarray(phi, dtype=float)) * factorized_values(n, d, x)

    return Estimator(f"rho[{n},{n + d}]", evaluate, (1.0, 1.0), meta={"n": n, "d": d, "eta": 1.0})


class MatrixKernelBank:
    """Kernels rho[n, n+d] with n + d < cutoff and d <= max_degree on one quadrature grid."""

    def __init__(self, cutoff: int, eta: float, nodes: int = QUAD_NODES, max_degree: int | None = None):
        if cutoff < 1:
            raise DomainError("cutoff must be at least 1")
        _check_matrix_eta(eta)
        self.cutoff = cutoff
        self.eta = eta
        gauss = _gauss_coefficient(eta)
        top = cutoff - 1 if max_degree is None else min(max_degree, cutoff - 1)
        self.pairs = [(n, d) for d in range(top + 1) for n in range(cutoff - d)]
        ksearch = np.arange(1, int(K_SEARCH_MAX / K_SEARCH_STEP) + 1) * K_SEARCH_STEP
        kmax = 0.0
        for d in range(top + 1):
            table = ksearch * laguerre_function_table(cutoff - 1 - d, d, ksearch)
            kmax = max(kmax, _cutoff_from_envelope(_log_envelope(table, gauss, ksearch), ksearch))
        t, w = np.polynomial.legendre.leggauss(nodes)
        k = 0.5 * kmax * (t + 1.0)
        base = 0.5 * kmax * w * k * np.exp(gauss * k * k)
        weights = np.zeros((k.size, len(self.pairs)))
        for col, (n, d) in enumerate(self.pairs):
            if n == 0:
                table = laguerre_function_table(cutoff - 1 - d, d, k)
            weights[:, col] = 2.0 * _sign(d) * base * table[n]
        self.k = k
        self.kmax = kmax
        self.degree = np.array([d for _, d in self.pairs])
        even = self.degree % 2 == 0
        self.even_cols = np.nonzero(even)[0]
        self.odd_cols = np.nonzero(~even)[0]
        self.w_even = np.ascontiguousarray(weights[:, self.even_cols])
        self.w_odd = np.ascontiguousarray(weights[:, self.odd_cols])

    def values(self, x, phi) -> np.ndarray:
        """(N, P) estimator values, columns ordered as ``pairs``."""
        x = np.asarray(x, dtype=float)
        phi = np.asarray(phi, dtype=float)
        arg = 2.0 * np.outer(x, self.k)
        g = np.empty((x.size, len(self.pairs)))
        g[:, self.even_cols] = np.cos(arg) @ self.w_even
        if self.odd_cols.size:
            g[:, self.odd_cols] = np.sin(arg) @ self.w_odd
        return np.exp(-1j * np.outer(phi, self.degree)) * g


# ---------------------------------------------------------------- observables


def _normal_moment_form(n: int, m: int, eta: float) -> PolynomialForm:
    order = n + m
    herm = np.zeros(order + 1)
    herm[order] = 1.0
    coeffs = _herm.herm2poly(herm)
    scale = math.sqrt(2.0 * eta)
    coeffs = coeffs * scale ** np.arange(order + 1) / (scale**order * math.comb(order, n))
    return PolynomialForm(((m - n, tuple(coeffs)),))


def kernel_observable(which: str, eta: float = 1.0, n: int = 0, m: int = 0, s: float = 0.0, alpha: complex = 0j) -> Estimator:
    """Estimator of a single-mode observable at efficiency eta.

    ``which`` is one of "a", "a2", "n", "n2", "normal" (a^dag^n a^m with the
    given n, m) or "wigner" (s-ordered quasi-probability at ``alpha``).
    """
    if not 0 < eta <= 1:
        raise EtaOutOfDomain("efficiency must lie in (0, 1]")
    dom = (eta, eta)
    if which == "a":
        return Estimator.from_polynomial("a", PolynomialForm(((1, (0.0, 2.0)),)), dom)
    if which == "a2":
        return Estimator.from_polynomial("a^2", PolynomialForm(((2, (-1.0 / eta, 0.0, 4.0)),)), dom)
    if which == "n":
        return Estimator.from_polynomial("a^dag a", PolynomialForm(((0, (-0.5 / eta, 0.0, 2.0)),)), dom)
    if which == "n2":
        coeffs = ((1 - eta) / (2 * eta * eta), 0.0, -(4 - 2 * eta) / eta, 0.0, 8.0 / 3.0)
        return Estimator.from_polynomial("(a^dag a)^2", PolynomialForm(((0, coeffs),)), dom)
    if which == "normal":
        if n < 0 or m < 0:
            raise DomainError("powers must be non-negative")
        return Estimator.from_polynomial(f"a^dag^{n} a^{m}", _normal_moment_form(n, m, eta), dom)
    if which == "wigner":
        return _wigner_estimator(s, eta, alpha)
    raise DomainError(f"unknown observable {which!r}")


def _wigner_estimator(s: float, eta: float, alpha: complex) -> Estimator:
    width = (1.0 - s) - 1.0 / eta
    if width <= 0:
        raise SOutOfDomain(f"s-ordered estimator needs s < 1 - 1/eta = {1 - 1 / eta:.6g}, got s={s}")
    alpha = complex(alpha)

    def evaluate(x, phi):
        shift = np.real(alpha * np.exp(-1j * np.asarray(phi, dtype=float)))
        z = 2.0 * (np.asarray(x, dtype=float) - shift) ** 2 / width
        return (2.0 / (math.pi * width)) * confluent_phi_1_half(z) + 0j

    return Estimator(f"W_{s}({alpha})", evaluate, (eta, eta), meta={"s": s, "alpha": alpha})


def kernel_displaced_parity(n: int, d: int) -> Estimator:
    """Estimator of rho[n, n+d] from parity outcomes at sampled displacements."""
    if n < 0 or d < 0:
        raise DomainError("indices must be non-negative")
    sign = -1.0 if n % 2 else 1.0

    def evaluate(alpha):
        a = np.asarray(alpha, dtype=complex)
        radius = np.abs(a)
        ell = laguerre_function_table(n, d, 2.0 * radius)[n]
        return 4.0 * sign * ell * np.exp(-1j * d * np.angle(a))

    return Estimator(f"rho[{n},{n + d}]", evaluate, (0.0, 1.0), kind="parity", meta={"n": n, "d": d})


# ---------------------------------------------------------------- averaging


def _slice(data, start: int, stop: int):
    if isinstance(data, ParityData):
        return ParityData(data.alpha[start:stop], data.outcome[start:stop], data.weight[start:stop], data.seed)
    return data.slice(start, stop)


def _size(data) -> int:
    return len(data.alpha) if isinstance(data, ParityData) else len(data)


def average(est: Estimator, data, n_blocks: int = DEFAULT_BLOCKS, check_eta: bool = True) -> AverageResult:
    """Sample mean of the estimator over the records with block error statistics."""
    total = _size(data)
    if total == 0:
        raise EmptyData("no records to average")
    if check_eta and isinstance(data, DataSet) and not est.accepts_eta(data.eta):
        raise DomainError(f"estimator {est.target} is not valid for eta={data.eta}")
    acc = BlockAccumulator(total, n_blocks)
    for start in range(0, total, CHUNK):
        acc.add(est.values(_slice(data, start, min(total, start + CHUNK))))
    return acc.results()[0]


def average_bank(bank: MatrixKernelBank, data: DataSet, n_blocks: int = DEFAULT_BLOCKS) -> list[AverageResult]:
    total = len(data)
    if total == 0:
        raise EmptyData("no records to average")
    acc = BlockAccumulator(total, n_blocks, width=len(bank.pairs))
    for start in range(0, total, CHUNK):
        stop = min(total, start + CHUNK)
        acc.add(bank.values(data.x[start:stop], data.phi[start:stop]))
    return acc.results()


@dataclass(frozen=True)
class MatrixReconstruction:
    rho: DensityMatrix
    stderr: np.ndarray
    min_eigenvalue: float

    def to_dict(self) -> dict[str, Any]:
        out = self.rho.to_dict()
        out["stderr"] = self.stderr.tolist()
        out["min_eigenvalue"] = self.min_eigenvalue
        return out

    def save_json(self, path) -> Path:
        p = Path(path)
        p.write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        return p

    def save_csv(self, path) -> Path:
        p = Path(path)
        dim = self.rho.dim
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "d", "re", "im", "stderr"])
            for d in range(dim):
                for n in range(dim - d):
                    v = self.rho.entries[n, n + d]
                    w.writerow([n, d, repr(float(v.real)), repr(float(v.imag)), repr(float(self.stderr[n, n + d]))])
        return p


def reconstruct_matrix(data: DataSet, cutoff: int, eta: float | None = None, n_blocks: int = DEFAULT_BLOCKS) -> MatrixReconstruction:
    """Average every kernel rho[n, n+d] with n + d < cutoff.

    The lower triangle is filled by conjugation.  The matrix is flagged
    non-physical when its smallest eigenvalue is below -3 times the largest
    standard error.
    """
    eta = data.eta if eta is None else eta
    bank = MatrixKernelBank(cutoff, eta)
    results = average_bank(bank, data, n_blocks)
    ent = np.zeros((cutoff, cutoff), dtype=complex)
    err = np.zeros((cutoff, cutoff))
    for (n, d), res in zip(bank.pairs, results):
        ent[n, n + d] = res.mean
        err[n, n + d] = res.stderr
        if d:
            ent[n + d, n] = np.conj(res.mean)
            err[n + d, n] = res.stderr
        else:
            ent[n, n] = res.mean.real
    lam = float(np.linalg.eigvalsh(ent)[0])
    physical = lam >= -3.0 * float(err.max())
    rho = DensityMatrix(ent, trace=float(np.real(np.trace(ent))), physical=physical)
    return MatrixReconstruction(rho, err, lam)
