"""Special functions used by the tomographic estimators.

All routines accept scalars or numpy arrays for the continuous argument and
return a float for scalar input.  Orthogonal polynomials use their three-term
recurrences; oscillator eigenfunctions and Laguerre functions carry an
explicit log-scale so that Fock indices of several hundred stay finite.
"""

from __future__ import annotations

import decimal
import math
from decimal import Decimal

import numpy as np
from numpy.typing import ArrayLike

from .errors import DomainError

_SERIES_TOL = 1e-17
_SERIES_CAP = 10_000
_RESCALE = 1e150


def _finish(value: np.ndarray, scalar: bool):
    return float(value) if scalar else value


def hermite(n: int, x: ArrayLike):
    """Physicists' Hermite polynomial H_n(x).

    Computed with H_{k+1} = 2x H_k - 2k H_{k-1}.  Very large ``n * |x|``
    overflows to infinity, which is left to numpy's IEEE semantics.
    """
    if n < 0:
        raise DomainError("hermite degree must be non-negative")
    xa = np.asarray(x, dtype=float)
    prev = np.ones_like(xa)
    if n == 0:
        return _finish(prev, xa.ndim == 0)
    cur = 2.0 * xa
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n):
            prev, cur = cur, 2.0 * xa * cur - 2.0 * k * prev
    return _finish(cur, xa.ndim == 0)


def laguerre(n: int, d: float, x: ArrayLike):
    """Generalized Laguerre polynomial L_n^d(x) for any real order d."""
    if n < 0:
        raise DomainError("laguerre degree must be non-negative")
    xa = np.asarray(x, dtype=float)
    prev = np.ones_like(xa)
    if n == 0:
        return _finish(prev, xa.ndim == 0)
    cur = 1.0 + d - xa
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + d - xa) * cur - (k + d) * prev) / (k + 1)
    return _finish(cur, xa.ndim == 0)


def _is_nonpositive_int(v: float) -> bool:
    return v <= 0 and float(v).is_integer()


def _kummer_series(a: float, b: float, z: float, exp_shift: float = 0.0) -> float:
    # Power series of 1F1 times exp(exp_shift), in 60-digit decimal
    # arithmetic.  After Kummer's transformation the leading terms may
    # alternate and cancel by many digits, which double precision cannot
    # absorb.  Terms are summed until negligible and already shrinking.
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        da, db, dz = Decimal(a), Decimal(b), Decimal(z)
        total = Decimal(1)
        term = Decimal(1)
        tol = Decimal(_SERIES_TOL) * Decimal("1e-8")
        for k in range(_SERIES_CAP):
            ratio = (da + k) * dz / ((db + k) * (k + 1))
            term *= ratio
            total += term
            if term == 0:
                break
            if abs(term) <= tol * abs(total) and abs(ratio) < 1:
                break
        if exp_shift:
            total *= Decimal(exp_shift).exp()
        return float(total)


def confluent_phi(a: float, b: float, z: float) -> float:
    """Kummer's confluent hypergeometric function Phi(a, b; z) = 1F1(a; b; z).

    Negative arguments go through Kummer's transformation
    Phi(a, b; z) = e^z Phi(b - a, b; -z) unless ``a`` is a non-positive
    integer, in which case the finite polynomial is summed directly.
    """
    if _is_nonpositive_int(b):
        raise DomainError("confluent_phi: b must not be a non-positive integer")
    if z == 0.0:
        return 1.0
    if z < 0.0 and not _is_nonpositive_int(a):
        return _kummer_series(b - a, b, -z, exp_shift=z)
    return _kummer_series(a, b, z)


def gauss_f(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; z) for |z| < 1."""
    if abs(z) >= 1.0:
        raise DomainError("gauss_f: series requires |z| < 1")
    if _is_nonpositive_int(c):
        raise DomainError("gauss_f: c must not be a non-positive integer")
    total = 1.0
    term = 1.0
    for k in range(_SERIES_CAP):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1)) * z
        total += term
        if term == 0.0 or abs(term) <= _SERIES_TOL * abs(total):
            break
    return total


def oscillator_table(nmax: int, x: ArrayLike) -> np.ndarray:
    """Oscillator eigenfunctions psi_0..psi_nmax at ``x``.

    Returns an array of shape ``(nmax + 1,) + shape(x)``.  The recurrence
    sqrt(k+1) psi_{k+1} = 2x psi_k - sqrt(k) psi_{k-1} is run on mantissas
    with a separate log-scale, so psi_n stays accurate where e^{-x^2}
    alone would underflow.
    """
    if nmax < 0:
        raise DomainError("nmax must be non-negative")
    xa = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + xa.shape)
    logscale = 0.25 * math.log(2.0 / math.pi) - xa * xa
    prev = np.zeros_like(xa)
    cur = np.ones_like(xa)
    out[0] = np.exp(logscale)
    for k in range(nmax):
        nxt = (2.0 * xa * cur - math.sqrt(k) * prev) / math.sqrt(k + 1)
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            scale = np.where(big, _RESCALE, 1.0)
            cur = cur / scale
            prev = prev / scale
            logscale = logscale + np.log(scale)
        with np.errstate(under="ignore"):
            out[k + 1] = cur * np.exp(logscale)
    return out


def oscillator_psi(n: int, x: ArrayLike):
    """Normalized oscillator eigenfunction <x|n> with vacuum variance 1/4.

    psi_n(x) = (2/pi)^{1/4} (2^n n!)^{-1/2} H_n(sqrt(2) x) exp(-x^2).
    """
    xa = np.asarray(x, dtype=float)
    return _finish(oscillator_table(n, xa)[n], xa.ndim == 0)


def laguerre_function_table(nmax: int, d: int, k: ArrayLike) -> np.ndarray:
    """Normalized Laguerre functions for a fixed order ``d >= 0``.

    Row ``n`` holds sqrt(n!/(n+d)!) k^d L_n^d(k^2) exp(-k^2/2), which is the
    modulus-bounded displacement matrix element <n+d|D(beta)|n> with
    |beta| = k, stripped of its phase.
    """
    if d < 0:
        raise DomainError("order d must be non-negative")
    ka = np.abs(np.asarray(k, dtype=float))
    y = ka * ka
    out = np.empty((nmax + 1,) + ka.shape)
    with np.errstate(divide="ignore"):
        logk = np.log(ka)
    if d == 0:
        logscale = -0.5 * y
    else:
        logscale = d * logk - 0.5 * y - 0.5 * math.lgamma(d + 1)
    logscale = np.where(np.isneginf(logscale), -np.inf, logscale)
    prev = np.zeros_like(ka)
    cur = np.ones_like(ka)
    out[0] = np.exp(logscale)
    for n in range(nmax):
        # L_{n+1} = ((2n+1+d-y) L_n - (n+d) L_{n-1}) / (n+1), normalized.
        a = (2 * n + 1 + d - y) * math.sqrt((n + 1) / (n + d + 1)) / (n + 1)
        if n == 0:
            nxt = a * cur
        else:
            b = (n + d) * math.sqrt((n + 1) * n / ((n + d + 1) * (n + d))) / (n + 1)
            nxt = a * cur - b * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            scale = np.where(big, _RESCALE, 1.0)
            cur = cur / scale
            prev = prev / scale
            logscale = logscale + np.log(scale)
        with np.errstate(under="ignore", invalid="ignore"):
            out[n + 1] = np.where(np.isneginf(logscale), 0.0, cur * np.exp(logscale))
    return out


def log_factorial(n: int) -> float:
    return math.lgamma(n + 1)


def displacement_element(m: int, n: int, beta: complex) -> complex:
    """Fock matrix element <m|D(beta)|n> of the displacement operator."""
    r = abs(beta)
    if m >= n:
        mag = laguerre_function_table(n, m - n, r)[n]
        return complex(mag * np.exp(1j * (m - n) * np.angle(beta)))
    mag = laguerre_function_table(m, n - m, r)[m]
    return complex(mag * (-1) ** (n - m) * np.exp(-1j * (n - m) * np.angle(beta)))


def displacement_matrix(rows: int, cols: int, beta: complex) -> np.ndarray:
    """Block <m|D(beta)|n> for 0 <= m < rows, 0 <= n < cols."""
    r = abs(beta)
    phase = np.exp(1j * np.angle(beta)) if r > 0 else 1.0
    out = np.zeros((rows, cols), dtype=complex)
    for d in range(max(rows, cols)):
        # below the diagonal: m = n + d
        count = min(cols, rows - d)
        if count > 0:
            vals = laguerre_function_table(count - 1, d, r)
            idx = np.arange(count)
            out[idx + d, idx] = vals * phase**d
        if d == 0:
            continue
        count = min(rows, cols - d)
        if count > 0:
            vals = laguerre_function_table(count - 1, d, r)
            idx = np.arange(count)
            out[idx, idx + d] = (-1) ** d * vals * np.conj(phase) ** d
    return out


def confluent_phi_1_half(z: ArrayLike):
    """Vectorized Phi(1, 1/2; -z) for z >= 0 via Dawson's integral.

    Uses Phi(1, 1/2; -z) = 1 - 2 sqrt(z) F(sqrt(z)); agrees with
    ``confluent_phi`` and is used inside per-record estimators.
    """
    from scipy.special import dawsn

    za = np.asarray(z, dtype=float)
    root = np.sqrt(np.maximum(za, 0.0))
    return _finish(1.0 - 2.0 * root * dawsn(root), za.ndim == 0)
