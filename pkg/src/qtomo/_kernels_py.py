"""Pure numpy implementations of the hot loops.

Selected automatically when the compiled extension is unavailable, or when
``QTOMO_PURE_PYTHON=1`` is set.  Every function here has the same signature
and output as its counterpart in ``qtomo._ckernels``.
"""

from __future__ import annotations

import numpy as np


def set_threads(n: int) -> None:
    """No-op; numpy manages its own BLAS threads."""


def joint_photon_values(x, theta, t_nodes, w_nodes, kappa: float, nmax: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t_nodes, dtype=float)
    base = np.asarray(w_nodes) * t * kappa * kappa
    phase = np.exp(2j * np.outer(x, np.sqrt(kappa * t))) * base  # (N, K)
    c2 = np.cos(theta) ** 2
    ya = kappa * np.outer(c2, t)
    yb = kappa * np.outer(1.0 - c2, t)
    la = _laguerre_stack(nmax, ya)  # (nmax+1, N, K)
    lb = _laguerre_stack(nmax, yb)
    return np.einsum("ik,nik,mik->inm", phase, la, lb, optimize=True)


def _laguerre_stack(nmax: int, y: np.ndarray) -> np.ndarray:
    out = np.empty((nmax + 1,) + y.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 1.0 - y
    for n in range(1, nmax):
        out[n + 1] = ((2 * n + 1 - y) * out[n] - n * out[n - 1]) / (n + 1)
    return out


def total_photon_values(x, t_nodes, weights, kappa: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    root = np.sqrt(kappa * np.asarray(t_nodes, dtype=float))
    phase = 2.0 * np.outer(x, root)
    w = np.asarray(weights, dtype=float)
    return np.cos(phase) @ w.T + 1j * (np.sin(phase) @ w.T)


def trig_inverse_cdf(u, phi, cdf_re, cdf_im, grid) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    grid = np.asarray(grid, dtype=float)
    ndeg = cdf_re.shape[0]
    degrees = np.arange(ndeg)
    cd = np.cos(np.outer(phi, degrees))
    sd = np.sin(np.outer(phi, degrees))

    def cdf_at(idx):
        return np.einsum("id,di->i", cd, cdf_re[:, idx]) + np.einsum("id,di->i", sd, cdf_im[:, idx])

    lo = np.zeros(u.size, dtype=np.intp)
    hi = np.full(u.size, grid.size - 1, dtype=np.intp)
    flo = cdf_at(lo)
    fhi = cdf_at(hi)
    while True:
        active = hi - lo > 1
        if not np.any(active):
            break
        mid = (lo + hi) // 2
        fmid = cdf_at(mid)
        go_right = active & (fmid < u)
        go_left = active & ~(fmid < u)
        lo = np.where(go_right, mid, lo)
        flo = np.where(go_right, fmid, flo)
        hi = np.where(go_left, mid, hi)
        fhi = np.where(go_left, fmid, fhi)
    span = fhi - flo
    frac = np.divide(u - flo, span, out=np.zeros_like(u), where=span > 0)
    return grid[lo] + frac * (grid[hi] - grid[lo])
