"""Deterministic quadrature averages used as independent references."""

import math

import numpy as np
from scipy.signal import fftconvolve

from qtomo.states import DensityMatrix, quadrature_harmonics


def random_state(seed, dim=5):
    g = np.random.default_rng(seed)
    a = g.normal(size=(dim, dim)) + 1j * g.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return DensityMatrix(rho / np.trace(rho).real)


def smeared_harmonics(rho, x, eta):
    """Phase harmonics of p_eta on the uniform grid x, smeared by direct convolution."""
    harm = quadrature_harmonics(rho, x)
    if eta == 1.0:
        return harm
    var = (1 - eta) / (4 * eta)
    step = x[1] - x[0]
    half = int(math.ceil(10 * math.sqrt(var) / step))
    u = np.arange(-half, half + 1) * step
    g = np.exp(-u * u / (2 * var)) / math.sqrt(2 * math.pi * var) * step
    return np.stack([fftconvolve(h.real, g, mode="same") + 1j * fftconvolve(h.imag, g, mode="same") for h in harm])


def phase_space_average(func, rho, eta=1.0, half_width=9.0, x_points=3601, phases=48):
    """Integral of func(x, phi) p_eta(x, phi) dx dphi / pi over [0, pi)."""
    x = np.linspace(-half_width, half_width, x_points)
    harm = smeared_harmonics(rho, x, eta)
    d = np.arange(rho.dim)
    t, w = np.polynomial.legendre.leggauss(phases)
    phi = 0.5 * math.pi * (t + 1)
    w = 0.5 * w
    total = 0j
    for ph, wk in zip(phi, w):
        p = np.real(np.exp(1j * d * ph) @ harm)
        total += wk * np.trapezoid(p * func(x, np.full_like(x, ph)), x)
    return complex(total)
