"""Tomographic imaging of classical pictures with Fock-basis kernels.

An image m(alpha) on the plane alpha = x + i y is treated as pi times a
Wigner function: its projections p(x, theta) = int dy/pi m((x + i y) e^{i theta})
are read as homodyne densities at phase theta, so the eta = 1 matrix kernels
turn projection data into a trace-class (not necessarily positive) matrix.
Images are normalized to unit mass, int m d^2alpha / pi = 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.ndimage import map_coordinates
from scipy.signal import fftconvolve
from scipy.special import eval_laguerre

from .detector_sim import DataSet, block_rng
from .errors import DomainError, EmptyData
from .estimators import MatrixKernelBank, MatrixReconstruction, reconstruct_matrix
from .states import DensityMatrix, wigner_eval

DEFAULT_ANGLES = 100
_CHUNK = 2000


@dataclass(frozen=True)
class ImagePlane:
    """Image samples ``values[i, j]`` at ``x[j] + i y[i]`` on a uniform grid."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    @property
    def step(self) -> tuple[float, float]:
        return float(self.x[1] - self.x[0]), float(self.y[1] - self.y[0])

    @property
    def mass(self) -> float:
        """int m d^2alpha / pi."""
        dx, dy = self.step
        return float(np.sum(self.values) * dx * dy / math.pi)

    def normalized(self) -> "ImagePlane":
        mass = self.mass
        if mass == 0:
            raise DomainError("image has zero mass")
        return ImagePlane(self.x, self.y, self.values / mass)

    def __add__(self, other: "ImagePlane") -> "ImagePlane":
        return ImagePlane(self.x, self.y, self.values + other.values)

    def save_pgm(self, path, lo: float | None = None, hi: float | None = None) -> Path:
        """16-bit binary graymap; values are mapped linearly from [lo, hi] onto [0, 65535]."""
        v = np.asarray(self.values, dtype=float)
        lo = float(v.min()) if lo is None else lo
        hi = float(v.max()) if hi is None else hi
        span = hi - lo if hi > lo else 1.0
        # row 0 of the file is the top of the picture (largest y)
        gray = np.clip(np.round((v[::-1] - lo) / span * 65535), 0, 65535).astype(">u2")
        p = Path(path)
        with open(p, "wb") as fh:
            fh.write(f"P5\n{v.shape[1]} {v.shape[0]}\n65535\n".encode("ascii"))
            fh.write(gray.tobytes())
        return p

    def save_csv(self, path) -> Path:
        p = Path(path)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "value"])
            for i, yv in enumerate(self.y):
                for j, xv in enumerate(self.x):
                    w.writerow([repr(float(xv)), repr(float(yv)), repr(float(self.values[i, j]))])
        return p


def read_pgm(path) -> np.ndarray:
    """Pixel array of a binary (P5) graymap, top row first."""
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise DomainError("only binary graymaps are supported")
    width, height, maxval = (int(f) for f in fields[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(raw[pos + 1 :], dtype=dtype, count=width * height).reshape(height, width).astype(float)


def disc_image(radius: float = 1.0, half_width: float = 2.0, points: int = 401) -> ImagePlane:
    """Uniform disc of unit mass sampled on a square grid."""
    x = np.linspace(-half_width, half_width, points)
    xx, yy = np.meshgrid(x, x)
    vals = np.where(xx * xx + yy * yy <= radius * radius, 1.0 / radius**2, 0.0)
    return ImagePlane(x, x.copy(), vals)


# ---------------------------------------------------------------- projections


@dataclass(frozen=True)
class RadonProfileSet:
    """Profiles ``values[f, i]`` at angles ``angles[f]`` and abscissae ``x[i]``.

    ``weights`` are integration weights over x, so the mass of profile f is
    weights @ values[f].
    """

    angles: np.ndarray
    x: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    def masses(self) -> np.ndarray:
        return self.values @ self.weights

    def normalized(self) -> "RadonProfileSet":
        m = self.masses()
        if np.any(m <= 0):
            raise DomainError("every profile needs positive mass")
        return RadonProfileSet(self.angles, self.x, self.values / m[:, None], self.weights)

    @classmethod
    def on_grid(cls, angles, x, values) -> "RadonProfileSet":
        x = np.asarray(x, dtype=float)
        w = np.empty_like(x)
        dx = np.diff(x)
        w[0], w[-1] = dx[0] / 2, dx[-1] / 2
        w[1:-1] = 0.5 * (dx[:-1] + dx[1:])
        return cls(np.asarray(angles, dtype=float), x, np.asarray(values, dtype=float), w)


def equally_spaced_angles(count: int = DEFAULT_ANGLES) -> np.ndarray:
    return np.pi * np.arange(count) / count


def disc_profiles(angles, radius: float = 1.0, x=None, nodes: int = 400) -> RadonProfileSet:
    """Exact projections (2 / (pi R^2)) sqrt(R^2 - x^2) of the unit-mass disc.

    Without ``x`` the abscissae are Chebyshev nodes of the second kind with
    weights that integrate the square-root edge exactly.
    """
    angles = np.asarray(angles, dtype=float)
    if x is None:
        k = np.arange(1, nodes + 1)
        t = k * np.pi / (nodes + 1)
        xs = radius * np.cos(t)
        w = radius * np.pi / (nodes + 1) * np.sin(t)
        prof = 2.0 / (math.pi * radius**2) * radius * np.sin(t)
        return RadonProfileSet(angles, xs, np.tile(prof, (angles.size, 1)), w)
    xs = np.asarray(x, dtype=float)
    prof = 2.0 / (math.pi * radius**2) * np.sqrt(np.clip(radius * radius - xs * xs, 0.0, None))
    return RadonProfileSet.on_grid(angles, xs, np.tile(prof, (angles.size, 1)))


def radon_project(img: ImagePlane, angles, x=None) -> RadonProfileSet:
    """Projections p(x, theta) = int dy/pi m((x + i y) e^{i theta}) by bilinear interpolation."""
    angles = np.asarray(angles, dtype=float)
    dx, dy = img.step
    reach = math.hypot(max(abs(img.x[0]), abs(img.x[-1])), max(abs(img.y[0]), abs(img.y[-1])))
    h = min(dx, dy)
    xs = np.arange(-reach, reach + 0.5 * h, h) if x is None else np.asarray(x, dtype=float)
    ys = np.arange(-reach, reach + 0.5 * h, h)
    out = np.empty((angles.size, xs.size))
    for f, th in enumerate(angles):
        c, s = math.cos(th), math.sin(th)
        px = xs[:, None] * c - ys[None, :] * s
        py = xs[:, None] * s + ys[None, :] * c
        col = (px - img.x[0]) / dx
        row = (py - img.y[0]) / dy
        vals = map_coordinates(img.values, [row.ravel(), col.ravel()], order=1, mode="constant", cval=0.0)
        out[f] = vals.reshape(px.shape).sum(axis=1) * h / math.pi
    return RadonProfileSet.on_grid(angles, xs, out)


def sample_spots(profiles: RadonProfileSet, n_per_angle: int, seed: int = 0) -> DataSet:
    """Spot coordinates drawn per angle by inverse-CDF sampling of each profile."""
    if n_per_angle < 1:
        raise EmptyData("need at least one spot per angle")
    xs, phis = [], []
    for f, th in enumerate(profiles.angles):
        vals = np.clip(profiles.values[f], 0.0, None)
        cdf = cumulative_trapezoid(vals, profiles.x, initial=0.0)
        if cdf[-1] <= 0:
            raise DomainError(f"profile at angle {th} has no mass")
        cdf = cdf / cdf[-1]
        u = block_rng(seed, f).random(n_per_angle)
        xs.append(np.interp(u, cdf, profiles.x))
        phis.append(np.full(n_per_angle, th))
    prov = {"source": "sample_spots", "angles": int(profiles.angles.size), "per_angle": int(n_per_angle)}
    return DataSet(np.concatenate(xs), np.concatenate(phis), 1.0, seed, "spots", provenance=prov)


# ---------------------------------------------------------------- reconstruction


def image_reconstruct(spots: DataSet, cutoff: int, n_blocks: int = 20) -> MatrixReconstruction:
    """Trace-class matrix of an image from projection spots (eta = 1 kernels)."""
    if cutoff < 1:
        raise DomainError("cutoff must be at least 1")
    res = reconstruct_matrix(spots, cutoff, eta=1.0, n_blocks=n_blocks)
    rho = DensityMatrix(res.rho.entries, trace=res.rho.trace, physical=False)
    return MatrixReconstruction(rho, res.stderr, res.min_eigenvalue)


def profile_reconstruct(profiles: RadonProfileSet, cutoff: int) -> DensityMatrix:
    """Matrix of an image by integrating the kernels against its projections.

    The angle average is the plain mean over ``profiles.angles``, which
    should be equally spaced on [0, pi).
    """
    bank = MatrixKernelBank(cutoff, 1.0)
    acc = np.zeros(len(bank.pairs), dtype=complex)
    for f, th in enumerate(profiles.angles):
        wv = profiles.weights * profiles.values[f]
        for s in range(0, profiles.x.size, _CHUNK):
            sl = slice(s, s + _CHUNK)
            acc += wv[sl] @ bank.values(profiles.x[sl], np.full(profiles.x[sl].size, th))
    acc /= profiles.angles.size
    ent = np.zeros((cutoff, cutoff), dtype=complex)
    for (n, d), v in zip(bank.pairs, acc):
        ent[n, n + d] = v if d else v.real
        if d:
            ent[n + d, n] = np.conj(v)
    return DensityMatrix(ent, trace=float(np.real(np.trace(ent))), physical=False)


def image_render(rho: DensityMatrix, x, y) -> ImagePlane:
    """Image m = pi W of a (possibly non-positive) matrix on the grid x + i y."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    grid = xs[None, :] + 1j * ys[:, None]
    return ImagePlane(xs, ys, math.pi * np.asarray(wigner_eval(rho, grid)))


def hilbert_distance(rho_a, rho_b) -> float:
    """Tr[(a - b)^2] after zero-padding both matrices to a common size."""
    a = rho_a.entries if isinstance(rho_a, DensityMatrix) else np.asarray(rho_a, dtype=complex)
    b = rho_b.entries if isinstance(rho_b, DensityMatrix) else np.asarray(rho_b, dtype=complex)
    size = max(a.shape[0], b.shape[0])
    a = np.pad(a, ((0, size - a.shape[0]), (0, size - a.shape[0])))
    b = np.pad(b, ((0, size - b.shape[0]), (0, size - b.shape[0])))
    diff = a - b
    return float(np.sum(np.abs(diff) ** 2))


# ---------------------------------------------------------------- disc oracles


def rhocircle(n: int, radius: float = 1.0) -> float:
    """Diagonal element of the unit-mass disc of radius R by the confluent series.

    rho_nn = 2 e^{-2R^2} sum_nu (-2)^nu C(n, nu) Phi(1 - nu, 2, 2R^2).
    The nu >= 1 terms are polynomials in 2R^2 and are summed in exact
    rational arithmetic to avoid cancellation; nu = 0 gives (e^z - 1)/z.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    z = 2.0 * radius * radius
    zq = Fraction(z)
    poly = Fraction(0)
    for nu in range(1, n + 1):
        # Phi(1 - nu, 2, z) = sum_k (1 - nu)_k z^k / ((2)_k k!)
        term = Fraction(1)
        phi = Fraction(1)
        for k in range(nu - 1):
            term = term * (1 - nu + k) * zq / ((2 + k) * (k + 1))
            phi += term
        poly += (-2) ** nu * math.comb(n, nu) * phi
    head = -math.expm1(-z) / z
    return 2.0 * (head + math.exp(-z) * float(poly))


def disc_diagonal(nmax: int, radius: float = 1.0) -> np.ndarray:
    """rho_nn = ((-1)^n / R^2) int_0^{2R^2} e^{-u} L_n(2u) du by Gauss-Legendre quadrature."""
    z = 2.0 * radius * radius
    t, w = np.polynomial.legendre.leggauss(max(64, 2 * nmax + 32))
    u = 0.5 * z * (t + 1.0)
    w = 0.5 * z * w * np.exp(-u)
    return np.array([(-1) ** n * (w @ eval_laguerre(n, 2.0 * u)) for n in range(nmax + 1)]) / radius**2


def disc_matrix(dim: int, radius: float = 1.0) -> DensityMatrix:
    return DensityMatrix(np.diag(disc_diagonal(dim - 1, radius)).astype(complex), physical=False)


# ---------------------------------------------------------------- back-projection baseline


def histogram_profiles(spots: DataSet, bin_width: float, extent: float | None = None) -> RadonProfileSet:
    """Per-angle spot histograms normalized to unit mass."""
    angles = np.unique(spots.phi)
    reach = float(np.max(np.abs(spots.x))) + bin_width if extent is None else extent
    edges = np.arange(-reach, reach + bin_width, bin_width)
    centers = 0.5 * (edges[1:] + edges[:-1])
    vals = np.empty((angles.size, centers.size))
    for f, th in enumerate(angles):
        counts, _ = np.histogram(spots.x[spots.phi == th], bins=edges)
        vals[f] = counts / (counts.sum() * bin_width)
    return RadonProfileSet.on_grid(angles, centers, vals)


def _filtered_profile(x: np.ndarray, values: np.ndarray) -> np.ndarray:
    """q(s) = P int p'(x) / (s - x) dx at the grid nodes s = x_i.

    The singular node is excluded symmetrically; the local correction
    -p''(s) h restores the excluded cell to second order.
    """
    h = float(x[1] - x[0])
    dp = np.gradient(values, h)
    d2p = np.gradient(dp, h)
    offsets = np.arange(-(x.size - 1), x.size)
    kern = np.zeros(offsets.size)
    nz = offsets != 0
    kern[nz] = 1.0 / offsets[nz]
    conv = fftconvolve(dp, kern, mode="full")[x.size - 1 : 2 * x.size - 1]
    return conv - d2p * h


def inverse_radon_baseline(profiles: RadonProfileSet, x, y) -> ImagePlane:
    """Filtered back-projection m(alpha) = (1/2pi) int_0^pi dtheta P int p'(x) / (alpha_theta - x) dx.

    Profiles must lie on a uniform grid and angles be equally spaced on [0, pi).
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    grid = xs[None, :] + 1j * ys[:, None]
    # zero-pad the profiles so every projected image point lies on the grid
    h = float(profiles.x[1] - profiles.x[0])
    reach = float(np.max(np.abs(grid))) + 2 * h
    lo = int(math.ceil(max(profiles.x[0] - (-reach), 0.0) / h))
    hi = int(math.ceil(max(reach - profiles.x[-1], 0.0) / h))
    px = np.concatenate([profiles.x[0] - h * np.arange(lo, 0, -1), profiles.x, profiles.x[-1] + h * np.arange(1, hi + 1)])
    out = np.zeros(grid.shape)
    for f, th in enumerate(profiles.angles):
        q = _filtered_profile(px, np.pad(profiles.values[f], (lo, hi)))
        proj = np.real(grid * np.exp(-1j * th))
        out += np.interp(proj, px, q)
    out *= (math.pi / profiles.angles.size) / (2 * math.pi)
    return ImagePlane(xs, ys, out)
