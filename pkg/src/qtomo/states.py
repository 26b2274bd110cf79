"""Reference optical states in a truncated Fock basis.

Conventions used throughout the package:

* quadrature ``X_phi = (a^dag e^{i phi} + a e^{-i phi}) / 2`` with vacuum
  variance 1/4, so ``<x|n>_phi = psi_n(x) e^{-i n phi}``;
* squeezing ``S(r) = exp[r (a^dag^2 - a^2) / 2]``, so ``r > 0`` stretches the
  ``phi = 0`` quadrature to variance ``e^{2r}/4``;
* Wigner functions integrate to one over ``d^2 alpha = dx dy`` (vacuum
  peak ``2/pi``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import scipy.linalg
from numpy.polynomial.hermite import hermgauss

from .errors import CutoffTooSmall, DomainError
from .specfun import displacement_matrix, laguerre_function_table, oscillator_table

SCHEMA_VERSION = 1
TRACE_TOL = 1e-6
_KINDS = (
    "vacuum",
    "coherent",
    "fock",
    "thermal",
    "displaced_squeezed",
    "squeezed_thermal",
    "cat",
    "twin_beam",
)


@dataclass(frozen=True)
class StateSpec:
    """Description of a reference state; ``cutoff=None`` picks one automatically."""

    kind: str
    alpha: complex = 0j
    n: int = 0
    n_th: float = 0.0
    r: float = 0.0
    xi: complex = 0j
    cutoff: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown state kind {self.kind!r}")
        if self.n_th < 0:
            raise DomainError("thermal photon number must be non-negative")
        if self.n < 0:
            raise DomainError("Fock index must be non-negative")
        if abs(self.xi) >= 1:
            raise DomainError("twin-beam parameter must satisfy |xi| < 1")
        if self.kind == "cat" and self.alpha == 0:
            raise DomainError("cat state needs alpha != 0")

    # convenience constructors
    @classmethod
    def vacuum(cls, cutoff=None):
        return cls("vacuum", cutoff=cutoff)

    @classmethod
    def coherent(cls, alpha, cutoff=None):
        return cls("coherent", alpha=complex(alpha), cutoff=cutoff)

    @classmethod
    def fock(cls, n, cutoff=None):
        return cls("fock", n=int(n), cutoff=cutoff)

    @classmethod
    def thermal(cls, n_th, cutoff=None):
        return cls("thermal", n_th=float(n_th), cutoff=cutoff)

    @classmethod
    def displaced_squeezed(cls, alpha, r, cutoff=None):
        return cls("displaced_squeezed", alpha=complex(alpha), r=float(r), cutoff=cutoff)

    @classmethod
    def squeezed_thermal(cls, n_th, r, alpha=0j, cutoff=None):
        return cls("squeezed_thermal", alpha=complex(alpha), n_th=float(n_th), r=float(r), cutoff=cutoff)

    @classmethod
    def cat(cls, alpha, cutoff=None):
        return cls("cat", alpha=complex(alpha), cutoff=cutoff)

    @classmethod
    def twin_beam(cls, xi, cutoff=None):
        return cls("twin_beam", xi=complex(xi), cutoff=cutoff)

    @property
    def modes(self) -> int:
        return 2 if self.kind == "twin_beam" else 1

    def mean_photons(self) -> float:
        """Mean photon number (per beam for the twin beam)."""
        a2 = abs(self.alpha) ** 2
        if self.kind == "vacuum":
            return 0.0
        if self.kind == "coherent":
            return a2
        if self.kind == "fock":
            return float(self.n)
        if self.kind == "thermal":
            return self.n_th
        if self.kind == "displaced_squeezed":
            return a2 + math.sinh(self.r) ** 2
        if self.kind == "squeezed_thermal":
            return a2 + (2 * self.n_th + 1) * math.cosh(2 * self.r) / 2 - 0.5
        if self.kind == "cat":
            return a2 * math.tanh(a2)
        x2 = abs(self.xi) ** 2
        return x2 / (1 - x2)

    def default_cutoff(self) -> int:
        nbar = self.mean_photons()
        return int(math.ceil(nbar + 6 * math.sqrt(nbar + 1))) + 4

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind in ("coherent", "displaced_squeezed", "squeezed_thermal", "cat"):
            out["alpha"] = [self.alpha.real, self.alpha.imag]
        if self.kind == "fock":
            out["n"] = self.n
        if self.kind in ("thermal", "squeezed_thermal"):
            out["n_th"] = self.n_th
        if self.kind in ("displaced_squeezed", "squeezed_thermal"):
            out["r"] = self.r
        if self.kind == "twin_beam":
            out["xi"] = [self.xi.real, self.xi.imag]
        if self.cutoff is not None:
            out["cutoff"] = self.cutoff
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StateSpec":
        def cplx(v):
            if isinstance(v, (list, tuple)):
                return complex(v[0], v[1])
            return complex(v)

        return cls(
            kind=data["kind"],
            alpha=cplx(data.get("alpha", 0)),
            n=int(data.get("n", 0)),
            n_th=float(data.get("n_th", 0.0)),
            r=float(data.get("r", 0.0)),
            xi=cplx(data.get("xi", 0)),
            cutoff=data.get("cutoff"),
        )


@dataclass(frozen=True)
class DensityMatrix:
    """Truncated density matrix.

    Two-mode matrices use the row-major pair index ``n1 * dim + n2``.
    ``trace`` is the declared trace (1 for states); ``physical`` is False for
    matrices that need not be positive, such as image encodings or noisy
    linear reconstructions.
    """

    entries: np.ndarray
    modes: int = 1
    trace: float = 1.0
    physical: bool = True
    captured_trace: float = 1.0

    def __post_init__(self):
        arr = np.array(self.entries, dtype=complex)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        """Fock cutoff per mode."""
        size = self.entries.shape[0]
        return size if self.modes == 1 else int(round(math.sqrt(size)))

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.entries)).copy()

    def element(self, n: int, m: int) -> complex:
        return complex(self.entries[n, m])

    def two_mode_element(self, n1: int, n2: int, m1: int, m2: int) -> complex:
        d = self.dim
        return complex(self.entries[n1 * d + n2, m1 * d + m2])

    def joint_photon_pmf(self) -> np.ndarray:
        d = self.dim
        return self.diagonal().reshape(d, d)

    def partial_trace(self, keep: int) -> "DensityMatrix":
        d = self.dim
        t = self.entries.reshape(d, d, d, d)
        red = np.einsum("ijkj->ik", t) if keep == 0 else np.einsum("jijk->ik", t)
        return DensityMatrix(red, modes=1, trace=self.trace, physical=self.physical)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0) <= tol)

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "modes": self.modes,
            "dim": self.dim,
            "trace": self.trace,
            "captured_trace": self.captured_trace,
            "physical": self.physical,
            "entries": [[[float(v.real), float(v.imag)] for v in row] for row in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DensityMatrix":
        arr = np.array(data["entries"], dtype=float)
        return cls(
            arr[..., 0] + 1j * arr[..., 1],
            modes=int(data.get("modes", 1)),
            trace=float(data.get("trace", 1.0)),
            physical=bool(data.get("physical", True)),
            captured_trace=float(data.get("captured_trace", 1.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------- builders


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def expectation(rho: DensityMatrix, op: np.ndarray) -> complex:
    return complex(np.trace(rho.entries @ op))


def _coherent_ket(alpha: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    logmag = -0.5 * abs(alpha) ** 2 - 0.5 * np.array([math.lgamma(k + 1) for k in n])
    if alpha == 0:
        out = np.zeros(dim, dtype=complex)
        out[0] = 1.0
        return out
    logmag = logmag + n * math.log(abs(alpha))
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def _squeezed_vacuum_ket(r: float, dim: int) -> np.ndarray:
    out = np.zeros(dim, dtype=complex)
    t = math.tanh(r)
    amp = 1.0 / math.sqrt(math.cosh(r))
    for k in range(0, (dim + 1) // 2):
        if 2 * k >= dim:
            break
        out[2 * k] = amp * math.sqrt(math.comb(2 * k, k)) / 2.0**k * t**k
    return out


def _squeeze_unitary(r: float, dim: int) -> np.ndarray:
    a = annihilation(dim)
    gen = 0.5 * r * (a.conj().T @ a.conj().T - a @ a)
    return scipy.linalg.expm(gen)


def _thermal_weights(n_th: float, count: int) -> np.ndarray:
    if n_th == 0:
        w = np.zeros(count)
        w[0] = 1.0
        return w
    q = n_th / (1 + n_th)
    return (1 - q) * q ** np.arange(count)


def _build(spec: StateSpec, dim: int) -> np.ndarray:
    """Unnormalized truncated matrix whose trace is the captured trace."""
    kind = spec.kind
    if kind == "vacuum":
        ket = np.zeros(dim, dtype=complex)
        ket[0] = 1
        return np.outer(ket, ket.conj())
    if kind == "coherent":
        ket = _coherent_ket(spec.alpha, dim)
        return np.outer(ket, ket.conj())
    if kind == "fock":
        ket = np.zeros(dim, dtype=complex)
        if spec.n < dim:
            ket[spec.n] = 1
        return np.outer(ket, ket.conj())
    if kind == "thermal":
        return np.diag(_thermal_weights(spec.n_th, dim)).astype(complex)
    if kind == "cat":
        a = spec.alpha
        norm = 2 * (1 + math.exp(-2 * abs(a) ** 2))
        ket = (_coherent_ket(a, dim) + _coherent_ket(-a, dim)) / math.sqrt(norm)
        return np.outer(ket, ket.conj())
    if kind == "displaced_squeezed":
        big = 2 * dim + 80
        sq = _squeezed_vacuum_ket(spec.r, big)
        ket = displacement_matrix(dim, big, spec.alpha) @ sq
        return np.outer(ket, ket.conj())
    if kind == "squeezed_thermal":
        big = 2 * dim + 80
        weights = _thermal_weights(spec.n_th, big)
        keep = max(1, int(np.searchsorted(-np.cumsum(weights), -(1 - 1e-15))) + 1)
        keep = min(keep, big // 2)
        sq = _squeeze_unitary(spec.r, big)[:, :keep]
        inner = (sq * weights[:keep]) @ sq.conj().T
        disp = displacement_matrix(dim, big, spec.alpha)
        return disp @ inner @ disp.conj().T
    # twin beam
    xi = spec.xi
    x2 = abs(xi) ** 2
    coef = math.sqrt(1 - x2) * xi ** np.arange(dim)
    ket = np.zeros(dim * dim, dtype=complex)
    ket[np.arange(dim) * (dim + 1)] = coef
    return np.outer(ket, ket.conj())


def make_state(spec: StateSpec) -> DensityMatrix:
    """Normalized truncated density matrix for ``spec``.

    With an explicit cutoff, ``CutoffTooSmall`` is raised when it captures
    less than ``1 - 1e-6`` of the trace; without one the default cutoff is
    enlarged until the requirement holds.
    """
    dim = spec.cutoff if spec.cutoff is not None else spec.default_cutoff()
    if dim < 1:
        raise DomainError("cutoff must be positive")
    while True:
        raw = _build(spec, dim)
        captured = float(np.real(np.trace(raw)))
        if captured >= 1 - TRACE_TOL:
            break
        if spec.cutoff is not None:
            raise CutoffTooSmall(f"cutoff {dim} captures trace {captured:.8f} < {1 - TRACE_TOL}")
        dim = int(math.ceil(dim * 1.25)) + 2
    rho = raw / captured
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, modes=spec.modes, captured_trace=captured)


def embed(rho: DensityMatrix, dim: int) -> DensityMatrix:
    """Zero-pad or truncate a single-mode matrix to ``dim``."""
    out = np.zeros((dim, dim), dtype=complex)
    k = min(dim, rho.dim)
    out[:k, :k] = rho.entries[:k, :k]
    return replace(rho, entries=out)


# ---------------------------------------------------------------- phase space


def wigner_eval(rho: DensityMatrix, alpha) -> np.ndarray | float:
    """Wigner function W(alpha) of a single-mode matrix, unit-integral normalization."""
    if rho.modes != 1:
        raise DomainError("wigner_eval needs a single-mode matrix")
    al = np.asarray(alpha, dtype=complex)
    radius = np.abs(al)
    angle = np.angle(al)
    dim = rho.dim
    ent = rho.entries
    total = np.zeros(al.shape)
    for d in range(dim):
        count = dim - d
        table = laguerre_function_table(count - 1, d, 2.0 * radius)
        signs = (-1.0) ** np.arange(count)
        coeffs = signs * np.array([ent[n, n + d] for n in range(count)])
        series = np.tensordot(coeffs, table, axes=(0, 0))
        if d == 0:
            total = total + np.real(series)
        else:
            total = total + 2.0 * np.real(series * np.exp(1j * d * angle))
    out = (2.0 / math.pi) * total
    return float(out) if al.ndim == 0 else out


@dataclass(frozen=True)
class WignerGrid:
    """Samples of a real phase-space function on a rectangular grid.

    ``values[i, j]`` is taken at ``x[j] + i y[i]``; ``order`` is the
    ordering parameter s of the sampled quasi-distribution.
    """

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    order: float = 0.0

    @property
    def step(self) -> float:
        return float(self.x[1] - self.x[0])

    def integral(self) -> float:
        return float(np.sum(self.values) * (self.x[1] - self.x[0]) * (self.y[1] - self.y[0]))


def wigner_grid(rho: DensityMatrix, x, y) -> WignerGrid:
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    grid = xs[None, :] + 1j * ys[:, None]
    return WignerGrid(xs, ys, np.asarray(wigner_eval(rho, grid)), 0.0)


def wigner_s_convolve(grid: WignerGrid, s: float) -> WignerGrid:
    """Smooth an order-s' grid to order s < s' by Gaussian convolution.

    The kernel ``2/(pi (s'-s)) exp(-2|alpha-beta|^2/(s'-s))`` has variance
    ``(s'-s)/4`` per real coordinate.
    """
    from scipy.ndimage import gaussian_filter

    delta = grid.order - s
    if delta <= 0:
        raise DomainError("target order must be below the grid order")
    sigma = math.sqrt(delta / 4.0)
    dx = float(grid.x[1] - grid.x[0])
    dy = float(grid.y[1] - grid.y[0])
    vals = gaussian_filter(grid.values, sigma=(sigma / dy, sigma / dx), mode="constant", truncate=8.0)
    return WignerGrid(grid.x, grid.y, vals, s)


# ---------------------------------------------------------------- quadratures


def quadrature_noise_variance(eta: float) -> float:
    """Variance added to homodyne outcomes by efficiency ``eta``."""
    if not 0 < eta <= 1:
        raise DomainError("efficiency must lie in (0, 1]")
    return (1.0 - eta) / (4.0 * eta)


def quadrature_harmonics(rho: DensityMatrix, x) -> np.ndarray:
    """Harmonic coefficients c_d(x) with p(x, phi) = Re sum_d e^{i d phi} c_d(x).

    Returns shape ``(dim,) + shape(x)``; c_0 is the phase-averaged density.
    """
    xa = np.asarray(x, dtype=float)
    psi = oscillator_table(rho.dim - 1, xa)
    ent = rho.entries
    out = np.zeros((rho.dim,) + xa.shape, dtype=complex)
    for d in range(rho.dim):
        diag = np.array([ent[n, n + d] for n in range(rho.dim - d)])
        prod = psi[: rho.dim - d] * psi[d:]
        term = np.tensordot(diag, prod, axes=(0, 0))
        out[d] = term if d == 0 else 2.0 * term
    return out


def quadrature_pdf(rho: DensityMatrix, x, phi, eta: float = 1.0, nodes: int = 80):
    """Homodyne density p_eta(x, phi) of a single-mode matrix.

    Finite efficiency convolves the ideal density with a Gaussian of variance
    (1-eta)/(4 eta), evaluated by Gauss-Hermite quadrature.
    """
    noise = quadrature_noise_variance(eta)
    xa = np.asarray(x, dtype=float)
    ph = np.asarray(phi, dtype=float)
    xb, pb = np.broadcast_arrays(xa, ph)

    def ideal(xx):
        harm = quadrature_harmonics(rho, xx)
        d = np.arange(rho.dim).reshape((-1,) + (1,) * xx.ndim)
        return np.real(np.sum(harm * np.exp(1j * d * pb), axis=0))

    if noise == 0:
        val = ideal(xb)
    else:
        t, w = hermgauss(nodes)
        width = math.sqrt(2.0 * noise)
        val = sum(wk * ideal(xb - width * tk) for tk, wk in zip(t, w)) / math.sqrt(math.pi)
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------- Gaussian states


@dataclass(frozen=True)
class GaussianState:
    """Single-mode Gaussian state: complex mean and (x, y) covariance matrix."""

    mean: complex
    cov: np.ndarray = field(default_factory=lambda: np.eye(2) / 4)

    @classmethod
    def from_params(cls, n_th: float = 0.0, r: float = 0.0, mu: complex = 0j) -> "GaussianState":
        scale = (2 * n_th + 1) / 4.0
        cov = np.diag([scale * math.exp(2 * r), scale * math.exp(-2 * r)])
        return cls(complex(mu), cov)

    @classmethod
    def from_spec(cls, spec: StateSpec) -> "GaussianState":
        if spec.kind in ("vacuum",):
            return cls.from_params()
        if spec.kind == "coherent":
            return cls.from_params(mu=spec.alpha)
        if spec.kind == "thermal":
            return cls.from_params(n_th=spec.n_th)
        if spec.kind == "displaced_squeezed":
            return cls.from_params(r=spec.r, mu=spec.alpha)
        if spec.kind == "squeezed_thermal":
            return cls.from_params(n_th=spec.n_th, r=spec.r, mu=spec.alpha)
        raise DomainError(f"{spec.kind} is not a Gaussian state")

    def quadrature_variance(self, phi, eta: float = 1.0):
        c, s = np.cos(phi), np.sin(phi)
        v = self.cov
        return c * c * v[0, 0] + s * s * v[1, 1] + 2 * c * s * v[0, 1] + quadrature_noise_variance(eta)

    def quadrature_mean(self, phi):
        return np.real(self.mean * np.exp(-1j * np.asarray(phi)))

    def quadrature_pdf(self, x, phi, eta: float = 1.0):
        var = self.quadrature_variance(phi, eta)
        return np.exp(-((np.asarray(x) - self.quadrature_mean(phi)) ** 2) / (2 * var)) / np.sqrt(2 * math.pi * var)

    def wigner(self, alpha):
        al = np.asarray(alpha, dtype=complex)
        dv = np.stack([al.real - self.mean.real, al.imag - self.mean.imag], axis=-1)
        inv = np.linalg.inv(self.cov)
        quad = np.einsum("...i,ij,...j->...", dv, inv, dv)
        return np.exp(-0.5 * quad) / (2 * math.pi * math.sqrt(np.linalg.det(self.cov)))

    def purity(self) -> float:
        return 1.0 / (4.0 * math.sqrt(np.linalg.det(self.cov)))

    def overlap_trace(self, other: "GaussianState") -> float:
        """Tr[rho_a rho_b] = pi * integral of W_a W_b."""
        total = self.cov + other.cov
        dv = np.array([self.mean.real - other.mean.real, self.mean.imag - other.mean.imag])
        quad = dv @ np.linalg.solve(total, dv)
        return math.pi * math.exp(-0.5 * quad) / (2 * math.pi * math.sqrt(np.linalg.det(total)))

    def mean_photons(self) -> float:
        return float(np.trace(self.cov) - 0.5 + abs(self.mean) ** 2)
