"""Synthetic detector records for homodyne, photocounting and heterodyne detection.

Random numbers come from per-block streams seeded by ``(seed, block index)``
so results do not depend on how the work is chunked.  Finite efficiency is
applied to ideal samples: additive Gaussian noise for quadratures and
heterodyne outcomes, binomial thinning for photon counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import kernels
from .errors import DomainError, EmptyData
from .states import (
    DensityMatrix,
    GaussianState,
    annihilation,
    quadrature_harmonics,
    quadrature_noise_variance,
    wigner_eval,
)
from .stats import AverageResult, average_values

BLOCK_SIZE = 1 << 16
GRID_STEP = 1e-3


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(block)]))


def _blocks(total: int) -> Iterator[tuple[int, int, int]]:
    for b, start in enumerate(range(0, total, BLOCK_SIZE)):
        yield b, start, min(total, start + BLOCK_SIZE)


class HomodyneRecord(NamedTuple):
    x: float
    phi: float
    theta: float | None = None
    psi0: float | None = None
    psi1: float | None = None


@dataclass
class DataSet:
    """Homodyne-type records stored column-wise.

    ``kind`` is ``"homodyne"`` (columns x, phi), ``"single_lo"`` (adds theta,
    psi0, psi1 for two-mode detection with one local oscillator),
    ``"two_channel"`` (x, phi for mode 1 and x2, phi2 for mode 2) or
    ``"spots"`` (projection coordinate x at angle phi).
    """

    x: np.ndarray
    phi: np.ndarray
    eta: float = 1.0
    seed: int | None = None
    kind: str = "homodyne"
    theta: np.ndarray | None = None
    psi0: np.ndarray | None = None
    psi1: np.ndarray | None = None
    x2: np.ndarray | None = None
    phi2: np.ndarray | None = None
    provenance: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def records(self) -> Iterator[HomodyneRecord]:
        for i in range(len(self)):
            if self.kind == "single_lo":
                yield HomodyneRecord(self.x[i], self.phi[i], self.theta[i], self.psi0[i], self.psi1[i])
            else:
                yield HomodyneRecord(self.x[i], self.phi[i])

    def slice(self, start: int, stop: int) -> "DataSet":
        def cut(a):
            return None if a is None else a[start:stop]

        return DataSet(
            self.x[start:stop],
            self.phi[start:stop],
            self.eta,
            self.seed,
            self.kind,
            cut(self.theta),
            cut(self.psi0),
            cut(self.psi1),
            cut(self.x2),
            cut(self.phi2),
            dict(self.provenance),
        )

    def columns(self) -> list[tuple[str, np.ndarray]]:
        cols = [("x", self.x), ("phi", self.phi)]
        if self.kind == "single_lo":
            cols += [("theta", self.theta), ("psi0", self.psi0), ("psi1", self.psi1)]
        if self.kind == "two_channel":
            cols += [("x2", self.x2), ("phi2", self.phi2)]
        return cols

    def sidecar(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "kind": self.kind,
            "eta": self.eta,
            "seed": self.seed,
            "N": len(self),
            "provenance": self.provenance,
        }

    def save(self, csv_path) -> tuple[Path, Path]:
        """Write ``csv_path`` and a JSON sidecar next to it."""
        path = Path(csv_path)
        cols = self.columns()
        header = ",".join(name for name, _ in cols)
        data = np.column_stack([c for _, c in cols])
        with open(path, "w", newline="\n") as fh:
            fh.write(header + "\n")
            np.savetxt(fh, data, delimiter=",", fmt="%.17g")
        side = path.with_suffix(".json")
        side.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return path, side

    @classmethod
    def load(cls, csv_path) -> "DataSet":
        path = Path(csv_path)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cols = {name: data[:, i].copy() for i, name in enumerate(header)}
        side_path = path.with_suffix(".json")
        side = json.loads(side_path.read_text()) if side_path.exists() else {}
        kind = side.get("kind")
        if kind is None:
            kind = "single_lo" if "theta" in cols else "two_channel" if "x2" in cols else "homodyne"
        return cls(
            cols["x"],
            cols["phi"],
            float(side.get("eta", 1.0)),
            side.get("seed"),
            kind,
            cols.get("theta"),
            cols.get("psi0"),
            cols.get("psi1"),
            cols.get("x2"),
            cols.get("phi2"),
            side.get("provenance", {}),
        )


def _check_eta(eta: float) -> None:
    if not 0 < eta <= 1:
        raise DomainError("efficiency must lie in (0, 1]")


def _check_count(n: int) -> None:
    if n < 1:
        raise EmptyData("need at least one record")


def _phases(policy: str, n_phases: int, start: int, stop: int, rng: np.random.Generator) -> np.ndarray:
    if policy == "uniform":
        return rng.random(stop - start) * math.pi
    if policy == "equally_spaced":
        if n_phases < 1:
            raise DomainError("equally_spaced needs at least one phase")
        return math.pi * (np.arange(start, stop) % n_phases) / n_phases
    raise DomainError(f"unknown phase policy {policy!r}")


# ---------------------------------------------------------------- homodyne


@dataclass(frozen=True)
class QuadratureTable:
    """Tabulated conditional CDF F(x|phi) = Re sum_d e^{i d phi} C_d(x)."""

    grid: np.ndarray
    cdf_re: np.ndarray
    cdf_im: np.ndarray

    @classmethod
    def for_state(cls, rho: DensityMatrix, step: float = GRID_STEP) -> "QuadratureTable":
        a = annihilation(rho.dim)
        ent = rho.entries
        mean_a = complex(np.trace(ent @ a))
        nbar = float(np.real(np.trace(ent @ a.conj().T @ a)))
        a2 = complex(np.trace(ent @ a @ a))
        var_bound = 0.25 * (1 + 2 * max(nbar - abs(mean_a) ** 2, 0.0) + 2 * abs(a2 - mean_a**2))
        half = max(abs(mean_a) + 8.0 * math.sqrt(var_bound), 4.0)
        count = int(math.ceil(2 * half / step)) + 1
        grid = np.linspace(-half, half, count)
        harm = quadrature_harmonics(rho, grid)
        cdf = cumulative_trapezoid(harm, grid, axis=1, initial=0.0)
        total = float(np.real(cdf[0, -1]))
        cdf = cdf / total
        # the compiled inverse evaluates Re[e^{-i d phi} (re + i im)]
        conj = np.conj(cdf)
        return cls(grid, np.ascontiguousarray(conj.real), np.ascontiguousarray(conj.imag))

    def invert(self, u: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return kernels.trig_inverse_cdf(
            np.ascontiguousarray(u, dtype=float),
            np.ascontiguousarray(phi, dtype=float),
            self.cdf_re,
            self.cdf_im,
            self.grid,
        )


def sample_homodyne(
    rho: DensityMatrix,
    n: int,
    eta: float = 1.0,
    phase_policy: str = "uniform",
    seed: int = 0,
    n_phases: int = 100,
    fixed_phase: float | None = None,
) -> DataSet:
    """Draw ``n`` homodyne records from a single-mode matrix.

    ``fixed_phase`` overrides the policy with a constant local-oscillator
    phase (used for direct quadrature measurements).
    """
    _check_count(n)
    _check_eta(eta)
    if rho.modes != 1:
        raise DomainError("sample_homodyne needs a single-mode matrix")
    table = QuadratureTable.for_state(rho)
    sd = math.sqrt(quadrature_noise_variance(eta))
    x = np.empty(n)
    phi = np.empty(n)
    for b, start, stop in _blocks(n):
        rng = block_rng(seed, b)
        if fixed_phase is None:
            ph = _phases(phase_policy, n_phases, start, stop, rng)
        else:
            ph = np.full(stop - start, float(fixed_phase))
        u = rng.random(stop - start)
        noise = rng.standard_normal(stop - start)
        x[start:stop] = table.invert(u, ph) + sd * noise
        phi[start:stop] = ph
    return DataSet(x, phi, eta, seed, "homodyne", provenance={"sampler": "homodyne", "phase_policy": phase_policy})


def sample_gaussian_homodyne(
    state: GaussianState, n: int, eta: float = 1.0, seed: int = 0, phase_policy: str = "uniform", n_phases: int = 100
) -> DataSet:
    """Homodyne records of a Gaussian state drawn from its exact normal law."""
    _check_count(n)
    _check_eta(eta)
    x = np.empty(n)
    phi = np.empty(n)
    for b, start, stop in _blocks(n):
        rng = block_rng(seed, b)
        ph = _phases(phase_policy, n_phases, start, stop, rng)
        z = rng.standard_normal(stop - start)
        x[start:stop] = state.quadrature_mean(ph) + np.sqrt(state.quadrature_variance(ph, eta)) * z
        phi[start:stop] = ph
    return DataSet(x, phi, eta, seed, "homodyne", provenance={"sampler": "gaussian_homodyne"})


# ---------------------------------------------------------------- photocounting


def sample_photocount(rho: DensityMatrix, n: int, eta: float = 1.0, seed: int = 0) -> np.ndarray:
    """Photon counts after binomial thinning of the ideal number distribution."""
    _check_count(n)
    _check_eta(eta)
    probs = np.clip(rho.diagonal(), 0.0, None)
    probs = probs / probs.sum()
    out = np.empty(n, dtype=np.int64)
    for b, start, stop in _blocks(n):
        rng = block_rng(seed, b)
        ideal = rng.choice(probs.size, size=stop - start, p=probs)
        out[start:stop] = rng.binomial(ideal, eta)
    return out


# ---------------------------------------------------------------- heterodyne


def _angle_cdf(theta: np.ndarray, coeffs: np.ndarray, base: np.ndarray) -> np.ndarray:
    # coeffs[:, k-1] multiplies e^{i k theta}, k >= 1; base is the k = 0 weight
    ks = np.arange(1, coeffs.shape[1] + 1)
    phase = (np.exp(1j * np.outer(theta, ks)) - 1.0) / (1j * ks)
    osc = 2.0 * np.real(np.sum(coeffs * phase, axis=1))
    return (theta * base + osc) / (2 * math.pi * base)


def _sample_q_function(rho: DensityMatrix, count: int, rng: np.random.Generator) -> np.ndarray:
    dim = rho.dim
    probs = np.clip(rho.diagonal(), 0.0, None)
    probs = probs / probs.sum()
    level = rng.choice(dim, size=count, p=probs)
    u = rng.gamma(level + 1.0)
    target = rng.random(count)
    logfact = np.array([math.lgamma(k + 1) for k in range(dim)])
    with np.errstate(divide="ignore"):
        logv = 0.5 * np.outer(np.log(u), np.arange(dim)) - 0.5 * logfact
    logv -= logv.max(axis=1, keepdims=True)
    v = np.exp(logv)
    ent = rho.entries
    base = np.einsum("in,n,in->i", v, np.real(np.diag(ent)), v)
    coeffs = np.zeros((count, max(dim - 1, 1)), dtype=complex)
    for k in range(1, dim):
        # b_k = sum_n rho[n, n+k] v_n v_{n+k}
        diag = np.array([ent[j, j + k] for j in range(dim - k)])
        coeffs[:, k - 1] = np.einsum("in,n,in->i", v[:, : dim - k], diag, v[:, k:])
    lo = np.zeros(count)
    hi = np.full(count, 2 * math.pi)
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        below = _angle_cdf(mid, coeffs, base) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.sqrt(u) * np.exp(1j * 0.5 * (lo + hi))


def sample_heterodyne(state, n: int, eta: float = 1.0, seed: int = 0) -> np.ndarray:
    """Complex heterodyne outcomes.

    ``state`` is a DensityMatrix (ideal outcomes follow its Q function) or a
    GaussianState (sampled in closed form).  Efficiency adds complex Gaussian
    noise with E|noise|^2 = (1 - eta)/eta.
    """
    _check_count(n)
    _check_eta(eta)
    extra = (1.0 - eta) / eta
    out = np.empty(n, dtype=complex)
    for b, start, stop in _blocks(n):
        rng = block_rng(seed, b)
        m = stop - start
        if isinstance(state, GaussianState):
            cov = state.cov + np.eye(2) * (0.25 + 0.5 * extra)
            xy = rng.multivariate_normal([state.mean.real, state.mean.imag], cov, size=m)
            out[start:stop] = xy[:, 0] + 1j * xy[:, 1]
            continue
        z = _sample_q_function(state, m, rng)
        noise = rng.standard_normal((m, 2)) * math.sqrt(extra / 2)
        out[start:stop] = z + noise[:, 0] + 1j * noise[:, 1]
    return out


class HeterodyneMoment(NamedTuple):
    raw: AverageResult
    normal_ordered: AverageResult


def heterodyne_moment(samples, n: int, m: int, eta: float = 1.0) -> HeterodyneMoment:
    """Average of alpha*^n alpha^m and its conversion to <a^dag^n a^m>.

    Outcomes at efficiency eta are the normal-ordered moments smeared by a
    complex Gaussian of variance 1/eta; the inversion gives per-sample values
    sum_k (-1/eta)^k k! C(n,k) C(m,k) alpha*^{n-k} alpha^{m-k}.
    """
    z = np.asarray(samples, dtype=complex)
    if z.size == 0:
        raise EmptyData("no heterodyne samples")
    _check_eta(eta)
    zc = np.conj(z)
    raw = average_values(zc**n * z**m)
    vals = np.zeros(z.size, dtype=complex)
    for k in range(min(n, m) + 1):
        coef = (-1.0 / eta) ** k * math.factorial(k) * math.comb(n, k) * math.comb(m, k)
        vals += coef * zc ** (n - k) * z ** (m - k)
    return HeterodyneMoment(raw, average_values(vals))


# ---------------------------------------------------------------- two modes


def twin_beam_quadrature_variance(xi: complex, theta, psi0, psi1, eta: float = 1.0):
    """Variance of the single-LO quadrature of a twin beam."""
    x2 = abs(xi) ** 2
    corr = 2 * abs(xi) * np.sin(2 * np.asarray(theta)) * np.cos(np.asarray(psi0) + np.asarray(psi1) - np.angle(xi))
    return (1 + x2 + corr) / (4 * (1 - x2)) + quadrature_noise_variance(eta)


def sample_twin_beam_homodyne(
    xi: complex, n: int, eta: float = 1.0, seed: int = 0, alpha: complex = 0j, beta: complex = 0j
) -> DataSet:
    """Single-LO homodyne records of a (displaced) twin beam.

    The LO mode is cos(theta) e^{-i psi0} a + sin(theta) e^{-i psi1} b with
    cos(2 theta) uniform on [-1, 1] and both phases uniform on [0, 2 pi).
    ``alpha`` and ``beta`` displace modes a and b; xi = 0 gives coherent
    product states.
    """
    _check_count(n)
    _check_eta(eta)
    if abs(xi) >= 1:
        raise DomainError("twin-beam parameter must satisfy |xi| < 1")
    x = np.empty(n)
    th = np.empty(n)
    p0 = np.empty(n)
    p1 = np.empty(n)
    for b, start, stop in _blocks(n):
        rng = block_rng(seed, b)
        m = stop - start
        t = 0.5 * np.arccos(rng.uniform(-1.0, 1.0, m))
        a0 = rng.random(m) * 2 * math.pi
        a1 = rng.random(m) * 2 * math.pi
        mean = np.cos(t) * np.real(alpha * np.exp(-1j * a0)) + np.sin(t) * np.real(beta * np.exp(-1j * a1))
        var = twin_beam_quadrature_variance(xi, t, a0, a1, eta)
        x[start:stop] = mean + np.sqrt(var) * rng.standard_normal(m)
        th[start:stop] = t
        p0[start:stop] = a0
        p1[start:stop] = a1
    return DataSet(
        x, np.zeros(n), eta, seed, "single_lo", th, p0, p1, provenance={"sampler": "twin_beam_single_lo", "xi": [xi.real, xi.imag] if isinstance(xi, complex) else [float(xi), 0.0]}
    )


def sample_twin_beam_two_channel(
    xi: complex, n: int, eta: float = 1.0, seed: int = 0, z: complex = 0j, eta2: float | None = None
) -> DataSet:
    """Separate homodyne detection of both beams of (D(z) x I) applied to a twin beam.

    Each beam has quadrature variance (1+|xi|^2)/(4(1-|xi|^2)); their
    covariance is Re(xi e^{-i(phi1+phi2)})/(2(1-|xi|^2)); D(z) shifts the
    mean of beam one by Re(z e^{-i phi1}).
    """
    _check_count(n)
    _check_eta(eta)
    eta2 = eta if eta2 is None else eta2
    _check_eta(eta2)
    if abs(xi) >= 1:
        raise DomainError("twin-beam parameter must satisfy |xi| < 1")
    x2_ = abs(xi) ** 2
    var = (1 + x2_) / (4 * (1 - x2_))
    x1 = np.empty(n)
    y = np.empty(n)
    f1 = np.empty(n)
    f2 = np.empty(n)
    for b, start, stop in _blocks(n):
        rng = block_rng(seed, b)
        m = stop - start
        a = rng.random(m) * math.pi
        c = rng.random(m) * math.pi
        cov = np.real(xi * np.exp(-1j * (a + c))) / (2 * (1 - x2_))
        g1 = rng.standard_normal(m)
        g2 = rng.standard_normal(m)
        # Cholesky factor of [[var, cov], [cov, var]]
        l21 = cov / math.sqrt(var)
        l22 = np.sqrt(np.maximum(var - l21**2, 0.0))
        n1 = rng.standard_normal(m) * math.sqrt(quadrature_noise_variance(eta))
        n2 = rng.standard_normal(m) * math.sqrt(quadrature_noise_variance(eta2))
        x1[start:stop] = np.real(z * np.exp(-1j * a)) + math.sqrt(var) * g1 + n1
        y[start:stop] = l21 * g1 + l22 * g2 + n2
        f1[start:stop] = a
        f2[start:stop] = c
    return DataSet(x1, f1, eta, seed, "two_channel", x2=y, phi2=f2, provenance={"sampler": "twin_beam_two_channel"})


# ---------------------------------------------------------------- displaced parity


@dataclass
class ParityData:
    """Displaced-parity records: displacement, parity outcome and importance weight."""

    alpha: np.ndarray
    outcome: np.ndarray
    weight: np.ndarray
    seed: int | None = None


def sample_displaced_parity(rho: DensityMatrix, n: int, seed: int = 0, proposal_sigma: float = 1.0) -> ParityData:
    """Parity outcomes at Gaussian-distributed displacements.

    The outcome +1 has probability (1 + pi W(alpha)/2)/2; the weight is
    1/(pi q(alpha)) with q the proposal density.
    """
    _check_count(n)
    al = np.empty(n, dtype=complex)
    out = np.empty(n)
    wt = np.empty(n)
    s2 = proposal_sigma**2
    for b, start, stop in _blocks(n):
        rng = block_rng(seed, b)
        m = stop - start
        xy = rng.standard_normal((m, 2)) * proposal_sigma
        a = xy[:, 0] + 1j * xy[:, 1]
        w = np.asarray(wigner_eval(rho, a))
        p_plus = np.clip(0.5 * (1 + 0.5 * math.pi * w), 0.0, 1.0)
        out[start:stop] = np.where(rng.random(m) < p_plus, 1.0, -1.0)
        q = np.exp(-np.abs(a) ** 2 / (2 * s2)) / (2 * math.pi * s2)
        al[start:stop] = a
        wt[start:stop] = 1.0 / (math.pi * q)
    return ParityData(al, out, wt, seed)
