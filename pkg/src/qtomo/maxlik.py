"""Maximum-likelihood reconstruction from homodyne data and ML fits of Gaussian states.

Density matrices are parameterized as rho = T^dag T / Tr[T^dag T] with T lower
triangular and real on the diagonal, so every candidate is a state.  The
likelihood of a record is Tr[rho Pi], where Pi is the efficiency-smeared
quadrature projector; it is linear in the real coordinates of rho, so one
design matrix per data set serves every evaluation.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.optimize import least_squares, minimize

from .detector_sim import DataSet
from .errors import DomainError, EmptyData, NonConvergence, ZeroState
from .specfun import displacement_matrix, oscillator_table
from .states import DensityMatrix, GaussianState, StateSpec, embed, make_state, quadrature_noise_variance

RESTARTS = 5
SMEAR_NODES = 40
PN_NODES = 256
IMPROVEMENT_TOL = 1e-9
_CHUNK = 4096
_P_FLOOR = 1e-300


# ---------------------------------------------------------------- parameterization


def hermitian_coords(rho: np.ndarray) -> np.ndarray:
    """Real coordinates [diag, Re upper, Im upper] of a Hermitian matrix."""
    iu = np.triu_indices(rho.shape[0], 1)
    return np.concatenate([np.real(np.diag(rho)), rho[iu].real, rho[iu].imag])


def hermitian_from_coords(theta: np.ndarray, dim: int) -> np.ndarray:
    iu = np.triu_indices(dim, 1)
    k = iu[0].size
    out = np.diag(theta[:dim]).astype(complex)
    out[iu] = theta[dim : dim + k] + 1j * theta[dim + k :]
    out[iu[1], iu[0]] = np.conj(out[iu])
    return out


def cholesky_to_params(t: np.ndarray) -> np.ndarray:
    """Real vector [diag, Re lower, Im lower] of a lower-triangular T."""
    il = np.tril_indices(t.shape[0], -1)
    return np.concatenate([np.real(np.diag(t)), t[il].real, t[il].imag])


def params_to_cholesky(params: np.ndarray, dim: int) -> np.ndarray:
    il = np.tril_indices(dim, -1)
    k = il[0].size
    t = np.diag(np.asarray(params[:dim], dtype=float)).astype(complex)
    t[il] = params[dim : dim + k] + 1j * params[dim + k :]
    return t


def density_from_params(params: np.ndarray, dim: int) -> np.ndarray:
    t = params_to_cholesky(params, dim)
    rho = t.conj().T @ t
    tr = float(np.real(np.trace(rho)))
    if tr <= 0:
        raise ZeroState("T is zero")
    rho = rho / tr
    return 0.5 * (rho + rho.conj().T)


def cholesky_of_state(rho: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Lower-triangular T with T^dag T = rho (regularized by ``floor`` I)."""
    dim = rho.shape[0]
    herm = 0.5 * (rho + rho.conj().T) + floor * np.eye(dim)
    rev = herm[::-1, ::-1]
    low = np.linalg.cholesky(rev)
    upper = low[::-1, ::-1]
    return upper.conj().T


# ---------------------------------------------------------------- design matrices


def povm_design(povms: np.ndarray) -> np.ndarray:
    """Rows a_i with Tr[rho Pi_i] = a_i . hermitian_coords(rho) for (N, D, D) Hermitian Pi_i."""
    povms = np.asarray(povms, dtype=complex)
    dim = povms.shape[1]
    iu = np.triu_indices(dim, 1)
    diag = np.real(np.einsum("nii->ni", povms))
    # rho_ab Pi_ba + rho_ba Pi_ab = 2 Re(rho_ab) Re(Pi_ab) + 2 Im(rho_ab) Im(Pi_ab)
    upper = povms[:, iu[0], iu[1]]
    return np.concatenate([diag, 2 * upper.real, 2 * upper.imag], axis=1)


def homodyne_design(x, phi, eta: float, dim: int, nodes: int = SMEAR_NODES) -> np.ndarray:
    """Design matrix of efficiency-smeared quadrature projectors in a dim-level Fock space."""
    x = np.asarray(x, dtype=float)
    phi = np.asarray(phi, dtype=float)
    noise = quadrature_noise_variance(eta)
    iu = np.triu_indices(dim, 1)
    d = (iu[1] - iu[0])[None, :]
    out = np.empty((x.size, dim * dim))
    if noise > 0:
        t, w = hermgauss(nodes)
        shift = math.sqrt(2 * noise) * t
        w = w / math.sqrt(math.pi)
    for s in range(0, x.size, _CHUNK):
        xs = x[s : s + _CHUNK]
        if noise > 0:
            psi = oscillator_table(dim - 1, xs[:, None] - shift[None, :])
            gram = np.einsum("aik,bik,k->iab", psi, psi, w)
        else:
            psi = oscillator_table(dim - 1, xs)
            gram = np.einsum("ai,bi->iab", psi, psi)
        g = gram[:, iu[0], iu[1]]
        ang = d * phi[s : s + _CHUNK, None]
        # Pi_ab = G_ab e^{-i (b - a) phi} for a < b
        out[s : s + _CHUNK, :dim] = np.einsum("iaa->ia", gram)
        out[s : s + _CHUNK, dim : dim + iu[0].size] = 2 * g * np.cos(ang)
        out[s : s + _CHUNK, dim + iu[0].size :] = -2 * g * np.sin(ang)
    return out


# ---------------------------------------------------------------- likelihood engine


@dataclass(frozen=True)
class LikelihoodProblem:
    """Weighted log-likelihood sum_i w_i log(a_i . coords(rho))."""

    design: np.ndarray
    dim: int
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.design.shape[0] == 0:
            raise EmptyData("no records")
        if self.design.shape[1] != self.dim * self.dim:
            raise DomainError("design width does not match dimension")

    @property
    def total_weight(self) -> float:
        return float(self.design.shape[0] if self.weights is None else np.sum(self.weights))

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return self.design @ hermitian_coords(rho)

    def log_likelihood(self, rho: np.ndarray) -> float:
        p = np.maximum(self.probabilities(rho), _P_FLOOR)
        lp = np.log(p)
        return float(lp.sum() if self.weights is None else lp @ self.weights)

    def gradient_operator(self, rho: np.ndarray) -> np.ndarray:
        """R = sum_i w_i Pi_i / p_i, divided by the total weight."""
        p = np.maximum(self.probabilities(rho), _P_FLOOR)
        r = 1.0 / p if self.weights is None else self.weights / p
        h = self.design.T @ r / self.total_weight
        dim = self.dim
        k = (dim * (dim - 1)) // 2
        coords = np.concatenate([h[:dim], 0.5 * h[dim : dim + k], 0.5 * h[dim + k :]])
        return hermitian_from_coords(coords, dim)


def rhor_iterate(problem: LikelihoodProblem, rho0: np.ndarray, max_iter: int = 2000, tol: float = IMPROVEMENT_TOL):
    """Fixed-point iteration rho -> R rho R / Tr; returns (rho, trace of log-likelihoods, converged)."""
    rho = rho0
    like = problem.log_likelihood(rho)
    trace = [like]
    scale = problem.total_weight
    for _ in range(max_iter):
        r = problem.gradient_operator(rho)
        new = r @ rho @ r
        new = new / np.real(np.trace(new))
        new = 0.5 * (new + new.conj().T)
        new_like = problem.log_likelihood(new)
        if new_like < like:
            break
        gain = (new_like - like) / scale
        rho, like = new, new_like
        trace.append(like)
        if gain < tol:
            return rho, trace, True
    return rho, trace, False


@dataclass(frozen=True)
class RestartRecord:
    seed: int
    log_likelihood: float
    evaluations: int
    success: bool


@dataclass(frozen=True)
class MLResult:
    """Maximum-likelihood state with its optimization history."""

    state: DensityMatrix
    log_likelihood: float
    trace: list[float]
    restarts: list[RestartRecord]
    converged: bool
    tail_weight: float
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "tail_weight": self.tail_weight,
            "trace": list(map(float, self.trace)),
            "restarts": [r.__dict__ for r in self.restarts],
            "state": self.state.to_dict(),
            "meta": self.meta,
        }

    def save_json(self, path) -> Path:
        p = Path(path)
        p.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return p


def maximize_likelihood(
    problem: LikelihoodProblem,
    initial: np.ndarray | None = None,
    restarts: int = RESTARTS,
    budget: int = 1500,
    seed: int = 0,
    jitter: float = 0.05,
    strict: bool = False,
) -> MLResult:
    """RrhoR ascent followed by simplex polishing of T from seeded restarts.

    Restart 0 starts at the ascent result; the others perturb its Cholesky
    factor by relative noise ``jitter``.  The best restart wins.  The
    returned trace is the best log-likelihood after each accepted simplex
    iteration, so it never decreases.
    """
    dim = problem.dim
    start = np.eye(dim, dtype=complex) / dim if initial is None else np.asarray(initial, dtype=complex)
    rho, trace, ascent_ok = rhor_iterate(problem, start)
    base = cholesky_to_params(cholesky_of_state(rho))
    scale = problem.total_weight
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    best_params, best_like = base, problem.log_likelihood(rho)
    records = []
    trace = list(trace)
    any_ok = False

    def negative(params):
        try:
            return -problem.log_likelihood(density_from_params(params, dim))
        except ZeroState:
            return np.inf

    for k in range(restarts):
        x0 = base if k == 0 else base + jitter * np.linalg.norm(base) / math.sqrt(base.size) * rng.standard_normal(base.size)
        history = []
        res = minimize(
            negative,
            x0,
            method="Nelder-Mead",
            callback=lambda xk: history.append(-negative(xk)),
            options={"maxfev": budget, "xatol": 1e-10, "fatol": IMPROVEMENT_TOL * scale, "adaptive": True},
        )
        like = -float(res.fun)
        ok = bool(res.success)
        any_ok = any_ok or ok
        records.append(RestartRecord(k, like, int(res.nfev), ok))
        if like > best_like:
            best_params, best_like = res.x, like
            trace.extend(v for v in history if v > trace[-1])
            if trace[-1] < like:
                trace.append(like)
    rho = density_from_params(best_params, dim)
    converged = ascent_ok or any_ok
    if not converged and strict:
        raise NonConvergence("likelihood improvement never fell below tolerance")
    state = DensityMatrix(rho, physical=True)
    return MLResult(state, problem.log_likelihood(rho), trace, records, converged, float(np.real(rho[-1, -1])))


def ml_reconstruct(
    data: DataSet,
    cutoff: int,
    eta: float | None = None,
    budget: int = 1500,
    restarts: int = RESTARTS,
    seed: int = 0,
    initial: DensityMatrix | None = None,
    strict: bool = False,
) -> MLResult:
    """ML density matrix in a ``cutoff``-level Fock space from homodyne records."""
    if cutoff < 1:
        raise DomainError("cutoff must be at least 1")
    if len(data) == 0:
        raise EmptyData("no records")
    eta = data.eta if eta is None else eta
    design = homodyne_design(data.x, data.phi, eta, cutoff)
    problem = LikelihoodProblem(design, cutoff)
    start = None if initial is None else embed(initial, cutoff).entries
    result = maximize_likelihood(problem, start, restarts, budget, seed, strict=strict)
    meta = {"cutoff": cutoff, "eta": eta, "records": len(data), "seed": seed, "budget": budget}
    return MLResult(result.state, result.log_likelihood, result.trace, result.restarts, result.converged, result.tail_weight, meta)


# ---------------------------------------------------------------- spin pairs


def spin_pair_povms() -> tuple[list[tuple[str, str, int, int]], np.ndarray]:
    """Labels (axis_a, axis_b, s_a, s_b) and 4x4 projectors for joint Pauli measurements."""
    from .spin import AXES, PAULI

    labels, ops = [], []
    eye = np.eye(2)
    for a in AXES:
        for b in AXES:
            for sa in (1, -1):
                for sb in (1, -1):
                    pa = 0.5 * (eye + sa * PAULI[a])
                    pb = 0.5 * (eye + sb * PAULI[b])
                    labels.append((a, b, sa, sb))
                    ops.append(np.kron(pa, pb))
    return labels, np.array(ops)


def ml_spin_pair(counts: dict[tuple[str, str, int, int], float], seed: int = 0, budget: int = 1500) -> MLResult:
    """ML two-qubit state from joint Pauli-axis counts keyed as in ``spin_pair_povms``."""
    labels, ops = spin_pair_povms()
    w = np.array([float(counts.get(lab, 0.0)) for lab in labels])
    if w.sum() <= 0:
        raise EmptyData("no counts")
    keep = w > 0
    problem = LikelihoodProblem(povm_design(ops[keep]), 4, w[keep])
    return maximize_likelihood(problem, seed=seed, budget=budget)


# ---------------------------------------------------------------- Gaussian states


@dataclass(frozen=True)
class GaussianStateParams:
    """Wigner width Delta (<= 1), squeezing r and mean mu."""

    delta: float
    r: float
    mu: complex

    def __post_init__(self):
        if not 0 < self.delta <= 1 + 1e-12:
            raise DomainError("Delta must lie in (0, 1]")

    @property
    def n_th(self) -> float:
        return 0.5 * (1.0 / self.delta**2 - 1.0)

    @property
    def n_sq(self) -> float:
        return math.sinh(self.r) ** 2

    @property
    def n_coh(self) -> float:
        return abs(self.mu) ** 2

    def quadrature_variance(self, phi, eta: float = 1.0):
        c, s = np.cos(phi), np.sin(phi)
        return (math.exp(2 * self.r) * c * c + math.exp(-2 * self.r) * s * s) / (4 * self.delta**2) + quadrature_noise_variance(eta)

    def state(self) -> GaussianState:
        return GaussianState.from_params(max(self.n_th, 0.0), self.r, self.mu)

    def density_matrix(self, dim: int | None = None) -> DensityMatrix:
        return make_state(StateSpec.squeezed_thermal(max(self.n_th, 0.0), self.r, self.mu, cutoff=dim))


def gaussian_log_likelihood(params, x, phi, eta: float = 1.0) -> float:
    """Log-likelihood of (log Delta, r, Re mu, Im mu) for homodyne records at efficiency ``eta``."""
    log_delta, r, mre, mim = params
    c, s = np.cos(phi), np.sin(phi)
    var = (math.exp(2 * r) * c * c + math.exp(-2 * r) * s * s) * math.exp(-2 * log_delta) / 4 + quadrature_noise_variance(eta)
    mean = mre * c + mim * s
    return float(np.sum(-0.5 * np.log(2 * math.pi * var) - (x - mean) ** 2 / (2 * var)))


def _moment_guess(x, phi, eta: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    coef, *_ = np.linalg.lstsq(np.column_stack([c, s]), x, rcond=None)
    resid2 = (x - np.column_stack([c, s]) @ coef) ** 2
    # resid2 ~ A + B cos(2 phi) + C sin(2 phi); A +- B are the x and y variances
    fit, *_ = np.linalg.lstsq(np.column_stack([np.ones_like(x), np.cos(2 * phi), np.sin(2 * phi)]), resid2, rcond=None)
    noise = quadrature_noise_variance(eta)
    vx = max(fit[0] + fit[1] - noise, 1e-3)
    vy = max(fit[0] - fit[1] - noise, 1e-3)
    r = 0.25 * math.log(vx / vy)
    log_delta = min(-0.25 * math.log(16 * vx * vy), 0.0)
    return np.array([log_delta, r, coef[0], coef[1]])


def _numerical_hessian(f, x0: np.ndarray, step: float = 1e-4) -> np.ndarray:
    n = x0.size
    h = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = step
            ej[j] = step
            val = (f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej)) / (4 * step * step)
            h[i, j] = h[j, i] = val
    return h


@dataclass(frozen=True)
class GaussianFit:
    """ML Gaussian parameters, their covariance in (Delta, r, Re mu, Im mu) and the fit history."""

    params: GaussianStateParams
    covariance: np.ndarray
    log_likelihood: float
    trace: list[float]
    restarts: list[RestartRecord]
    converged: bool
    eta: float
    n_records: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))

    def photon_numbers(self) -> dict[str, float]:
        return {"n_th": self.params.n_th, "n_sq": self.params.n_sq, "n_coh": self.params.n_coh}

    def photon_number_stderr(self) -> dict[str, float]:
        d, r, mu = self.params.delta, self.params.r, self.params.mu
        grads = {
            "n_th": np.array([-1.0 / d**3, 0, 0, 0]),
            "n_sq": np.array([0, math.sinh(2 * r), 0, 0]),
            "n_coh": np.array([0, 0, 2 * mu.real, 2 * mu.imag]),
        }
        return {k: float(math.sqrt(max(g @ self.covariance @ g, 0.0))) for k, g in grads.items()}

    def photon_pmf(self, nmax: int) -> tuple[np.ndarray, np.ndarray]:
        """Photon-number pmf of the fitted squeezed thermal state (mu ignored) and delta-method errors."""
        d, r = self.params.delta, self.params.r
        n_th = max(self.params.n_th, 0.0)
        p = np.array([squeezed_thermal_pn(n, n_th, r) for n in range(nmax + 1)])
        step = 1e-6
        # Delta - step raises n_th by step / Delta^3, which keeps n_th >= 0
        dd = np.array([squeezed_thermal_pn(n, n_th + step / d**3, r) for n in range(nmax + 1)])
        dr = np.array([squeezed_thermal_pn(n, n_th, r + step) for n in range(nmax + 1)])
        jac = np.column_stack([(p - dd) / step, (dr - p) / step])
        cov = self.covariance[:2, :2]
        err = np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", jac, cov, jac), 0.0))
        return p, err

    def to_dict(self) -> dict[str, Any]:
        names = ["delta", "r", "re_mu", "im_mu"]
        vals = [self.params.delta, self.params.r, self.params.mu.real, self.params.mu.imag]
        return {
            "parameters": {n: {"value": v, "stderr": float(e)} for n, v, e in zip(names, vals, self.stderr)},
            "photon_numbers": self.photon_numbers(),
            "photon_number_stderr": self.photon_number_stderr(),
            "covariance": self.covariance.tolist(),
            "log_likelihood": self.log_likelihood,
            "trace": list(map(float, self.trace)),
            "restarts": [r.__dict__ for r in self.restarts],
            "converged": self.converged,
            "eta": self.eta,
            "records": self.n_records,
        }

    def save_json(self, path) -> Path:
        p = Path(path)
        p.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return p


def ml_gaussian_fit(
    data: DataSet,
    eta: float | None = None,
    restarts: int = RESTARTS,
    seed: int = 0,
    budget: int = 2000,
    strict: bool = False,
) -> GaussianFit:
    """Fit (Delta, r, mu) by simplex maximization of the Gaussian homodyne likelihood.

    At eta < 1 the quadrature variance carries the added noise (1 - eta)/(4 eta).
    """
    if len(data) == 0:
        raise EmptyData("no records")
    eta = data.eta if eta is None else eta
    x, phi = np.asarray(data.x, dtype=float), np.asarray(data.phi, dtype=float)
    guess = _moment_guess(x, phi, eta)
    scale = float(x.size)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    bounds = [(-10.0, 0.0), (-5.0, 5.0), (None, None), (None, None)]

    def negative(p):
        return -gaussian_log_likelihood(p, x, phi, eta)

    best, best_like = guess, -negative(guess)
    trace = [best_like]
    records = []
    any_ok = False
    for k in range(restarts):
        x0 = guess if k == 0 else guess + np.array([0.05, 0.05, 0.05, 0.05]) * rng.standard_normal(4)
        x0[0] = min(x0[0], 0.0)
        history = []
        res = minimize(
            negative,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            callback=lambda xk: history.append(-negative(xk)),
            options={"maxfev": budget, "xatol": 1e-9, "fatol": IMPROVEMENT_TOL * scale},
        )
        like = -float(res.fun)
        ok = bool(res.success)
        any_ok = any_ok or ok
        records.append(RestartRecord(k, like, int(res.nfev), ok))
        if like > best_like:
            best, best_like = res.x, like
            trace.extend(v for v in history if v > trace[-1])
            if trace[-1] < like:
                trace.append(like)
    if not any_ok and strict:
        raise NonConvergence("Gaussian fit did not converge")
    hess = _numerical_hessian(negative, np.asarray(best, dtype=float))
    try:
        cov_log = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        cov_log = np.full((4, 4), np.nan)
    delta = math.exp(best[0])
    jac = np.diag([delta, 1.0, 1.0, 1.0])
    cov = jac @ cov_log @ jac
    params = GaussianStateParams(min(delta, 1.0), float(best[1]), complex(best[2], best[3]))
    return GaussianFit(params, cov, best_like, trace, records, any_ok, eta, x.size)


# ---------------------------------------------------------------- overlaps and pmfs


def _as_matrix(state, dim: int | None) -> np.ndarray:
    if isinstance(state, GaussianStateParams):
        state = state.state()
    if isinstance(state, GaussianState):
        return gaussian_density_matrix(state, dim or 40).entries
    if isinstance(state, DensityMatrix):
        return state.entries
    return np.asarray(state, dtype=complex)


def overlap(rho_a, rho_b) -> float:
    """Normalized overlap Tr[a b] / sqrt(Tr[a^2] Tr[b^2]).

    Accepts density matrices, arrays and Gaussian states.  Two Gaussian
    states are compared in closed form; otherwise Gaussian inputs are
    expanded in the Fock basis of the other argument (or 40 levels).
    """
    ga = rho_a.state() if isinstance(rho_a, GaussianStateParams) else rho_a
    gb = rho_b.state() if isinstance(rho_b, GaussianStateParams) else rho_b
    if isinstance(ga, GaussianState) and isinstance(gb, GaussianState):
        return float(ga.overlap_trace(gb) / math.sqrt(ga.purity() * gb.purity()))
    dim = None
    for s in (ga, gb):
        if not isinstance(s, GaussianState):
            dim = max(dim or 0, np.asarray(_as_matrix(s, None)).shape[0])
    a = _as_matrix(ga, dim)
    b = _as_matrix(gb, dim)
    size = max(a.shape[0], b.shape[0])
    a = np.pad(a, ((0, size - a.shape[0]), (0, size - a.shape[0])))
    b = np.pad(b, ((0, size - b.shape[0]), (0, size - b.shape[0])))
    pa = float(np.real(np.vdot(a, a)))
    pb = float(np.real(np.vdot(b, b)))
    if pa <= 0 or pb <= 0:
        raise ZeroState("overlap needs states with non-zero purity")
    return float(np.real(np.vdot(a.conj().T, b)) / math.sqrt(pa * pb))


def gaussian_density_matrix(state: GaussianState, dim: int) -> DensityMatrix:
    """Truncated Fock matrix of a single-mode Gaussian state with any covariance orientation."""
    vals, vecs = np.linalg.eigh(state.cov)
    vy, vx = vals
    angle = math.atan2(vecs[1, 1], vecs[0, 1])
    det = math.sqrt(max(vx * vy, 0.0))
    n_th = max(2 * det - 0.5, 0.0)
    r = 0.25 * math.log(vx / vy) if vy > 0 else 0.0
    big = 2 * dim + 80
    centered = make_state(StateSpec.squeezed_thermal(n_th, r, 0j, cutoff=big)).entries
    n = np.arange(big)
    rot = np.exp(1j * angle * (n[:, None] - n[None, :]))
    disp = displacement_matrix(dim, big, state.mean)
    rho = disp @ (centered * rot) @ disp.conj().T
    captured = float(np.real(np.trace(rho)))
    return DensityMatrix(rho / captured, captured_trace=captured)


def squeezed_thermal_pn(n: int, n_th: float, r: float, nodes: int = PN_NODES) -> float:
    """Photon-number probability of a squeezed thermal state by periodic trapezoid quadrature."""
    if n_th < 0:
        raise DomainError("n_th must be non-negative")
    if n < 0:
        return 0.0
    phi = 2 * math.pi * np.arange(nodes) / nodes
    c = (n_th + 0.5) * (math.exp(-2 * r) * np.sin(phi) ** 2 + math.exp(2 * r) * np.cos(phi) ** 2) + 0.5
    return float(np.mean(((c - 1.0) / c) ** n / c))


# ---------------------------------------------------------------- quadratic Hamiltonians


def _sinc_terms(w: complex) -> tuple[complex, complex, complex]:
    """cos w, sin w / w and (cos w - 1) / w^2 with small-w series."""
    if abs(w) < 1e-6:
        w2 = w * w
        return 1 - w2 / 2, 1 - w2 / 6, -0.5 + w2 / 24
    return cmath.cos(w), cmath.sin(w) / w, (cmath.cos(w) - 1) / (w * w)


def bogoliubov_from_hamiltonian(alpha: complex, phi: float, xi: complex) -> tuple[complex, complex, complex]:
    """(gamma, delta, mu) of U^dag a U = gamma a + delta a^dag + mu for U = exp(-i H).

    H = alpha a + alpha^* a^dag + phi a^dag a + xi a^2 / 2 + xi^* a^dag^2 / 2.
    """
    w = cmath.sqrt(phi * phi - abs(xi) ** 2)
    c, sinc, cosm = _sinc_terms(w)
    gamma = c - 1j * phi * sinc
    delta = -1j * np.conj(xi) * sinc
    mu = (phi * np.conj(alpha) - np.conj(xi) * alpha) * cosm - 1j * np.conj(alpha) * sinc
    return complex(gamma), complex(delta), complex(mu)


def hamiltonian_from_bogoliubov(gamma: complex, delta: complex, mu: complex, guess=(0j, 0.1, 0j), tol: float = 1e-14):
    """Numerically invert ``bogoliubov_from_hamiltonian``; returns (alpha, phi, xi)."""
    target = np.array([gamma.real, gamma.imag, delta.real, delta.imag, mu.real, mu.imag])

    def residual(p):
        g, d, m = bogoliubov_from_hamiltonian(complex(p[0], p[1]), p[2], complex(p[3], p[4]))
        return np.array([g.real, g.imag, d.real, d.imag, m.real, m.imag]) - target

    a0, f0, x0 = guess
    res = least_squares(residual, [a0.real, a0.imag, f0, x0.real, x0.imag], xtol=tol, ftol=tol, gtol=tol)
    p = res.x
    return complex(p[0], p[1]), float(p[2]), complex(p[3], p[4])


def evolve_gaussian(state: GaussianState, gamma: complex, delta: complex, mu: complex) -> GaussianState:
    """Gaussian state after the Bogoliubov map a -> gamma a + delta a^dag + mu."""
    g, d = complex(gamma), complex(delta)
    s = np.array([[(g + d).real, -(g - d).imag], [(g + d).imag, (g - d).real]])
    mean = g * state.mean + d * np.conj(state.mean) + mu
    return GaussianState(complex(mean), s @ state.cov @ s.T)


def output_wigner(wigner_in, gamma: complex, delta: complex, mu: complex):
    """Output Wigner function beta -> W_in[(beta - mu) gamma^* - (beta^* - mu^*) delta]."""

    def w_out(beta):
        b = np.asarray(beta, dtype=complex) - mu
        return wigner_in(b * np.conj(gamma) - np.conj(b) * delta)

    return w_out
