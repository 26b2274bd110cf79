"""Spin-1/2 reconstruction from measurement frequencies along x, y and z."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, EmptyData
from .states import DensityMatrix

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
AXES = ("x", "y", "z")


@dataclass(frozen=True)
class SpinCounts:
    """Counts per axis of outcomes +1/2 (``up``) and -1/2 (``down``)."""

    up: dict[str, int]
    down: dict[str, int]

    def __post_init__(self):
        for ax in AXES:
            u, d = self.up.get(ax, 0), self.down.get(ax, 0)
            if u < 0 or d < 0:
                raise DomainError("counts must be non-negative")
            if u + d == 0:
                raise EmptyData(f"no counts on axis {ax}")

    def mean_sigma(self, axis: str) -> float:
        u, d = self.up[axis], self.down[axis]
        return (u - d) / (u + d)

    @classmethod
    def from_probabilities(cls, rho: np.ndarray, scale: float = 1.0) -> "SpinCounts":
        """Expected (possibly fractional) counts of a 2x2 matrix; used for exact round trips."""
        up, down = {}, {}
        for ax in AXES:
            s = float(np.real(np.trace(rho @ PAULI[ax])))
            up[ax] = scale * 0.5 * (1 + s)
            down[ax] = scale * 0.5 * (1 - s)
        return cls(up, down)

    @classmethod
    def sample(cls, rho: np.ndarray, shots: int, seed: int = 0) -> "SpinCounts":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        up, down = {}, {}
        for ax in AXES:
            p = 0.5 * (1 + float(np.real(np.trace(rho @ PAULI[ax]))))
            u = int(rng.binomial(shots, min(max(p, 0.0), 1.0)))
            up[ax], down[ax] = u, shots - u
        return cls(up, down)

    @classmethod
    def load_csv(cls, path) -> "SpinCounts":
        up = {ax: 0 for ax in AXES}
        down = {ax: 0 for ax in AXES}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                ax = row["axis"].strip().lower()
                if ax not in AXES:
                    raise DomainError(f"unknown axis {ax!r}")
                outcome = float(row["outcome"])
                count = int(row["count"])
                if outcome > 0:
                    up[ax] += count
                else:
                    down[ax] += count
        return cls(up, down)

    def save_csv(self, path) -> Path:
        p = Path(path)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["axis", "outcome", "count"])
            for ax in AXES:
                w.writerow([ax, "0.5", self.up[ax]])
                w.writerow([ax, "-0.5", self.down[ax]])
        return p


def spin12_reconstruct(counts: SpinCounts, p_depol: float = 0.0) -> DensityMatrix:
    """Linear reconstruction rho = I/2 + sum_a s_a sigma_a / 2 with s_a = <sigma_a>/(1 - p)."""
    if not 0 <= p_depol < 1:
        raise DomainError("depolarizing parameter must lie in [0, 1)")
    rho = 0.5 * np.eye(2, dtype=complex)
    for ax in AXES:
        rho = rho + 0.5 * counts.mean_sigma(ax) / (1.0 - p_depol) * PAULI[ax]
    lam = float(np.linalg.eigvalsh(rho)[0])
    return DensityMatrix(rho, physical=lam >= 0)
