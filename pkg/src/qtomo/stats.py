"""Sample means with block error statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyData

DEFAULT_BLOCKS = 20


@dataclass(frozen=True)
class AverageResult:
    """Mean of per-record estimator values.

    ``stderr`` is sqrt(sum |z_i - mean|^2 / (N (N - 1))); the real and
    imaginary parts also get their own standard errors.  ``block_means``
    holds the means of contiguous, equally sized blocks in record order.
    """

    mean: complex
    stderr: float
    n: int
    blocks: int
    stderr_re: float = 0.0
    stderr_im: float = 0.0
    block_means: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    @property
    def real(self) -> float:
        return float(self.mean.real)

    def consistent_with(self, value: complex, sigmas: float = 4.0) -> bool:
        return abs(self.mean - value) <= sigmas * self.stderr

    def block_chi2(self) -> float:
        """Chi-square of block means against their Gaussian expectation (advisory)."""
        b = self.block_means
        if b.size < 2 or self.stderr == 0:
            return 0.0
        spread = self.stderr * math.sqrt(b.size)
        return float(np.sum(np.abs(b - self.mean) ** 2) / spread**2)


class BlockAccumulator:
    """Streaming sums for values arriving in record order.

    Each record belongs to block ``floor(i * blocks / N)`` so block
    boundaries match a single pass over the full array.
    """

    def __init__(self, total: int, blocks: int = DEFAULT_BLOCKS, width: int = 1):
        if total <= 0:
            raise EmptyData("cannot average zero records")
        self.total = total
        self.blocks = max(1, min(blocks, total))
        self.width = width
        self.seen = 0
        self.sum = np.zeros(width, dtype=complex)
        self.sum_abs2 = np.zeros(width)
        self.sum_re2 = np.zeros(width)
        self.sum_im2 = np.zeros(width)
        self.block_sum = np.zeros((self.blocks, width), dtype=complex)
        self.block_count = np.zeros(self.blocks)
        self.shift: np.ndarray | None = None

    def add(self, values: np.ndarray) -> None:
        vals = np.asarray(values, dtype=complex).reshape(len(values), self.width)
        if len(vals) == 0:
            return
        if self.shift is None:
            # shifting by the first record keeps constant inputs exact
            self.shift = vals[0].copy()
        idx = np.arange(self.seen, self.seen + len(vals))
        which = idx * self.blocks // self.total
        centred = vals - self.shift
        self.sum += centred.sum(axis=0)
        self.sum_abs2 += np.sum(np.abs(centred) ** 2, axis=0)
        self.sum_re2 += np.sum(centred.real**2, axis=0)
        self.sum_im2 += np.sum(centred.imag**2, axis=0)
        for b in np.unique(which):
            sel = which == b
            self.block_sum[b] += vals[sel].sum(axis=0)
            self.block_count[b] += sel.sum()
        self.seen += len(vals)

    def results(self) -> list[AverageResult]:
        n = self.seen
        if n == 0:
            raise EmptyData("cannot average zero records")
        offset = self.sum / n
        mean = self.shift + offset
        out = []
        for j in range(self.width):
            if n > 1:
                var = max(self.sum_abs2[j] / n - abs(offset[j]) ** 2, 0.0)
                var_re = max(self.sum_re2[j] / n - offset[j].real ** 2, 0.0)
                var_im = max(self.sum_im2[j] / n - offset[j].imag ** 2, 0.0)
                scale = 1.0 / (n - 1)
                err, err_re, err_im = (math.sqrt(v * scale) for v in (var, var_re, var_im))
            else:
                err = err_re = err_im = 0.0
            counts = np.maximum(self.block_count, 1)
            out.append(
                AverageResult(
                    mean=complex(mean[j]),
                    stderr=err,
                    n=n,
                    blocks=self.blocks,
                    stderr_re=err_re,
                    stderr_im=err_im,
                    block_means=self.block_sum[:, j] / counts,
                )
            )
        return out


def average_values(values, blocks: int = DEFAULT_BLOCKS) -> AverageResult:
    """AverageResult for a one-dimensional array of per-record values."""
    vals = np.asarray(values)
    if vals.size == 0:
        raise EmptyData("cannot average zero records")
    acc = BlockAccumulator(vals.size, blocks)
    acc.add(vals.reshape(-1))
    return acc.results()[0]


def average_columns(values, blocks: int = DEFAULT_BLOCKS) -> list[AverageResult]:
    """AverageResult per column of an (N, P) array."""
    vals = np.asarray(values)
    if vals.shape[0] == 0:
        raise EmptyData("cannot average zero records")
    acc = BlockAccumulator(vals.shape[0], blocks, width=vals.shape[1])
    acc.add(vals)
    return acc.results()


def jackknife(block_estimates: np.ndarray) -> np.ndarray:
    """Jackknife standard error from leave-one-block-out estimates."""
    b = np.asarray(block_estimates)
    nb = b.shape[0]
    centre = b.mean(axis=0)
    return np.sqrt((nb - 1) / nb * np.sum(np.abs(b - centre) ** 2, axis=0))
