"""Kendall's tau estimators with strict concordance, within-class variants and class priors.

The estimator used throughout is

    tau = 4 C / (n (n - 1)) - 1

with ``C`` the number of pairs i < t with (x_i - x_t)(y_i - y_t) > 0. Pairs
tied in either coordinate are *not* concordant, so this is neither tau-a
nor tau-b when ties are present: ties pull the value towards -1.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np

from . import _kernels


class InsufficientClassSize(ValueError):
    """A class has fewer than two observations, so its tau is undefined."""

    def __init__(self, label, size):
        self.label = label
        self.size = size
        super().__init__(f"insufficient class size: class {label!r} has {size} observation(s), need >= 2")


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("x and y must be one-dimensional")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} != {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite value in input")
    return x, y


def dense_ranks(values) -> np.ndarray:
    """0-based dense ranks; equal values share a rank."""
    _, inv = np.unique(np.asarray(values), return_inverse=True)
    return inv.astype(np.int64).reshape(-1)


def tau_from_count(concordant: int, n: int) -> float:
    return float(_kernels.tau_from_count(np.int64(concordant), np.int64(n)))


def concordant_count_naive(x, y) -> int:
    x, y = _check_pair(x, y)
    n = x.shape[0]
    i, t = np.triu_indices(n, k=1)
    # signs rather than the raw product: avoids underflow of tiny differences
    return int(np.count_nonzero(np.sign(x[i] - x[t]) * np.sign(y[i] - y[t]) > 0))


def concordant_count_fast(x, y) -> int:
    x, y = _check_pair(x, y)
    rx = dense_ranks(x)
    ry = dense_ranks(y)
    order = np.lexsort((ry, rx))
    return int(_kernels.concordant_sorted(rx[order], ry[order].copy(), np.empty(x.shape[0], dtype=np.int64)))


def kendall_tau_naive(x, y) -> float:
    """O(n^2) reference estimator: enumerates every pair."""
    c = concordant_count_naive(x, y)
    return tau_from_count(c, len(x))


def kendall_tau_fast(x, y) -> float:
    """O(n log n) estimator, bit-identical to :func:`kendall_tau_naive`."""
    c = concordant_count_fast(x, y)
    return tau_from_count(c, len(x))


@dataclass(frozen=True)
class ClassPartition:
    """Class membership of a label vector.

    ``labels`` holds the distinct labels in first-appearance order; ``codes``
    maps each observation to its class index.
    """

    labels: tuple
    codes: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return int(self.codes.shape[0])

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    @property
    def priors(self) -> np.ndarray:
        return self.counts / self.n

    def exact_priors(self) -> list:
        return [Fraction(int(c), self.n) for c in self.counts]

    def indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.codes == k)

    def small_classes(self) -> list:
        return [k for k in range(self.n_classes) if self.counts[k] < 2]


def class_partition(labels: Sequence[Hashable]) -> ClassPartition:
    labels = list(np.asarray(labels).tolist()) if isinstance(labels, np.ndarray) else list(labels)
    if not labels:
        raise ValueError("empty label vector")
    index: dict = {}
    codes = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        codes[i] = index.setdefault(lab, len(index))
    counts = np.bincount(codes, minlength=len(index)).astype(np.int64)
    return ClassPartition(labels=tuple(index), codes=codes, counts=counts)


def conditional_kendall_tau(x, y, part: ClassPartition, k: int) -> float:
    x, y = _check_pair(x, y)
    if x.shape[0] != part.n:
        raise ValueError(f"partition covers {part.n} rows, data has {x.shape[0]}")
    if not 0 <= k < part.n_classes:
        raise IndexError(f"class index {k} out of range")
    if part.counts[k] < 2:
        raise InsufficientClassSize(part.labels[k], int(part.counts[k]))
    rows = part.indices(k)
    return kendall_tau_fast(x[rows], y[rows])
