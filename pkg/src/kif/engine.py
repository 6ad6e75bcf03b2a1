"""Pairwise KIF screening: score every feature couple, rank, select."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _kernels
from .rank_stats import ClassPartition, InsufficientClassSize, class_partition, dense_ranks

STRICT = "strict"
SKIP_CLASS = "skip-class"

# Each |tau_k - tau| is at most 2 and the priors sum to 1.
SCORE_BOUND = 2.0

# Bitset kernel limits: memory is p * n * ceil(n / 64) * 8 bytes.
BITSET_MAX_N = 4096
BITSET_MAX_BYTES = 1 << 30


@dataclass(frozen=True, eq=False)
class Dataset:
    """An n x p feature matrix with one label per row.

    ``feature_ids`` maps columns back to the dataset they were derived from
    (identity unless the dataset is the output of :func:`variance_prescreen`).
    """

    features: np.ndarray
    labels: tuple
    feature_names: tuple = ()
    feature_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-d array")
        n, p = x.shape
        if n < 2 or p < 2:
            raise ValueError(f"need n >= 2 and p >= 2, got n={n}, p={p}")
        if not np.isfinite(x).all():
            raise ValueError("non-finite feature value")
        labels = tuple(np.asarray(self.labels).tolist()) if isinstance(self.labels, np.ndarray) else tuple(self.labels)
        if len(labels) != n:
            raise ValueError(f"{len(labels)} labels for {n} rows")
        names = tuple(self.feature_names) or tuple(f"X{j + 1}" for j in range(p))
        if len(names) != p:
            raise ValueError(f"{len(names)} feature names for {p} columns")
        ids = np.arange(p) if self.feature_ids is None else np.asarray(self.feature_ids, dtype=np.int64)
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_ids", ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @cached_property
    def partition(self) -> ClassPartition:
        return class_partition(self.labels)

    @cached_property
    def ranks(self) -> np.ndarray:
        """Dense ranks, one row per feature (p x n)."""
        return np.ascontiguousarray(np.stack([dense_ranks(self.features[:, j]) for j in range(self.p)]))

    @cached_property
    def _rank_index(self):
        r = self.ranks
        orders = np.argsort(r, axis=1, kind="stable")
        starts = np.zeros((self.p, self.n + 1), dtype=np.int64)
        for j in range(self.p):
            starts[j, 1:] = np.cumsum(np.bincount(r[j], minlength=self.n))
        return orders, starts

    @cached_property
    def _greater_sets(self):
        words = (self.n + 63) // 64
        return _kernels.build_greater_sets(self.ranks, words)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.feature_names, self.feature_ids)


@dataclass(frozen=True)
class PairScore:
    j: int
    l: int
    score: float
    rank: int


@dataclass(frozen=True)
class ScreeningConfig:
    """Selection rule plus evaluation knobs.

    Either ``top_d`` (``None`` means ceil(n / ln n)) or a threshold
    ``c * n**-r`` given by ``threshold=(c, r)``; never both.
    ``keep="head"`` retains only the selected couples instead of all scores.
    """

    top_d: Optional[int] = None
    threshold: Optional[tuple] = None
    class_policy: str = STRICT
    prescreen: float = 0.0
    keep: str = "all"
    chunk_size: int = 1024

    def __post_init__(self):
        if self.top_d is not None and self.threshold is not None:
            raise ValueError("choose either top_d or threshold, not both")
        if self.top_d is not None and self.top_d < 1:
            raise ValueError("top_d must be >= 1")
        if self.threshold is not None:
            c, r = self.threshold
            if not c > 0:
                raise ValueError("threshold constant c must be > 0")
            if not 0 <= r < 0.5:
                raise ValueError("threshold exponent r must satisfy 0 <= r < 1/2")
        if self.class_policy not in (STRICT, SKIP_CLASS):
            raise ValueError(f"unknown class policy {self.class_policy!r}")
        if not 0 <= self.prescreen < 1:
            raise ValueError("prescreen fraction must be in [0, 1)")
        if self.keep not in ("all", "head"):
            raise ValueError(f"unknown keep mode {self.keep!r}")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")

    @property
    def rule(self) -> str:
        return "threshold" if self.threshold is not None else "top_d"

    def as_dict(self) -> dict:
        return {
            "rule": self.rule,
            "top_d": self.top_d,
            "threshold": list(self.threshold) if self.threshold is not None else None,
            "class_policy": self.class_policy,
            "prescreen": self.prescreen,
            "keep": self.keep,
            "chunk_size": self.chunk_size,
        }


def default_top_d(n: int) -> int:
    """ceil(n / ln n), the default number of retained couples."""
    return math.ceil(n / math.log(n))


@dataclass
class ScreeningResult:
    """Ranked scores stored column-wise; iterate to get :class:`PairScore` items.

    ``j``/``l`` are column indices of the screened dataset's source (original
    ids when a pre-screen was applied). ``selected`` counts the leading
    entries of the ranking that form the selected set.
    """

    j: np.ndarray
    l: np.ndarray
    scores: np.ndarray
    n_selected: int
    config: ScreeningConfig
    n: int
    n_pairs: int
    feature_names: tuple
    cutoff: Optional[float] = None
    skipped_classes: tuple = ()
    timings: dict = field(default_factory=dict)

    def __len__(self):
        return self.scores.shape[0]

    def __iter__(self) -> Iterator[PairScore]:
        for r in range(len(self)):
            yield self[r]

    def __getitem__(self, r: int) -> PairScore:
        return PairScore(int(self.j[r]), int(self.l[r]), float(self.scores[r]), r + 1)

    def top(self, k: int) -> list:
        return [self[r] for r in range(min(k, len(self)))]

    @property
    def selected(self) -> set:
        return {(int(self.j[r]), int(self.l[r])) for r in range(self.n_selected)}

    def rank_of(self, j: int, l: int) -> Optional[int]:
        if j > l:
            j, l = l, j
        hit = np.flatnonzero((self.j == j) & (self.l == l))
        return int(hit[0]) + 1 if hit.size else None

    def score_of(self, j: int, l: int) -> Optional[float]:
        r = self.rank_of(j, l)
        return None if r is None else float(self.scores[r - 1])


def _check_class_sizes(part: ClassPartition, policy: str) -> tuple:
    small = part.small_classes()
    if small and policy == STRICT:
        k = small[0]
        raise InsufficientClassSize(part.labels[k], int(part.counts[k]))
    return tuple(part.labels[k] for k in small)


def _check_scores(w: np.ndarray):
    if w.size and not (np.all(w >= 0.0) and np.all(w <= SCORE_BOUND)):
        raise AssertionError("KIF score outside [0, 2]")


def kif_score(x_j, x_l, part: ClassPartition, class_policy: str = STRICT) -> float:
    """Prior-weighted absolute deviation of within-class taus from the marginal tau."""
    x = np.column_stack([np.asarray(x_j, dtype=np.float64), np.asarray(x_l, dtype=np.float64)])
    if x.shape[0] != part.n:
        raise ValueError(f"partition covers {part.n} rows, data has {x.shape[0]}")
    data = Dataset(x, tuple(part.codes.tolist()))
    return float(_score_block(data, part, np.array([0]), np.array([1]), class_policy)[0])


def _score_block(data: Dataset, part: ClassPartition, pj, pl, policy) -> np.ndarray:
    _check_class_sizes(part, policy)
    orders, starts = data._rank_index
    out = np.empty(len(pj), dtype=np.float64)
    _kernels.score_pairs(
        data.ranks, orders, starts, part.codes, part.counts,
        np.asarray(pj, dtype=np.int64), np.asarray(pl, dtype=np.int64), out, policy == SKIP_CLASS,
    )
    _check_scores(out)
    return out


def canonical_pairs(p: int):
    """All j < l in row-major order, which is also lexicographic order."""
    return np.triu_indices(p, k=1)


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        env = os.environ.get("KIF_THREADS")
        threads = int(env) if env else 0
    return threads if threads > 0 else (os.cpu_count() or 1)


def pick_kernel(n: int, p: int, kernel: str = "auto") -> str:
    if kernel not in ("auto", "bitset", "mergesort"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if kernel != "auto":
        return kernel
    words = (n + 63) // 64
    small = n <= BITSET_MAX_N and p * n * words * 8 <= BITSET_MAX_BYTES
    return "bitset" if small else "mergesort"


def score_all_pairs(data: Dataset, class_policy: str = STRICT, threads: Optional[int] = None,
                    chunk_size: int = 1024, pairs=None, kernel: str = "auto") -> np.ndarray:
    """Scores in canonical pair order; identical for any thread count and either kernel."""
    part = data.partition
    _check_class_sizes(part, class_policy)
    pj, pl = canonical_pairs(data.p) if pairs is None else pairs
    pj = np.ascontiguousarray(pj, dtype=np.int64)
    pl = np.ascontiguousarray(pl, dtype=np.int64)
    out = np.empty(pj.shape[0], dtype=np.float64)
    codes, counts = part.codes, part.counts

    if pick_kernel(data.n, data.p, kernel) == "bitset":
        greater = data._greater_sets
        masks = _kernels.class_masks(codes, part.n_classes, greater.shape[2])

        def run(lo):
            hi = min(lo + chunk_size, pj.shape[0])
            _kernels.score_pairs_bitset(greater, masks, codes, counts, pj[lo:hi], pl[lo:hi], out[lo:hi])
    else:
        orders, starts = data._rank_index
        ranks = data.ranks
        skip = class_policy == SKIP_CLASS

        def run(lo):
            hi = min(lo + chunk_size, pj.shape[0])
            _kernels.score_pairs(ranks, orders, starts, codes, counts, pj[lo:hi], pl[lo:hi], out[lo:hi], skip)

    chunks = range(0, pj.shape[0], chunk_size)
    n_threads = resolve_threads(threads)
    if n_threads == 1:
        for lo in chunks:
            run(lo)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(run, chunks))
    _check_scores(out)
    return out


def _rank(scores: np.ndarray, flat: np.ndarray) -> np.ndarray:
    # descending score, ties by canonical (lexicographic) position
    return np.lexsort((flat, -scores))


def select_couples(scores: Sequence[float], rule: ScreeningConfig, n: int) -> int:
    """Number of leading couples of a descending ranking that are selected."""
    scores = np.asarray(scores, dtype=np.float64)
    if rule.threshold is not None:
        c, r = rule.threshold
        return int(np.count_nonzero(scores > c * n ** (-r)))
    d = rule.top_d if rule.top_d is not None else default_top_d(n)
    return min(d, scores.shape[0])


def _prescreen_keep(data: Dataset, fraction: float) -> np.ndarray:
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    n_drop = math.floor(data.p * fraction)
    if n_drop == 0:
        return np.arange(data.p)
    var = data.features.var(axis=0, ddof=1)
    by_dispersion = np.lexsort((np.arange(data.p), -var))
    return np.sort(by_dispersion[: data.p - n_drop])


def variance_prescreen(data: Dataset, fraction: float) -> Dataset:
    """Drop the floor(p * fraction) least dispersed columns; survivors keep their order."""
    keep = _prescreen_keep(data, fraction)
    if keep.shape[0] == data.p:
        return data
    return Dataset(
        data.features[:, keep], data.labels,
        tuple(data.feature_names[k] for k in keep), data.feature_ids[keep],
    )


def screen_all_pairs(data: Dataset, config: ScreeningConfig = ScreeningConfig(),
                     threads: Optional[int] = None) -> ScreeningResult:
    t0 = time.perf_counter()
    source = data
    keep = _prescreen_keep(data, config.prescreen)
    if keep.shape[0] < data.p:
        data = Dataset(data.features[:, keep], data.labels)
    t1 = time.perf_counter()
    skipped = _check_class_sizes(data.partition, config.class_policy)
    pj, pl = canonical_pairs(data.p)
    n_pairs = pj.shape[0]
    if config.keep == "head":
        scores, flat = _score_head(data, config, threads, pj, pl)
    else:
        scores = score_all_pairs(data, config.class_policy, threads, config.chunk_size, (pj, pl))
        flat = np.arange(n_pairs)
    t2 = time.perf_counter()
    order = _rank(scores, flat)
    scores = scores[order]
    flat = flat[order]
    n_sel = select_couples(scores, config, data.n)
    if config.keep == "head":
        scores, flat = scores[:n_sel], flat[:n_sel]
    cutoff = config.threshold[0] * data.n ** (-config.threshold[1]) if config.threshold else None
    return ScreeningResult(
        j=keep[pj[flat]], l=keep[pl[flat]], scores=scores, n_selected=n_sel, config=config,
        n=data.n, n_pairs=n_pairs, feature_names=source.feature_names, cutoff=cutoff,
        skipped_classes=skipped,
        timings={"prescreen_s": t1 - t0, "scoring_s": t2 - t1, "total_s": time.perf_counter() - t0},
    )


def _score_head(data, config, threads, pj, pl):
    """Stream pairs in blocks and keep only candidates that can still be selected."""
    block = max(config.chunk_size * 64, 1 << 16)
    keep_s = np.empty(0)
    keep_f = np.empty(0, dtype=np.int64)
    cutoff = config.threshold[0] * data.n ** (-config.threshold[1]) if config.threshold else None
    d = None if cutoff is not None else (config.top_d or default_top_d(data.n))
    for lo in range(0, pj.shape[0], block):
        hi = min(lo + block, pj.shape[0])
        s = score_all_pairs(data, config.class_policy, threads, config.chunk_size, (pj[lo:hi], pl[lo:hi]))
        f = np.arange(lo, hi)
        if cutoff is not None:
            mask = s > cutoff
            s, f = s[mask], f[mask]
        keep_s = np.concatenate([keep_s, s])
        keep_f = np.concatenate([keep_f, f])
        if d is not None and keep_s.shape[0] > d:
            o = _rank(keep_s, keep_f)[:d]
            keep_s, keep_f = keep_s[o], keep_f[o]
    return keep_s, keep_f
