"""Label-permutation p-values for KIF scores.

Permutation ``t`` of a plan with seed ``s`` is drawn from
``numpy.random.Generator(Philox(key=s, counter=t << 192)).permutation(n)``:
a counter-based substream per replicate, so any replicate can be regenerated
on its own and the result does not depend on batching or thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .engine import STRICT, Dataset, _check_class_sizes, kif_score, pick_kernel, resolve_threads, score_all_pairs
from .rank_stats import ClassPartition

SUBSTREAM_SHIFT = 192
BATCH = 1024


@dataclass(frozen=True)
class PermutationPlan:
    pairs: tuple
    T: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        pairs = tuple((int(j), int(l)) for j, l in self.pairs)
        for j, l in pairs:
            if not 0 <= j < l:
                raise ValueError(f"invalid pair ({j}, {l}): need 0 <= j < l")
        object.__setattr__(self, "pairs", pairs)


@dataclass
class PermutationResult:
    pairs: tuple
    observed: np.ndarray
    exceed: np.ndarray
    T: int
    seed: Optional[int]

    @property
    def pvalues(self) -> np.ndarray:
        return self.exceed / self.T

    def as_dict(self) -> dict:
        return {pair: float(p) for pair, p in zip(self.pairs, self.pvalues)}


def permutation(seed: int, t: int, n: int) -> np.ndarray:
    """The ``t``-th permutation (0-based) of the stream keyed by ``seed``."""
    bitgen = np.random.Philox(key=seed, counter=t << SUBSTREAM_SHIFT)
    return np.random.Generator(bitgen).permutation(n)


def permutations(seed: int, start: int, stop: int, n: int) -> np.ndarray:
    return np.stack([permutation(seed, t, n) for t in range(start, stop)]) if stop > start else np.empty((0, n), np.int64)


class _PairCache:
    """Everything about the target pairs that a label permutation cannot change."""

    def __init__(self, data: Dataset, pairs: Sequence[tuple], kernel: str = "auto"):
        self.data = data
        self.pj = np.array([j for j, _ in pairs], dtype=np.int64)
        self.pl = np.array([l for _, l in pairs], dtype=np.int64)
        part = data.partition
        self.codes = part.codes
        self.counts = part.counts
        self.kernel = pick_kernel(data.n, data.p, kernel)
        n = data.n
        ranks = data.ranks
        self.tau = np.empty(len(pairs))
        self.lex = np.empty((len(pairs), n), dtype=np.int64)
        buf = np.empty(n, dtype=np.int64)
        for q, (j, l) in enumerate(pairs):
            order = np.lexsort((ranks[l], ranks[j]))
            self.lex[q] = order
            c = _kernels.concordant_sorted(ranks[j][order], ranks[l][order].copy(), buf)
            self.tau[q] = _kernels.tau_from_count(c, n)
        self.rxs = np.ascontiguousarray(ranks[self.pj])
        self.rys = np.ascontiguousarray(ranks[self.pl])
        if self.kernel == "bitset":
            self.inter = _kernels.pair_intersections(data._greater_sets, self.pj, self.pl)

    def scores(self, perms: np.ndarray) -> np.ndarray:
        perms = np.ascontiguousarray(perms, dtype=np.int64)
        out = np.empty((perms.shape[0], self.pj.shape[0]))
        if self.kernel == "bitset":
            _kernels.score_permutations_bitset(self.inter, self.tau, perms, self.codes, self.counts, out)
        else:
            _kernels.score_permutations(self.lex, self.rxs, self.rys, self.tau, perms, self.codes, self.counts, out)
        return out


def _validate(data: Dataset, pairs, class_policy: str):
    for j, l in pairs:
        if not 0 <= j < l < data.p:
            raise IndexError(f"pair ({j}, {l}) out of range for p={data.p}")
    _check_class_sizes(data.partition, class_policy)


def observed_scores(data: Dataset, pairs, class_policy: str = STRICT) -> np.ndarray:
    pj = np.array([j for j, _ in pairs], dtype=np.int64)
    pl = np.array([l for _, l in pairs], dtype=np.int64)
    return score_all_pairs(data, class_policy, threads=1, pairs=(pj, pl))


def permuted_scores(data: Dataset, pairs, perms: np.ndarray, cached: bool = True,
                    class_policy: str = STRICT) -> np.ndarray:
    """Scores of ``pairs`` under each row of ``perms`` (shape T x len(pairs)).

    ``cached=False`` rebuilds a relabelled dataset per permutation and
    rescores from scratch; it exists to check the cached path.
    """
    _validate(data, pairs, class_policy)
    perms = np.atleast_2d(perms)
    if cached:
        return _PairCache(data, pairs).scores(perms)
    part = data.partition
    out = np.empty((perms.shape[0], len(pairs)))
    for t, perm in enumerate(perms):
        relabelled = ClassPartition(labels=part.labels, codes=part.codes[perm], counts=part.counts)
        for q, (j, l) in enumerate(pairs):
            out[t, q] = kif_score(data.features[:, j], data.features[:, l], relabelled, class_policy)
    return out


def pvalues_from_permutations(data: Dataset, pairs, perms: np.ndarray,
                              class_policy: str = STRICT) -> PermutationResult:
    """Exceedance p-values against an explicit set of permutations."""
    _validate(data, pairs, class_policy)
    obs = observed_scores(data, pairs, class_policy)
    null = permuted_scores(data, pairs, perms, class_policy=class_policy)
    exceed = (null >= obs).sum(axis=0)
    return PermutationResult(tuple(pairs), obs, exceed.astype(np.int64), null.shape[0], None)


def permutation_test(data: Dataset, plan: PermutationPlan, threads: Optional[int] = None,
                     class_policy: str = STRICT, batch: int = BATCH) -> PermutationResult:
    """p = #{t : w_t >= w_obs} / T over T seeded label permutations shared by all pairs."""
    pairs = plan.pairs
    _validate(data, pairs, class_policy)
    obs = observed_scores(data, pairs, class_policy)
    cache = _PairCache(data, pairs)
    n = data.n

    def run(start):
        stop = min(start + batch, plan.T)
        null = cache.scores(permutations(plan.seed, start, stop, n))
        return (null >= obs).sum(axis=0)

    starts = range(0, plan.T, batch)
    n_threads = resolve_threads(threads)
    if n_threads == 1:
        counts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            counts = list(pool.map(run, starts))
    exceed = np.sum(counts, axis=0).astype(np.int64)
    return PermutationResult(pairs, obs, exceed, plan.T, plan.seed)


def permutation_pvalues(data: Dataset, plan: PermutationPlan, threads: Optional[int] = None,
                        class_policy: str = STRICT) -> dict:
    return permutation_test(data, plan, threads, class_policy).as_dict()
