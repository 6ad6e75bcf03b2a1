"""Seedable generators for the toy example and the five simulation settings.

Every generator takes an integer seed and draws from ``numpy.random.default_rng(seed)``
(PCG64). Replication ``r`` of a study seeded with ``s`` uses
:func:`replication_seed`, i.e. ``SeedSequence(s, spawn_key=(r,))``.

Column and couple indices are 0-based: the couple (X1, X2) is ``(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import expit

from .engine import Dataset

SETTINGS = ("toy", "s1", "s2", "s3", "s4", "s5")

# Setting 1/2 logistic models: (main effects {column: coef}, interaction coef on X1*X2)
LOGISTIC_MODELS = {
    1: ({0: 2.0, 1: 2.0}, 1.0),
    2: ({0: 1.0, 4: 1.0}, 1.0),
    3: ({4: 1.0, 9: 1.0}, 1.0),
    4: ({}, 1.0),
}

# Setting 5: P(X_{2j-1} = 1 | Y = k), rows k = 0, 1; columns j = 1..4
THETA = np.array([
    [0.3, 0.4, 0.5, 0.3],
    [0.95, 0.9, 0.9, 0.95],
])

SCENARIOS = {
    "balanced": (0.5, 0.5),
    "unbal-73": (0.7, 0.3),
    "unbal-37": (0.3, 0.7),
}

MIXED = 0.5

# Toy example region maps. ``labels[a][b]`` is the label of the cell whose first
# coordinate lies in band a and second in band b (bands split by ``breaks``).
# MIXED cells are shared half/half between the labels so each label covers
# exactly half the square and every coordinate stays Uniform[-1, 1].
TOY_MAPS = {
    (0, 1): {
        "breaks": (-1 / 3, 1 / 3),
        "labels": ((1, 1, 0),
                   (1, MIXED, 0),
                   (0, 0, 1)),
    },
    (2, 3): {
        "breaks": (-1 / 4, 1 / 4),
        "labels": ((0, 0, 1),
                   (1, MIXED, 0),
                   (1, 1, 0)),
    },
}


def replication_seed(seed: int, replication: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(replication,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _names(p: int) -> tuple:
    return tuple(f"X{j + 1}" for j in range(p))


@dataclass(frozen=True)
class CovarianceSpec:
    """``ar``: Sigma_jl = base**|j - l|. ``block``: 1 on the diagonal, ``base`` elsewhere.

    ``exceptions`` overrides symmetric entries, given as ((j, l), value) with 0-based indices.
    """

    kind: str
    p: int
    base: float
    exceptions: tuple = ()

    def matrix(self) -> np.ndarray:
        p = self.p
        if self.kind == "ar":
            idx = np.arange(p)
            m = self.base ** np.abs(idx[:, None] - idx[None, :])
        elif self.kind == "block":
            m = np.full((p, p), self.base)
            np.fill_diagonal(m, 1.0)
        else:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        for (j, l), v in self.exceptions:
            if j < p and l < p:
                m[j, l] = m[l, j] = v
        return m


class NotPositiveDefinite(ValueError):
    pass


@lru_cache(maxsize=32)
def cholesky_factor(cov: CovarianceSpec) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov.matrix())
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"covariance {cov} is not positive definite") from exc


@lru_cache(maxsize=32)
def clipped_root(cov: CovarianceSpec) -> np.ndarray:
    """Square root of Sigma with negative eigenvalues set to 0 (its nearest PSD matrix)."""
    values, vectors = np.linalg.eigh(cov.matrix())
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def sampling_factor(cov: CovarianceSpec, repair: bool = False) -> np.ndarray:
    """Cholesky factor of Sigma; with ``repair``, fall back to :func:`clipped_root`."""
    try:
        return cholesky_factor(cov)
    except NotPositiveDefinite:
        if not repair:
            raise
        return clipped_root(cov)


def mvn_sample(cov: CovarianceSpec, n: int, seed=None, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """n rows i.i.d. N(0, Sigma): standard normals times the transposed Cholesky factor."""
    if rng is None:
        rng = np.random.default_rng(seed)
    factor = cholesky_factor(cov)
    return rng.standard_normal((n, cov.p)) @ factor.T


def _sample_cells(rng, labels, breaks, y):
    """Draw one point per row from the cells of that row's label, uniformly over area."""
    edges = np.array([-1.0, *breaks, 1.0])
    widths = np.diff(edges)
    lab = np.asarray(labels, dtype=float)
    area = np.outer(widths, widths)
    out = np.empty((y.shape[0], 2))
    for cls in (0, 1):
        share = np.where(lab == cls, 1.0, np.where(lab == MIXED, 0.5, 0.0))
        w = (area * share).ravel()
        rows = np.flatnonzero(y == cls)
        cell = rng.choice(w.size, size=rows.size, p=w / w.sum())
        a, b = np.divmod(cell, 3)
        u = rng.random((rows.size, 2))
        out[rows, 0] = edges[a] + u[:, 0] * widths[a]
        out[rows, 1] = edges[b] + u[:, 1] * widths[b]
    return out


def gen_toy(n: int = 200, p: int = 1000, seed=None) -> Dataset:
    if p < 4:
        raise ValueError("toy example needs p >= 4")
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.5).astype(np.int64)
    x = np.empty((n, p))
    for (j, l), m in TOY_MAPS.items():
        x[:, [j, l]] = _sample_cells(rng, m["labels"], m["breaks"], y)
    x[:, 4:] = rng.uniform(-1.0, 1.0, size=(n, p - 4))
    return Dataset(x, y, _names(p))


def _logistic_setting(model: int, n: int, p: int, seed):
    if model not in LOGISTIC_MODELS:
        raise ValueError(f"invalid model {model!r}; expected one of 1-4")
    if p < 10:
        raise ValueError("settings 1 and 2 need p >= 10")
    rng = np.random.default_rng(seed)
    x = mvn_sample(CovarianceSpec("ar", p, 0.2), n, rng=rng)
    main, inter = LOGISTIC_MODELS[model]
    eta = inter * x[:, 0] * x[:, 1]
    for j, coef in main.items():
        eta = eta + coef * x[:, j]
    y = (rng.random(n) < expit(eta)).astype(np.int64)
    return x, y


def gen_setting1(model: int, n: int = 200, p: int = 500, seed=None) -> Dataset:
    x, y = _logistic_setting(model, n, p, seed)
    return Dataset(x, y, _names(p))


def gen_setting2(model: int, n: int = 200, p: int = 500, seed=None) -> Dataset:
    """Setting 1 with every returned feature replaced by exp(X_j)."""
    x, y = _logistic_setting(model, n, p, seed)
    return Dataset(np.exp(x), y, _names(p))


# The setting-3 class-1 matrix (0.2 everywhere, -0.8 on (3, 4)) is indefinite for
# every p >= 3: 0.2 correlation with the rest forces corr(X3, X4) >= -0.6 as p grows.
# Both mixtures therefore sample through ``sampling_factor(..., repair=True)``.
def setting3_covariances(p: int):
    class1 = CovarianceSpec("block", p, 0.2, (((2, 3), -0.8),))
    class0 = CovarianceSpec("block", p, 0.2, (((0, 1), 0.8), ((2, 3), 0.8)))
    return class1, class0


def setting4_covariances(p: int):
    class1 = CovarianceSpec("block", p, 0.2, (((0, 1), 0.8), ((2, 3), 0.8)))
    class0 = CovarianceSpec("block", p, 0.2, (((2, 3), 0.8),))
    return class1, class0


def _mixture(covs, n, p, seed) -> Dataset:
    if p < 4:
        raise ValueError("settings 3 and 4 need p >= 4")
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.5).astype(np.int64)
    z = rng.standard_normal((n, p))
    x = np.empty((n, p))
    for cls, cov in zip((1, 0), covs):
        rows = y == cls
        x[rows] = z[rows] @ sampling_factor(cov, repair=True).T
    return Dataset(x, y, _names(p))


def gen_setting3(n: int = 200, p: int = 500, seed=None) -> Dataset:
    return _mixture(setting3_covariances(p), n, p, seed)


def gen_setting4(n: int = 200, p: int = 500, seed=None) -> Dataset:
    return _mixture(setting4_covariances(p), n, p, seed)


def gen_setting5(scenario: str = "balanced", n: int = 200, p: int = 500, seed=None) -> Dataset:
    if scenario not in SCENARIOS:
        raise ValueError(f"invalid scenario {scenario!r}; expected one of {sorted(SCENARIOS)}")
    if p < 8:
        raise ValueError("setting 5 needs p >= 8")
    _, pi1 = SCENARIOS[scenario]
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < pi1).astype(np.int64)
    x = np.empty((n, p))
    for j in range(4):
        theta = THETA[y, j]
        first = rng.random(n) < theta
        high = theta > 0.5
        p_second = np.where(first, np.where(high, 0.95, 0.05), np.where(high, 0.6, 0.4))
        x[:, 2 * j] = first
        x[:, 2 * j + 1] = rng.random(n) < p_second
    x[:, 8:] = rng.random((n, p - 8)) < 0.5
    return Dataset(x, y, _names(p))


@dataclass(frozen=True)
class SimulationSpec:
    """One generative design. ``sub`` is the model (1-4) for s1/s2 and the scenario for s5."""

    setting: str
    sub: object = None
    n: int = 200
    p: int = 500
    seed: int = 0
    truth: tuple = field(init=False)
    decoys: tuple = field(init=False)

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if self.setting in ("s1", "s2"):
            sub = int(self.sub) if self.sub is not None else 1
            if sub not in LOGISTIC_MODELS:
                raise ValueError(f"invalid model {self.sub!r} for {self.setting}")
            truth, decoys = ((0, 1),), ()
        elif self.setting == "s5":
            sub = self.sub or "balanced"
            if sub not in SCENARIOS:
                raise ValueError(f"invalid scenario {self.sub!r} for s5")
            truth, decoys = ((0, 1), (2, 3), (4, 5), (6, 7)), ()
        else:
            if self.sub not in (None, ""):
                raise ValueError(f"setting {self.setting} takes no model/scenario")
            sub = None
            truth, decoys = ((0, 1), (2, 3)), ()
            if self.setting == "s4":
                truth, decoys = ((0, 1),), ((2, 3),)
        object.__setattr__(self, "sub", sub)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "decoys", decoys)

    @property
    def proportions(self) -> tuple:
        return SCENARIOS[self.sub] if self.setting == "s5" else (0.5, 0.5)

    def generate(self, seed=None) -> Dataset:
        seed = self.seed if seed is None else seed
        if self.setting == "toy":
            return gen_toy(self.n, self.p, seed)
        if self.setting == "s1":
            return gen_setting1(self.sub, self.n, self.p, seed)
        if self.setting == "s2":
            return gen_setting2(self.sub, self.n, self.p, seed)
        if self.setting == "s3":
            return gen_setting3(self.n, self.p, seed)
        if self.setting == "s4":
            return gen_setting4(self.n, self.p, seed)
        return gen_setting5(self.sub, self.n, self.p, seed)
