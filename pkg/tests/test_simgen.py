import numpy as np
import pytest
from scipy import stats

from kif.engine import score_all_pairs
from kif.simgen import (
    THETA,
    CovarianceSpec,
    NotPositiveDefinite,
    SimulationSpec,
    clipped_root,
    gen_setting1,
    gen_setting2,
    gen_setting3,
    gen_setting4,
    gen_setting5,
    gen_toy,
    mvn_sample,
    replication_seed,
    setting3_covariances,
    setting4_covariances,
)

BIG = 10_000


def within(value, target, se, k=4.0):
    return abs(value - target) <= k * se


def test_mvn_identity():
    x = mvn_sample(CovarianceSpec("block", 4, 0.0), BIG, seed=1)
    assert np.abs(np.cov(x, rowvar=False) - np.eye(4)).max() < 0.05


def test_mvn_correlation():
    x = mvn_sample(CovarianceSpec("block", 3, 0.0, (((0, 1), 0.8),)), BIG, seed=2)
    assert abs(np.corrcoef(x[:, 0], x[:, 1])[0, 1] - 0.8) < 0.03


def test_mvn_single_row():
    x = mvn_sample(CovarianceSpec("ar", 5, 0.2), 1, seed=3)
    assert x.shape == (1, 5) and np.all(np.isfinite(x))


def test_mvn_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        mvn_sample(CovarianceSpec("block", 3, 0.0, (((0, 1), 1.5),)), 10, seed=0)


def test_ar_matrix():
    m = CovarianceSpec("ar", 4, 0.2).matrix()
    assert m[0, 3] == pytest.approx(0.008)
    assert np.array_equal(m, m.T)


def test_toy_marginals_uniform():
    data = gen_toy(BIG, 6, seed=4)
    for j in range(6):
        assert stats.kstest(data.features[:, j], stats.uniform(-1, 2).cdf).pvalue > 1e-3


def test_toy_prior():
    y = np.asarray(gen_toy(BIG, 4, seed=5).labels)
    assert within(y.mean(), 0.5, 0.5 / np.sqrt(BIG))


def test_toy_stated_cells():
    data = gen_toy(BIG, 4, seed=6)
    x, y = data.features, np.asarray(data.labels)
    cell12 = (x[:, 0] < -1 / 3) & (x[:, 1] < -1 / 3)
    cell34 = (x[:, 2] >= 1 / 4) & (x[:, 3] >= -1 / 4) & (x[:, 3] < 1 / 4)
    assert cell12.sum() > 500 and cell34.sum() > 500
    assert np.all(y[cell12] == 1)
    assert np.all(y[cell34] == 1)


def test_toy_signal_and_null():
    data = gen_toy(200, 60, seed=7)
    w = score_all_pairs(data)
    pj, pl = np.triu_indices(60, 1)
    w12 = w[(pj == 0) & (pl == 1)][0]
    w34 = w[(pj == 2) & (pl == 3)][0]
    null = w[pj >= 4]
    assert min(w12, w34) > null.max()


def test_toy_needs_four_columns():
    with pytest.raises(ValueError):
        gen_toy(10, 3, seed=0)


def test_setting1_moments():
    data = gen_setting1(4, BIG, 10, seed=8)
    x = data.features
    se_mean = 1 / np.sqrt(BIG)
    assert all(within(m, 0.0, se_mean) for m in x.mean(axis=0))
    assert all(within(v, 1.0, np.sqrt(2 / BIG)) for v in x.var(axis=0, ddof=1))
    assert within(np.corrcoef(x[:, 0], x[:, 1])[0, 1], 0.2, (1 - 0.04) / np.sqrt(BIG))
    assert within(np.corrcoef(x[:, 0], x[:, 2])[0, 1], 0.04, 1 / np.sqrt(BIG))


def _model4_prior(rho):
    from scipy import integrate
    from scipy.special import expit

    law = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]])
    return integrate.dblquad(lambda b, a: expit(a * b) * law.pdf([a, b]), -9, 9, -9, 9, epsabs=1e-9)[0]


def test_setting1_model4_prior():
    # eta = X1 X2 is symmetric only for independent X1, X2; corr 0.2 tilts P(Y=1) above 1/2
    assert _model4_prior(0.0) == pytest.approx(0.5, abs=1e-8)
    target = _model4_prior(0.2)
    assert 0.53 < target < 0.54
    y = np.asarray(gen_setting1(4, BIG, 10, seed=9).labels)
    assert within(y.mean(), target, 0.5 / np.sqrt(BIG))


def test_setting1_model1_coefficients():
    from kif.simgen import LOGISTIC_MODELS

    main, inter = LOGISTIC_MODELS[1]
    assert main == {0: 2.0, 1: 2.0} and inter == 1.0
    assert LOGISTIC_MODELS[4] == ({}, 1.0)
    assert set(LOGISTIC_MODELS[3][0]) == {4, 9}


def test_setting1_validation():
    with pytest.raises(ValueError):
        gen_setting1(5, 10, 10, seed=0)
    with pytest.raises(ValueError):
        gen_setting1(3, 10, 9, seed=0)


def test_setting2_is_exp_of_setting1():
    a = gen_setting1(2, 150, 40, seed=10)
    b = gen_setting2(2, 150, 40, seed=10)
    assert np.array_equal(b.features, np.exp(a.features))
    assert a.labels == b.labels
    assert np.all(b.features > 0)
    assert score_all_pairs(a).tobytes() == score_all_pairs(b).tobytes()


def test_setting3_class1_is_indefinite():
    class1, class0 = setting3_covariances(500)
    assert np.linalg.eigvalsh(class1.matrix()).min() < 0
    assert np.linalg.eigvalsh(class0.matrix()).min() > 0
    with pytest.raises(NotPositiveDefinite):
        mvn_sample(class1, 5, seed=0)


def test_setting3_within_class_correlations():
    p = 50
    data = gen_setting3(BIG, p, seed=11)
    x, y = data.features, np.asarray(data.labels)
    root = clipped_root(setting3_covariances(p)[0])
    repaired = root @ root.T
    c1 = np.corrcoef(x[y == 1][:, [2, 3]], rowvar=False)[0, 1]
    target = repaired[2, 3] / np.sqrt(repaired[2, 2] * repaired[3, 3])
    assert target < -0.5
    assert abs(c1 - target) < 0.03
    c0 = np.corrcoef(x[y == 0], rowvar=False)
    assert abs(c0[0, 1] - 0.8) < 0.03 and abs(c0[2, 3] - 0.8) < 0.03
    assert within(y.mean(), 0.5, 0.5 / np.sqrt(BIG))


def test_setting4_correlations():
    data = gen_setting4(BIG, 30, seed=12)
    x, y = data.features, np.asarray(data.labels)
    for cls in (0, 1):
        assert abs(np.corrcoef(x[y == cls][:, 2], x[y == cls][:, 3])[0, 1] - 0.8) < 0.03
    assert abs(np.corrcoef(x[y == 1][:, 0], x[y == 1][:, 1])[0, 1] - 0.8) < 0.03
    assert abs(np.corrcoef(x[y == 0][:, 0], x[y == 0][:, 1])[0, 1] - 0.2) < 0.03
    assert abs(np.corrcoef(x[:, 5], x[:, 7])[0, 1] - 0.2) < 0.03
    for cov in setting4_covariances(500):
        np.linalg.cholesky(cov.matrix())


def test_setting5_theta():
    assert THETA[1, 0] == 0.95
    assert THETA.tolist() == [[0.3, 0.4, 0.5, 0.3], [0.95, 0.9, 0.9, 0.95]]


def test_setting5_conditionals():
    data = gen_setting5("balanced", 40_000, 10, seed=13)
    x, y = data.features, np.asarray(data.labels)
    for k in (0, 1):
        for j in range(4):
            rows = y == k
            got = x[rows, 2 * j].mean()
            th = THETA[k, j]
            assert within(got, th, np.sqrt(th * (1 - th) / rows.sum()))
    rows = (y == 1) & (x[:, 0] == 1)
    assert within(x[rows, 1].mean(), 0.95, np.sqrt(0.95 * 0.05 / rows.sum()))
    rows = (y == 0) & (x[:, 0] == 0)
    assert within(x[rows, 1].mean(), 0.4, np.sqrt(0.24 / rows.sum()))
    rows = (y == 0) & (x[:, 0] == 1)
    assert within(x[rows, 1].mean(), 0.05, np.sqrt(0.95 * 0.05 / rows.sum()))
    assert within(x[:, 8].mean(), 0.5, 0.5 / np.sqrt(y.size))
    assert stats.chi2_contingency(np.histogram2d(x[:, 8], y, bins=2)[0]).pvalue > 1e-3


@pytest.mark.parametrize("scenario, pi1", [("balanced", 0.5), ("unbal-73", 0.3), ("unbal-37", 0.7)])
def test_setting5_proportions(scenario, pi1):
    y = np.asarray(gen_setting5(scenario, BIG, 8, seed=14).labels)
    assert within(y.mean(), pi1, np.sqrt(pi1 * (1 - pi1) / BIG))
    assert SimulationSpec("s5", scenario).proportions == pytest.approx((1 - pi1, pi1))


def test_setting5_invalid():
    with pytest.raises(ValueError):
        gen_setting5("skewed", 10, 8, seed=0)


@pytest.mark.parametrize("setting, sub", [("toy", None), ("s1", 3), ("s2", 1), ("s3", None), ("s4", None),
                                          ("s5", "unbal-37")])
def test_determinism(setting, sub):
    spec = SimulationSpec(setting, sub, n=50, p=20, seed=123)
    a, b = spec.generate(), spec.generate()
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels == b.labels
    assert spec.generate(124).features.tobytes() != a.features.tobytes()


def test_spec_truth_and_validation():
    assert SimulationSpec("s4").truth == ((0, 1),) and SimulationSpec("s4").decoys == ((2, 3),)
    assert SimulationSpec("s5").sub == "balanced"
    assert SimulationSpec("s1", "2").sub == 2
    for bad in [("s9", None), ("s1", 7), ("s5", "x"), ("s3", 1)]:
        with pytest.raises(ValueError):
            SimulationSpec(*bad)


def test_replication_seeds_distinct():
    seeds = {replication_seed(0, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert replication_seed(5, 3) == replication_seed(5, 3)
    assert replication_seed(5, 3) != replication_seed(6, 3)
