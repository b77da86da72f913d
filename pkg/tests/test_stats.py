import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from cactuslab.stats import (
    AD_CRIT_1PCT, chisquare_pvalue, energy_distance, ks_pvalue, ks_statistic, mean_se, normality_test,
)


def test_ks_identical_and_disjoint():
    x = np.arange(20.0)
    assert ks_statistic(x, x) == 0.0
    assert ks_statistic(x, x + 100) == 1.0
    assert ks_pvalue(x, x + 100) < 1e-6


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30),
       st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_ks_matches_brute_force(a, b):
    a, b = np.array(a), np.array(b)
    grid = np.concatenate([a, b])
    Fa = (a[None, :] <= grid[:, None]).mean(1)
    Fb = (b[None, :] <= grid[:, None]).mean(1)
    assert ks_statistic(a, b) == pytest.approx(np.abs(Fa - Fb).max(), abs=1e-12)
    assert ks_statistic(a, b) == ks_statistic(b, a)


def test_empty_rejected():
    with pytest.raises(ValueError):
        ks_statistic([], [1.0])
    with pytest.raises(ValueError):
        normality_test([1.0, 2.0], 0.0, 0.0)


def test_anderson_darling_matches_scipy_on_standardized_sample(rng):
    # scipy fits mean and sd; on a standardized sample the fit is exactly N(0, 1)
    x = rng.standard_normal(200)
    x = (x - x.mean()) / x.std(ddof=1)
    assert normality_test(x, 0.0, 1.0) == pytest.approx(sps.anderson(x).statistic, rel=1e-10)


def test_anderson_darling_scale_invariance(rng):
    x = rng.standard_normal(100)
    assert normality_test(3 * x + 1, 1.0, 9.0) == pytest.approx(normality_test(x, 0.0, 1.0), rel=1e-12)


def test_anderson_darling_null_level(rng):
    # fully specified null: the 1% point rejects about 1% of samples
    rej = np.mean([normality_test(rng.standard_normal(50), 0.0, 1.0) > AD_CRIT_1PCT for _ in range(4000)])
    assert abs(rej - 0.01) < 3 * np.sqrt(0.01 * 0.99 / 4000)
    assert normality_test(rng.standard_normal(500) + 0.5, 0.0, 1.0) > AD_CRIT_1PCT


def test_chisquare_formula():
    obs = np.array([18, 22, 40, 20])
    p = np.array([1, 1, 2, 1])
    exp = p / p.sum() * obs.sum()
    stat = ((obs - exp) ** 2 / exp).sum()
    assert chisquare_pvalue(obs, p) == pytest.approx(sps.chi2.sf(stat, 3), rel=1e-12)


def test_energy_distance_and_mean_se():
    assert energy_distance([0.0, 1.0], [0.0, 1.0]) == 0.0
    m, se = mean_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
