"""Test statistics used by the experiments."""
from __future__ import annotations

import numpy as np
from scipy import stats as sps

__all__ = [
    "ks_statistic",
    "ks_pvalue",
    "normality_test",
    "AD_CRIT_1PCT",
    "chisquare_pvalue",
    "energy_distance",
    "mean_se",
]

# upper 1% point of A^2 for a fully specified null (Stephens, case 0)
AD_CRIT_1PCT = 3.857


def _nonempty(*xs):
    out = []
    for x in xs:
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("empty sample")
        out.append(x)
    return out


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|."""
    a, b = _nonempty(a, b)
    return float(sps.ks_2samp(a, b, method="asymp").statistic)


def ks_pvalue(a, b) -> float:
    a, b = _nonempty(a, b)
    return float(sps.ks_2samp(a, b).pvalue)


def normality_test(sample, mean: float, var: float) -> float:
    """Anderson-Darling A^2 against the fully specified N(mean, var)."""
    (x,) = _nonempty(sample)
    if var <= 0:
        raise ValueError("variance must be positive")
    x = np.sort(x)
    n = len(x)
    z = (x - mean) / np.sqrt(var)
    logF = sps.norm.logcdf(z)
    logS = sps.norm.logsf(z[::-1])
    i = np.arange(1, n + 1)
    return float(-n - np.sum((2 * i - 1) * (logF + logS)) / n)


def chisquare_pvalue(observed, expected_prob) -> float:
    observed = np.asarray(observed, dtype=float)
    p = np.asarray(expected_prob, dtype=float)
    return float(sps.chisquare(observed, p / p.sum() * observed.sum()).pvalue)


def energy_distance(a, b) -> float:
    a, b = _nonempty(a, b)
    return float(sps.energy_distance(a, b))


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))
