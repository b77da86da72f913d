import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import zeta

from cactuslab.offspring import (
    UnsupportedLaw, law_from_config, make_critical_law, make_supercritical_law, pgf, psi,
    scaling_sequences, sigma_nu_sq, tree_size_pgf,
)


def test_binary_law():
    law = make_critical_law("binary")
    assert law.pmf(0) == law.pmf(2) == 0.5
    assert law.mean == 1.0 and law.variance == 1.0


def test_geometric_law():
    law = make_critical_law("geometric")
    k = np.arange(40)
    assert np.allclose(law.pmf(k), 2.0 ** (-k - 1))
    assert abs(law.table.sum() - 1) < 1e-12
    assert abs(np.dot(np.arange(len(law.table)), law.table) - 1) < 1e-12


def test_geometric_non_critical_rejected():
    with pytest.raises(ValueError):
        make_critical_law("geometric", p=0.4)


def test_stable_tail_mean_and_tail():
    law = make_critical_law("stable-tail", alpha=1.5, k0=2)
    c, K = law.tail_const, len(law.table)
    # mean = table part + closed-form tail sum C * zeta(alpha, K)
    mean = np.dot(np.arange(K), law.table) + c * zeta(1.5, K)
    assert abs(mean - 1) < 1e-12
    mass = law.table.sum() + c * zeta(2.5, K)
    assert abs(mass - 1) < 1e-12
    k = np.array([2, 10, 1000, 10 ** 6])
    assert np.allclose(law.pmf(k), c * k ** -2.5)


def test_stable_tail_sampler_tail(rng):
    law = make_critical_law("stable-tail", alpha=1.5, k0=2)
    x = law.sample(rng, 200000)
    # P(X >= 100) against the exact tail
    exact = law.tail_const * zeta(2.5, 100)
    p = (x >= 100).mean()
    assert abs(p - exact) < 4 * np.sqrt(exact / len(x))


def test_supercritical_examples():
    nu = make_supercritical_law(pmf=[0, 0.5, 0.5])
    assert nu.mean == 1.5
    assert sigma_nu_sq(nu) == pytest.approx(4 / 3, abs=1e-14)
    two = make_supercritical_law("deterministic", k=2)
    assert two.mean == 2 and sigma_nu_sq(two) == 1.0
    assert sigma_nu_sq(make_supercritical_law("deterministic", k=5)) == 1.0
    leaves = make_supercritical_law(pmf=[0.2, 0.2, 0.6])
    assert leaves.mean > 1
    with pytest.raises(ValueError):
        make_supercritical_law(pmf=[0.5, 0, 0.5])


def test_pgf_psi_examples():
    b = make_critical_law("binary")
    g = make_critical_law("geometric")
    assert pgf(b, 1.0) == pytest.approx(1.0)
    assert psi(b, 0.0) == pytest.approx(0.0)
    assert pgf(b, 0.5) == pytest.approx(0.625)
    assert pgf(g, 0.5) == pytest.approx(2 / 3)
    # psi(s) = g(1-s) - (1-s); binary gives s^2/2
    assert psi(b, 0.3) == pytest.approx(0.045)


def test_tree_size_pgf():
    b = make_critical_law("binary")
    assert tree_size_pgf(b, 0.6) == pytest.approx(1 / 3, abs=1e-12)
    assert tree_size_pgf(b, 0.0) == 0.0
    for r in (0.2, 0.7, 0.95):
        assert tree_size_pgf(b, r) == pytest.approx((1 - np.sqrt(1 - r * r)) / r, abs=1e-12)


def test_tree_size_pgf_geometric_enumeration():
    # P(#tau = n) for geometric(1/2) is Catalan(n-1) 2^{-(2n-1)}
    from math import comb
    g = make_critical_law("geometric")
    r = 0.5
    total = sum(comb(2 * n - 2, n - 1) / n * 2.0 ** (-(2 * n - 1)) * r ** n for n in range(1, 61))
    assert tree_size_pgf(g, r) == pytest.approx(total, abs=1e-8)


def test_scaling_sequences():
    b = make_critical_law("binary")
    s = scaling_sequences(b, 100)
    assert s.b_n == pytest.approx(np.sqrt(50)) and s.a_n == pytest.approx(14.142135, abs=1e-5)
    assert scaling_sequences(b, 400).b_n / s.b_n == pytest.approx(2.0)
    st_law = make_critical_law("stable-tail", alpha=1.5)
    r = scaling_sequences(st_law, 800).b_n / scaling_sequences(st_law, 100).b_n
    assert r == pytest.approx(4.0)
    with pytest.raises(UnsupportedLaw):
        scaling_sequences(make_supercritical_law(pmf=[0, 0.5, 0.5]), 10)


def test_config_round_trip():
    for law in (make_critical_law("binary"), make_critical_law("stable-tail", alpha=1.7, k0=3),
                make_supercritical_law(pmf=[0.1, 0.3, 0.6])):
        again = law_from_config(law.to_config())
        assert np.array_equal(again.table, law.table) and again.mean == law.mean


@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=6))
def test_sigma_formula_property(w):
    w = np.array(w)
    w[2:] += 0.5  # keep the mean above 1
    p = w / w.sum()
    if np.dot(np.arange(len(p)), p) <= 1.01:
        return
    nu = make_supercritical_law(pmf=p.tolist())
    k = np.arange(len(p))
    m, m2 = np.dot(k, nu.table), np.dot(k * k, nu.table)
    assert sigma_nu_sq(nu) == pytest.approx((m2 - m) / (m * m - m), rel=1e-12)
    assert abs(nu.table.sum() - 1) < 1e-12
