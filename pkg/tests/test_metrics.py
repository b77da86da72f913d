import numpy as np
import pytest
from hypothesis import given, strategies as st

from cactuslab.coding import contour, contour_vertices
from cactuslab.limits import sample_brownian_excursion, sample_brownian_snake_endpoint
from cactuslab.metrics import (
    MeasuredSpace, PseudometricGrid, SparseTableRMQ, cactus_discrepancy, four_point_violation,
    ghp_exact_small, ghp_upper_bound, range_pseudometric, sample_functionals, snake_pseudometric,
    snake_pseudometric_at, tree_pseudometric_from_height,
)
from cactuslab.offspring import make_critical_law, make_supercritical_law
from cactuslab.snakes import relative_height_labels, sample_brw
from cactuslab.stats import ks_pvalue
from cactuslab.trees import OrderedTree, mrca, sample_environment, sample_gw_conditioned_size

NU = make_supercritical_law(pmf=[0, 0.5, 0.5])
MU = make_critical_law("geometric")


def _brw(seed, n):
    rng = np.random.default_rng(seed)
    env = sample_environment(NU, 100, 200, "invariant", rng=rng)
    t = sample_gw_conditioned_size(MU, n, rng)
    return sample_brw(env, t, NU.mean, rng)


def _contour_snake_tables(b):
    """d_{C,W} and the range pseudometric on the contour times 0..2n-2."""
    n = b.genealogy.n
    h = contour(b.genealogy)[: 2 * n - 1].astype(float)
    w = relative_height_labels(b)[contour_vertices(b.genealogy)]
    times = np.arange(2 * n - 1, dtype=float)
    return snake_pseudometric(h, w, times).D, range_pseudometric(b, times).D


def test_tree_metric_examples():
    assert np.all(tree_pseudometric_from_height(np.full(9, 3.0)).D == 0)
    D = tree_pseudometric_from_height([0, 1, 0, 1, 0]).D
    assert D[1, 3] == 2 and D[0, 1] == 1 and D[1, 2] == 1


@given(st.integers(0, 2 ** 32 - 1))
def test_tree_metric_stability(seed):
    rng = np.random.default_rng(seed)
    h = sample_brownian_excursion(64, rng)
    hp = np.abs(h + 0.05 * rng.standard_normal(64))
    D1 = tree_pseudometric_from_height(h)
    D2 = tree_pseudometric_from_height(hp)
    gap = np.abs(h - hp).max()
    assert np.abs(D1.D - D2.D).max() <= 4 * gap + 1e-12
    assert ghp_upper_bound(D1, D2) <= 6 * gap + 1e-12
    assert D1.check(1e-12) and four_point_violation(D1) < 1e-12


def test_rmq_against_brute_force(rng):
    a = rng.standard_normal(200)
    q = SparseTableRMQ(a)
    i = rng.integers(0, 200, 500)
    j = rng.integers(0, 200, 500)
    brute = np.array([a[min(x, y): max(x, y) + 1].min() for x, y in zip(i, j)])
    assert np.array_equal(q.query(i, j), brute)
    assert q.query(5, 5) == a[5]


def geodesic_oracle(h, w):
    """w_i + w_j - 2 min w over every grid point that is an ancestor of i or j above min h."""
    n = len(h)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            m = h[i: j + 1].min()
            geo = [k for k in range(n) for x in (i, j)
                   if h[k] >= m and h[k] == h[min(x, k): max(x, k) + 1].min()]
            D[i, j] = D[j, i] = w[i] + w[j] - 2 * w[geo].min()
    return D


@pytest.mark.parametrize("seed", range(10))
def test_snake_metric_geodesic_oracle(seed):
    rng = np.random.default_rng(seed)
    h = sample_brownian_excursion(21, rng)
    w = sample_brownian_snake_endpoint(h, rng).w
    assert np.allclose(snake_pseudometric(h, w).D, geodesic_oracle(h, w), atol=1e-12)
    b = _brw(seed, 15)
    n = b.genealogy.n
    hc = contour(b.genealogy)[: 2 * n - 1].astype(float)
    wc = relative_height_labels(b)[contour_vertices(b.genealogy)]
    assert np.array_equal(snake_pseudometric(hc, wc).D, geodesic_oracle(hc, wc))


def test_snake_metric_examples():
    assert np.all(snake_pseudometric(np.array([0, 1, 2, 1, 0.]), np.zeros(5)).D == 0)
    D = snake_pseudometric(np.array([0, 1, 0.]), np.array([0, 1, 0.])).D
    assert D[0, 1] == 1 and D[1, 2] == 1 and D[0, 2] == 0


@given(st.integers(0, 2 ** 32 - 1))
def test_snake_metric_real_tree(seed):
    rng = np.random.default_rng(seed)
    h = sample_brownian_excursion(33, rng)
    w = sample_brownian_snake_endpoint(h, rng).w
    G = snake_pseudometric(h, w)
    assert G.check(1e-9)
    assert four_point_violation(G) < 1e-9
    idx = np.sort(rng.choice(33, 6, replace=False))
    assert np.allclose(snake_pseudometric_at(h, w, idx), G.D[np.ix_(idx, idx)], atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_range_metric_and_discrepancy(seed):
    b = _brw(seed, int(np.random.default_rng(seed).integers(2, 60)))
    Dcw, Dr = _contour_snake_tables(b)
    assert np.all(Dcw - Dr >= -1e-12)
    assert np.all(np.diag(Dr) == 0)
    assert four_point_violation(Dr) == 0 and four_point_violation(Dcw) == 0
    assert cactus_discrepancy(b) == pytest.approx((Dcw - Dr).max(), abs=1e-12)
    # genealogy vertices sent to one environment vertex are at range distance 0
    lab = b.labels[contour_vertices(b.genealogy)]
    same = lab[:, None] == lab[None, :]
    assert np.all(Dr[same] == 0)


def test_unary_genealogy_discrepancy():
    rng = np.random.default_rng(1)
    env = sample_environment(NU, 100, 200, "invariant", rng=rng)
    chain = OrderedTree([1] * 30 + [0])
    # always stepping to the last child: the walk never backtracks
    climb = sample_brw(env, chain, NU.mean, uniforms=np.full(31, 0.999))
    assert np.all(np.diff(relative_height_labels(climb)) == 1)
    assert cactus_discrepancy(climb) == 0.0
    # otherwise the gap is twice the deepest dip below a common ancestor
    for _ in range(10):
        b = sample_brw(env, chain, NU.mean, rng)
        y, h = b.labels, relative_height_labels(b)
        gap = max(env.rel_height(mrca(env, y[i], y[j])) - h[i: j + 1].min()
                  for i in range(31) for j in range(i, 31))
        assert cactus_discrepancy(b) == 2 * gap


def test_ghp_upper_bound_errors():
    D = np.zeros((3, 3))
    assert ghp_upper_bound(D, D) == 0
    with pytest.raises(ValueError):
        ghp_upper_bound(D, np.zeros((4, 4)))


def test_ghp_exact_examples():
    one = MeasuredSpace(np.zeros((1, 1)), np.array([1.0]))
    assert ghp_exact_small(one, one) == 0
    two = MeasuredSpace(np.array([[0, 1.0], [1.0, 0]]), np.array([0.5, 0.5]))
    assert ghp_exact_small(two, two) == 0
    # frozen: root 1/2, Hausdorff 1/2 and Prokhorov 1/2 in the optimal gluing
    assert ghp_exact_small(two, one) == 1.5
    with pytest.raises(ValueError):
        ghp_exact_small(MeasuredSpace(np.zeros((8, 8)), np.full(8, 1 / 8)), one)


@pytest.mark.parametrize("seed", range(15))
def test_ghp_exact_below_bound(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    h1 = np.r_[0, rng.integers(0, 4, k - 1)].astype(float)
    h2 = np.r_[0, rng.integers(0, 4, k - 1)].astype(float)
    D1, D2 = tree_pseudometric_from_height(h1).D, tree_pseudometric_from_height(h2).D
    m = np.full(k, 1 / k)
    exact = ghp_exact_small(MeasuredSpace(D1, m), MeasuredSpace(D2, m))
    assert exact <= ghp_upper_bound(D1, D2) + 1e-12


def test_discrete_vs_contour_occupation():
    cherry = OrderedTree([2, 0, 0])
    G = np.array([[0, 1, 1], [1, 0, 2], [1, 2, 0.]])
    disc = MeasuredSpace(G, np.full(3, 1 / 3))
    C = tree_pseudometric_from_height(contour(cherry)[:5].astype(float)).D
    cont = MeasuredSpace(C, np.full(5, 1 / 5))
    assert ghp_exact_small(disc, cont) <= 3


def test_functionals(rng):
    z = sample_functionals(np.zeros((6, 6)), rng, 100)
    assert np.all(z == 0)
    G = tree_pseudometric_from_height(sample_brownian_excursion(50, rng))
    f = sample_functionals(G, np.random.default_rng(0), 500)
    assert np.allclose(f[:, 2], G.D.max())
    # reversing time keeps the root fixed only after relabelling the root, check on pairs
    perm = np.r_[0, np.arange(49, 0, -1)]
    H = PseudometricGrid(G.times, G.D[np.ix_(perm, perm)])
    a = np.sort(sample_functionals(G, np.random.default_rng(1), 20000)[:, 0])
    b = np.sort(sample_functionals(H, np.random.default_rng(1), 20000)[:, 0])
    assert ks_pvalue(a, b) > 0.01


def test_two_point_law_self_consistency():
    def stat(seed):
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(400):
            G = tree_pseudometric_from_height(sample_brownian_excursion(129, rng))
            out.append(sample_functionals(G, rng, 1)[0, 0])
        return np.array(out)
    assert ks_pvalue(stat(1), stat(2)) > 0.01
