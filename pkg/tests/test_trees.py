import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cactuslab.coding import decode_tree_from_lukasiewicz, lukasiewicz
from cactuslab.offspring import make_critical_law, make_supercritical_law
from cactuslab.stats import chisquare_pvalue
from cactuslab.trees import (
    CEMETERY, CapExceeded, EnvironmentTooSmall, ImpossibleSize, OrderedTree, PointedTree, mrca,
    recenter, sample_environment, sample_forest, sample_gw, sample_gw_conditioned_atleast,
    sample_gw_conditioned_size, truncate,
)

from conftest import within_3se

BINARY = make_critical_law("binary")
GEOM = make_critical_law("geometric")
NU = make_supercritical_law(pmf=[0, 0.5, 0.5])


def all_trees(n, kmax=None):
    """Every ordered tree with n vertices, as count tuples (brute force)."""
    kmax = n - 1 if kmax is None else kmax
    out = []
    for c in itertools.product(range(kmax + 1), repeat=n):
        if sum(c) != n - 1:
            continue
        s = np.cumsum(np.array(c) - 1)
        if np.all(s[:-1] >= 0):
            out.append(c)
    return out


def exact_shape_law(law, n):
    shapes = all_trees(n)
    w = np.array([np.prod([law.pmf(k) for k in c]) for c in shapes])
    keep = w > 0
    return [s for s, k in zip(shapes, keep) if k], w[keep] / w[keep].sum()


def test_ordered_tree_validation():
    t = OrderedTree([2, 0, 1, 0])
    assert t.n == 4 and t.parent.tolist() == [-1, 0, 0, 2]
    assert t.depth.tolist() == [0, 1, 1, 2] and t.height() == 2
    assert t.size.tolist() == [4, 1, 2, 1]
    for bad in ([1, 0, 0], [0, 1], [2, 0], [-1, 2]):
        with pytest.raises(ValueError):
            OrderedTree(bad)
    assert OrderedTree.from_text(t.to_text()) == t


def test_sample_gw_deterministic():
    a = sample_gw(BINARY, np.random.default_rng(5))
    b = sample_gw(BINARY, np.random.default_rng(5))
    assert a == b


def test_sample_gw_small_sizes(rng):
    def size(cap=10 ** 4):
        # critical sizes are heavy tailed, a capped draw just counts as large
        try:
            return sample_gw(BINARY, rng, cap=cap).n
        except CapExceeded:
            return cap + 1

    n = np.array([size() for _ in range(20000)])
    assert within_3se(n == 1, 0.5)
    assert within_3se(n == 3, 1 / 8)


def test_sample_gw_cap():
    law = make_supercritical_law(pmf=[0, 0, 1])
    with pytest.raises(CapExceeded):
        sample_gw(law, np.random.default_rng(0), cap=1000)


def test_conditioned_size_trivial_and_impossible(rng):
    for _ in range(20):
        assert sample_gw_conditioned_size(BINARY, 3, rng).counts.tolist() == [2, 0, 0]
    with pytest.raises(ImpossibleSize):
        sample_gw_conditioned_size(BINARY, 4, rng)


@pytest.mark.parametrize("law,n", [(BINARY, 5), (GEOM, 4), (BINARY, 7), (GEOM, 5)])
def test_conditioned_size_shape_law(law, n):
    rng = np.random.default_rng(n)
    shapes, p = exact_shape_law(law, n)
    index = {s: i for i, s in enumerate(shapes)}
    obs = np.zeros(len(shapes))
    draws = 20000
    for _ in range(draws):
        obs[index[tuple(sample_gw_conditioned_size(law, n, rng).counts.tolist())]] += 1
    assert chisquare_pvalue(obs, p) > 0.01
    assert 0.5 * np.abs(obs / draws - p).sum() < 0.02


def test_geometric_shape_law_uniform():
    # every ordered tree has weight 2^{-(2n-1)} under geometric(1/2)
    shapes, p = exact_shape_law(GEOM, 4)
    assert len(shapes) == 5 and np.allclose(p, 0.2)


def test_conditioned_size_heavy_tail(rng):
    law = make_critical_law("stable-tail", alpha=1.5)
    for n in (1, 3, 50, 301):
        t = sample_gw_conditioned_size(law, n, rng)
        assert t.n == n
    # this law has no atom at 1, so two vertices cannot occur
    with pytest.raises(ImpossibleSize):
        sample_gw_conditioned_size(law, 2, rng)


def test_conditioned_atleast(rng):
    def size(cap=10 ** 4):
        try:
            return sample_gw_conditioned_atleast(BINARY, 2, rng, cap=cap).n
        except CapExceeded:
            return cap + 1

    sizes = np.array([size() for _ in range(20000)])
    assert sizes.min() >= 2
    assert within_3se(sizes == 3, 0.25)
    assert sample_gw_conditioned_atleast(BINARY, 1, np.random.default_rng(9)) == sample_gw(
        BINARY, np.random.default_rng(9))


def test_forest_sigma(rng):
    f = sample_forest(BINARY, 10, rng)
    s = f.sigma
    assert s[0] == 0 and np.all(np.diff(s) > 0) and s[-1] == sum(t.n for t in f.trees)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["binary", "geometric"]))
def test_lukasiewicz_round_trip(seed, fam):
    law = make_critical_law(fam)
    t = sample_gw_conditioned_size(law, 41, np.random.default_rng(seed))
    V = lukasiewicz(t)
    assert V[-1] == -1 and np.all(V[:-1] >= 0)
    assert np.all(t.parent[1:] < np.arange(1, t.n))
    assert decode_tree_from_lukasiewicz(V) == t


# ------------------------------------------------------------- environments


def _env(seed, q=30, mode="invariant", h_max=40):
    return sample_environment(NU, q, h_max, mode, rng=np.random.default_rng(seed))


def test_environment_heights():
    env = _env(1)
    for p in range(env.q + 1):
        assert env.rel_height(env.spine[p]) == -p
    for x in env.materialize(env.spine[3], 4):
        assert env.rel_height(x) == env.rel_height(env.parent(x)) + 1


def test_spine_law():
    rng = np.random.default_rng(2)
    k1, pairs = [], np.zeros(3)
    for _ in range(4000):
        env = sample_environment(NU, 3, 10, "infinite-GW", rng=rng)
        rec = env.spine_records()
        k1.append(rec[0][1])
        for j, k in rec:
            pairs[{(1, 1): 0, (1, 2): 1, (2, 2): 2}[(j, k)]] += 1
    assert within_3se(k1, 5 / 3)
    assert chisquare_pvalue(pairs, [1, 1, 1]) > 0.01


def test_invariant_root_degree():
    k = np.arange(3)
    m = NU.mean
    w = NU.table * (m + k) / (2 * m)
    assert abs(w.sum() - 1) < 1e-12
    target = float(np.dot(k, w))  # 19/12
    assert target == pytest.approx(19 / 12)
    rng = np.random.default_rng(3)

    def root_degree(mode):
        e = sample_environment(NU, 1, 5, mode, rng=rng)
        return e.nchild(e.o)

    assert within_3se([root_degree("invariant") for _ in range(10000)], target)
    # infinite-GW mode keeps nu at the root
    ki = [root_degree("infinite-GW") for _ in range(10000)]
    assert within_3se(ki, 1.5)


def test_environment_seed_replay():
    a, b = _env(7), _env(7)
    assert a.to_text(3) == b.to_text(3)
    # expansion order does not change the tree
    a.materialize(a.spine[5], 3)
    assert a.to_text(3) == b.to_text(3)


def test_walk_below_spine_bottom_q0():
    env = sample_environment(NU, 0, 10, "invariant", rng=np.random.default_rng(0))
    assert env.parent(env.o) == -1
    with pytest.raises(EnvironmentTooSmall):
        truncate(env, -1, 2)


def test_truncation_rules():
    env = _env(4)
    assert truncate(env, 1, 3) is CEMETERY
    big = truncate(env, -4, 4)
    small = truncate(env, -2, 2)
    assert truncate(big, -2, 2) == small
    assert truncate(recenter(env, env.o), -3, 3) == truncate(env, -3, 3)
    assert np.all(small.heights() >= -2) and np.all(small.heights() <= 2)
    assert small.heights()[small.point] == 0 and small.heights()[0] == -2
    with pytest.raises(ValueError):
        truncate(env, 2, 2)


@pytest.mark.parametrize("seed", range(100))
def test_truncation_commutes_with_recentering(seed):
    env = _env(seed, q=6, h_max=10)
    assert truncate(recenter(env, env.o), -2, 2) == truncate(env, -2, 2)


def test_recentering():
    env = _env(5)
    rng = np.random.default_rng(0)
    layer = env.materialize(env.spine[4], 4)
    x = int(layer[rng.integers(len(layer))])
    y = int(env.spine[2])
    rx = recenter(env, x)
    assert rx.rel_height(x) == 0
    assert rx.rel_height(env.o) == -env.rel_height(x)
    assert truncate(recenter(rx, y), -3, 3) == truncate(recenter(env, y), -3, 3)
    pt = truncate(env, -4, 4)
    assert recenter(pt, pt.point) == pt


def test_mrca():
    env = _env(6)
    assert mrca(env, env.spine[3], env.spine[7]) == env.spine[7]
    rng = np.random.default_rng(1)
    verts = env.materialize(env.spine[8], 6)
    verts += env.materialize(env.spine[5], 3)
    for _ in range(1000):
        x, y = (int(v) for v in rng.choice(verts, 2))
        ax, ay = env.ancestors(x), set(env.ancestors(y))
        oracle = next(a for a in ax if a in ay)
        assert mrca(env, x, y) == oracle == mrca(env, y, x)
        assert env.rel_height(oracle) <= min(env.rel_height(x), env.rel_height(y))
    assert mrca(env, verts[0], verts[0]) == verts[0]
