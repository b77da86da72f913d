"""Pseudometrics coded by functions, snakes and branching-walk ranges.

All grids are dense symmetric tables over a time grid.  The maximal gap
between the snake pseudometric and the range pseudometric of a branching
walk is computed without building either table.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _arena
from .coding import contour_vertices
from .snakes import BranchingWalk

__all__ = [
    "PseudometricGrid",
    "SparseTableRMQ",
    "tree_pseudometric_from_height",
    "snake_pseudometric",
    "snake_pseudometric_at",
    "range_pseudometric",
    "cactus_discrepancy",
    "ghp_upper_bound",
    "ghp_exact_small",
    "MeasuredSpace",
    "sample_functionals",
    "four_point_violation",
]


@dataclass
class PseudometricGrid:
    times: np.ndarray
    D: np.ndarray
    mass: np.ndarray = None
    real_tree: bool = False

    def __post_init__(self):
        if self.mass is None:
            self.mass = np.full(len(self.times), 1.0 / len(self.times))

    @property
    def N(self) -> int:
        return len(self.times)

    def check(self, tol: float = 0.0) -> bool:
        """Zero diagonal, symmetry and the triangle inequality."""
        D = self.D
        if np.abs(np.diag(D)).max() > tol or np.abs(D - D.T).max() > tol:
            return False
        for k in range(self.N):
            if np.any(D > D[:, [k]] + D[[k], :] + tol):
                return False
        return True

    def csv_rows(self):
        return [row.tolist() for row in self.D]


class SparseTableRMQ:
    """O(N log N) preprocessing, O(1) range-minimum queries on [i, j]."""

    def __init__(self, a):
        a = np.asarray(a)
        self.table = [a]
        k = 1
        while 2 * k <= len(a):
            prev = self.table[-1]
            self.table.append(np.minimum(prev[:-k], prev[k:]))
            k *= 2

    def query(self, i, j):
        i, j = np.minimum(i, j), np.maximum(i, j)
        lev = np.floor(np.log2(j - i + 1)).astype(int)
        if np.ndim(lev) == 0:
            t = self.table[lev]
            return min(t[i], t[j - (1 << lev) + 1])
        out = np.empty(np.shape(lev), dtype=self.table[0].dtype)
        for L in np.unique(lev):
            sel = lev == L
            t = self.table[L]
            out[sel] = np.minimum(t[i[sel]], t[j[sel] - (1 << L) + 1])
        return out


@njit(cache=True)
def _tree_table(h):
    n = h.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        m = h[i]
        for j in range(i + 1, n):
            if h[j] < m:
                m = h[j]
            D[i, j] = D[j, i] = h[i] + h[j] - 2.0 * m
    return D


@njit(cache=True)
def _chain(h, w, i, step):
    """Ancestral records of grid point i scanning in direction ``step``.

    Returns their levels (non-increasing, starting at h[i]) and the running
    minimum of w along them.
    """
    n = h.shape[0]
    lev = np.empty(n)
    pm = np.empty(n)
    lev[0], pm[0] = h[i], w[i]
    c = 1
    k = i + step
    while 0 <= k < n:
        if h[k] <= lev[c - 1]:
            lev[c] = h[k]
            pm[c] = min(pm[c - 1], w[k])
            c += 1
        k += step
    return lev[:c], pm[:c]


@njit(cache=True)
def _chain_min(lev, pm, m):
    """min of w over the records of a chain at level >= m."""
    lo, hi = 0, lev.shape[0] - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if lev[mid] >= m:
            lo = mid
        else:
            hi = mid - 1
    return pm[lo]


@njit(cache=True)
def _snake_table(h, w):
    """d = w_i + w_j - 2 min(w over the grid points of the geodesic [[i, j]]).

    The geodesic consists of the ancestors of i and of j above m = min h
    on [i, j].  Ancestors of i are its records on both sides: those to the
    right up to the argmin and those to the left above level m (and the
    mirror image for j).  Pointers along the chains keep this O(n^2).
    """
    n = h.shape[0]
    A = np.zeros((n, n))
    for i in range(n):
        lev, pm = _chain(h, w, i, -1)
        p = 0
        mh = h[i]
        mw = w[i]
        A[i, i] = mw
        for j in range(i + 1, n):
            if h[j] <= mh:
                mh = h[j]
                if w[j] < mw:
                    mw = w[j]
            while p + 1 < lev.shape[0] and lev[p + 1] >= mh:
                p += 1
            A[i, j] = min(mw, pm[p])
    D = np.zeros((n, n))
    for j in range(n):
        lev, pm = _chain(h, w, j, 1)
        p = 0
        mh = h[j]
        mw = w[j]
        for i in range(j - 1, -1, -1):
            if h[i] <= mh:
                mh = h[i]
                if w[i] < mw:
                    mw = w[i]
            while p + 1 < lev.shape[0] and lev[p + 1] >= mh:
                p += 1
            d = w[i] + w[j] - 2.0 * min(min(mw, A[i, j]), pm[p])
            D[i, j] = D[j, i] = d
    return D


def tree_pseudometric_from_height(h, times=None) -> PseudometricGrid:
    """d_h(s, t) = h(s) + h(t) - 2 min_{[s,t]} h."""
    h = np.asarray(h, dtype=float)
    times = np.linspace(0, 1, len(h)) if times is None else np.asarray(times)
    return PseudometricGrid(times, _tree_table(h), real_tree=True)


def snake_pseudometric(h, w=None, times=None) -> PseudometricGrid:
    """Snake pseudometric of (h, w); accepts a SnakeGrid or a continuum sample."""
    if w is None:
        h, w = h.h, h.w
    h = np.asarray(h, dtype=float)
    w = np.asarray(w, dtype=float)
    times = np.linspace(0, 1, len(h)) if times is None else np.asarray(times)
    return PseudometricGrid(times, _snake_table(h, w), real_tree=True)


@njit(cache=True)
def _snake_subtable(h, w, idx):
    """Snake pseudometric restricted to the grid indices idx, O(len(idx) * n)."""
    n = h.shape[0]
    k = idx.shape[0]
    lev = np.empty((2, k, n))
    pm = np.empty((2, k, n))
    size = np.empty((2, k), dtype=np.int64)
    for a in range(k):
        for side in range(2):
            lv, p = _chain(h, w, idx[a], 2 * side - 1)
            size[side, a] = lv.shape[0]
            lev[side, a, : lv.shape[0]] = lv
            pm[side, a, : lv.shape[0]] = p
    D = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            i, j = idx[a], idx[b]
            lo, hi = min(i, j), max(i, j)
            m = h[lo:hi + 1].min()
            mw = np.inf
            for c in (a, b):
                for side in range(2):
                    L = size[side, c]
                    mw = min(mw, _chain_min(lev[side, c, :L], pm[side, c, :L], m))
            D[a, b] = D[b, a] = w[i] + w[j] - 2.0 * mw
    return D


def snake_pseudometric_at(h, w, idx) -> np.ndarray:
    """Table of the snake pseudometric between the grid points ``idx`` only."""
    idx = np.asarray(idx, dtype=np.int64)
    return _snake_subtable(np.asarray(h, dtype=float), np.asarray(w, dtype=float), idx)


# ----------------------------------------------------------------- range


class _RangeLCA:
    """Heights of environment common ancestors among the vertices of a BRW range.

    The range of a nearest-neighbour branching walk is a connected subtree
    of the environment, so its Euler tour answers the queries.
    """

    def __init__(self, brw: BranchingWalk):
        env = brw.env
        verts = np.unique(brw.labels)
        par = env.arena.parent[verts]
        pos = np.searchsorted(verts, par)
        pos = np.minimum(pos, len(verts) - 1)
        inside = verts[pos] == par
        par_r = np.where(inside, pos, -1).astype(np.int64)
        if (par_r < 0).sum() != 1:
            raise ValueError("branching walk range is not connected")
        h = (env.arena.height[verts] - env.arena.height[brw.origin]).astype(np.int64)
        self.first, tour = _arena.euler_tour(par_r, h)
        self.rmq = SparseTableRMQ(tour)
        self.tour = tour
        self.index = np.searchsorted(verts, brw.labels)  # genealogy vertex -> range index
        self.h = h

    def height(self, a, b):
        """||Y_a ^ Y_b|| for range indices a, b."""
        return self.rmq.query(self.first[a], self.first[b])



def _contour_range_index(brw, times):
    """Range index of the environment vertex visited at each contour time.

    Non-integer times use the nearer contour vertex (ties to the later one).
    """
    cv = np.concatenate([contour_vertices(brw.genealogy), [0, 0]])
    k = np.floor(np.asarray(times) + 0.5).astype(np.int64)
    return cv[np.clip(k, 0, len(cv) - 1)]


def range_pseudometric(brw: BranchingWalk, times=None) -> PseudometricGrid:
    """d(s, s') = ||Y(s)|| + ||Y(s')|| - 2 ||Y(s) ^ Y(s')|| along the contour."""
    n = brw.genealogy.n
    times = np.arange(2 * n + 1, dtype=float) if times is None else np.asarray(times, dtype=float)
    lca = _RangeLCA(brw)
    g = _contour_range_index(brw, times)
    r = lca.index[g]
    h = lca.h[r].astype(float)
    I, J = np.meshgrid(r, r, indexing="ij")
    L = lca.height(I.ravel(), J.ravel()).reshape(I.shape)
    D = h[:, None] + h[None, :] - 2.0 * L
    return PseudometricGrid(times, D, real_tree=True)


@njit(cache=True)
def _discrepancy_pass(h, w, f, table, forward):
    """max over pairs of (L - min w over the records seen from one end)."""
    n = h.shape[0]
    best = 0.0
    for a in range(n):
        i = a if forward else n - 1 - a
        mh = h[i]
        mw = w[i]
        step = 1 if forward else -1
        j = i + step
        while 0 <= j < n:
            if h[j] <= mh:
                mh = h[j]
                if w[j] < mw:
                    mw = w[j]
            x, y = f[i], f[j]
            if x > y:
                x, y = y, x
            span = y - x + 1
            lev = 0
            while (2 << lev) <= span:
                lev += 1
            t1 = table[lev, x]
            t2 = table[lev, y - (1 << lev) + 1]
            L = t1 if t1 < t2 else t2
            if L - mw > best:
                best = L - mw
            j += step
    return best


def cactus_discrepancy(brw: BranchingWalk) -> float:
    """max over contour-time pairs of d_{C,W} - d_range (relative-height labels).

    With L the height of the environment common ancestor, the gap at a pair
    is 2 (L - min w over the genealogy geodesic); the geodesic minimum is
    the smaller of the two record minima, handled by one pass each.
    """
    lca = _RangeLCA(brw)
    cv = contour_vertices(brw.genealogy)
    r = lca.index[cv]
    h = brw.genealogy.depth[cv].astype(np.float64)
    w = lca.h[r].astype(np.float64)
    f = lca.first[r]
    tab = lca.rmq.table
    size = len(tab[0])
    table = np.full((len(tab), size), np.iinfo(np.int64).max, dtype=np.int64)
    for i, t in enumerate(tab):
        table[i, : len(t)] = t
    a = _discrepancy_pass(h, w, f, table, True)
    b = _discrepancy_pass(h, w, f, table, False)
    return 2.0 * max(a, b)


def ghp_upper_bound(D1, D2) -> float:
    """(3/2) max |d - d'| for two pseudometrics on a common grid."""
    A = D1.D if isinstance(D1, PseudometricGrid) else np.asarray(D1)
    B = D2.D if isinstance(D2, PseudometricGrid) else np.asarray(D2)
    if A.shape != B.shape:
        raise ValueError("grid mismatch")
    if isinstance(D1, PseudometricGrid) and isinstance(D2, PseudometricGrid):
        if not np.array_equal(D1.times, D2.times):
            raise ValueError("grid mismatch")
    return 1.5 * float(np.abs(A - B).max())


# --------------------------------------------------------------- small GHP


@dataclass(frozen=True)
class MeasuredSpace:
    """Finite pointed measured (pseudo)metric space; root is point 0."""

    D: np.ndarray
    mass: np.ndarray
    root: int = 0

    @property
    def n(self):
        return len(self.mass)


@njit(cache=True)
def _prokhorov_one_side(C, mu, nu, n1):
    """inf eps with mu(F) <= nu(F^eps) + eps for every F in the first block."""
    n2 = nu.shape[0]
    best = 0.0
    for F in range(1, 1 << n1):
        mF = 0.0
        for i in range(n1):
            if F >> i & 1:
                mF += mu[i]
        if mF <= best:
            continue
        # distance of each point of the second block to F
        dist = np.empty(n2)
        for j in range(n2):
            d = np.inf
            for i in range(n1):
                if F >> i & 1 and C[i, n1 + j] < d:
                    d = C[i, n1 + j]
            dist[j] = d
        order = np.argsort(dist)
        # nu(F^eps) is a step function jumping at the sorted distances
        eps = mF
        acc = 0.0
        for t in range(n2 + 1):
            lo = 0.0 if t == 0 else dist[order[t - 1]]
            hi = np.inf if t == n2 else dist[order[t]]
            if t > 0:
                acc += nu[order[t - 1]]
            cand = max(lo, mF - acc)
            if cand < hi or t == n2:
                eps = min(eps, cand)
                break
        if eps > best:
            best = eps
    return best


@njit(cache=True)
def _embedding(D1, D2, R, dis):
    """Metric on the disjoint union induced by a correspondence R."""
    n1, n2 = D1.shape[0], D2.shape[0]
    C = np.zeros((n1 + n2, n1 + n2))
    C[:n1, :n1] = D1
    C[n1:, n1:] = D2
    for x in range(n1):
        for y in range(n2):
            best = np.inf
            for r in range(R.shape[0]):
                v = D1[x, R[r, 0]] + dis / 2.0 + D2[R[r, 1], y]
                if v < best:
                    best = v
            C[x, n1 + y] = best
            C[n1 + y, x] = best
    return C


@njit(cache=True)
def _value(D1, D2, m1, m2, r1, r2, R):
    dis = 0.0
    for a in range(R.shape[0]):
        for b in range(R.shape[0]):
            v = abs(D1[R[a, 0], R[b, 0]] - D2[R[a, 1], R[b, 1]])
            if v > dis:
                dis = v
    C = _embedding(D1, D2, R, dis)
    n1 = D1.shape[0]
    haus = 0.0
    for x in range(n1):
        v = np.inf
        for y in range(D2.shape[0]):
            v = min(v, C[x, n1 + y])
        haus = max(haus, v)
    for y in range(D2.shape[0]):
        v = np.inf
        for x in range(n1):
            v = min(v, C[x, n1 + y])
        haus = max(haus, v)
    Ct = np.empty_like(C)
    n2 = D2.shape[0]
    # same metric with the blocks swapped
    Ct[:n2, :n2] = C[n1:, n1:]
    Ct[n2:, n2:] = C[:n1, :n1]
    Ct[:n2, n2:] = C[n1:, :n1]
    Ct[n2:, :n2] = C[:n1, n1:]
    prok = max(_prokhorov_one_side(C, m1, m2, n1), _prokhorov_one_side(Ct, m2, m1, n2))
    return C[r1, n1 + r2] + haus + prok, dis


def ghp_exact_small(space1: MeasuredSpace, space2: MeasuredSpace) -> float:
    """Minimum of root + Hausdorff + Prokhorov over correspondence embeddings.

    Every correspondence R with distortion dis induces the metric
    C(x, y) = min_{(x',y') in R} d1(x, x') + dis/2 + d2(y', y) on the
    disjoint union, where all three terms are computed exactly.  The
    search covers every correspondence when n1 * n2 <= 16 and every
    bijection otherwise (equal sizes required).
    """
    n1, n2 = space1.n, space2.n
    if max(n1, n2) > 7:
        raise ValueError("exact GHP is limited to 7 points")
    D1 = np.asarray(space1.D, dtype=float)
    D2 = np.asarray(space2.D, dtype=float)
    m1 = np.asarray(space1.mass, dtype=float)
    m2 = np.asarray(space2.mass, dtype=float)
    args = (D1, D2, m1, m2, space1.root, space2.root)
    best = np.inf
    if n1 * n2 <= 16:
        pairs = [(x, y) for x in range(n1) for y in range(n2)]
        for mask in range(1, 1 << len(pairs)):
            R = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
            if len({p[0] for p in R}) < n1 or len({p[1] for p in R}) < n2:
                continue
            v, _ = _value(*args, np.array(R, dtype=np.int64))
            best = min(best, v)
        return float(best)
    if n1 != n2:
        raise ValueError("spaces of different sizes need n1 * n2 <= 16")
    # identity first so that pruning by distortion bites early
    for perm in itertools.permutations(range(n1)):
        P = np.array(perm)
        dis = np.abs(D1 - D2[np.ix_(P, P)]).max()
        if dis >= best:
            continue
        v, _ = _value(*args, np.column_stack([np.arange(n1), P]).astype(np.int64))
        best = min(best, v)
    return float(best)


# ------------------------------------------------------------- functionals


def sample_functionals(D, rng: np.random.Generator, count: int) -> np.ndarray:
    """Rows (two-point distance, distance to the root, diameter).

    Points are drawn from the grid's mass; the root is grid index 0.
    """
    G = D if isinstance(D, PseudometricGrid) else PseudometricGrid(np.arange(len(D)), np.asarray(D))
    p = G.mass / G.mass.sum()
    i = rng.choice(G.N, size=count, p=p)
    j = rng.choice(G.N, size=count, p=p)
    out = np.empty((count, 3))
    out[:, 0] = G.D[i, j]
    out[:, 1] = G.D[0, i]
    out[:, 2] = G.D.max()
    return out


def four_point_violation(D, rng=None, samples: int = 100000) -> float:
    """Largest excess in d12 + d34 <= max(d13 + d24, d14 + d23).

    Exhaustive for at most 40 points, random quadruples otherwise.
    """
    D = D.D if isinstance(D, PseudometricGrid) else np.asarray(D)
    n = len(D)
    if n <= 40:
        q = np.array(list(itertools.product(range(n), repeat=4)))
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        q = rng.integers(0, n, size=(samples, 4))
    a, b, c, d = q.T
    lhs = D[a, b] + D[c, d]
    rhs = np.maximum(D[a, c] + D[b, d], D[a, d] + D[b, c])
    return float(max((lhs - rhs).max(), 0.0))
