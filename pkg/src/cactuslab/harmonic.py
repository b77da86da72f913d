"""Truncated harmonic coordinates on pointed environments.

U_x is approximated at finite depth d by
    U_x^(d) = m^{-d} * #{descendants of x exactly d generations below x}
and S is the additive functional with S_o = 0 and S_x - S_{parent(x)} = U_x.
At a fixed truncation the counting recursion
    U_x^(d) = m^{-1} sum_{children y} U_y^(d-1)
is an identity, so the one-step martingale property of S along the walk
with lam = m holds exactly when the children of x carry depth d-1 weights.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from . import _arena
from .trees import PointedEnvironment

__all__ = [
    "HarmonicWeights",
    "truncated_weights",
    "recursion_residual",
    "martingale_residual",
    "spine_increment",
    "phi2",
    "phi2_average",
    "N_U_DEFAULT",
]

N_U_DEFAULT = 12


@njit(cache=True)
def _child_cone(x, i, d, nchild, height, sdepth, key, spine_vertex, spine_rank, cdf):
    p = -height[x]
    if sdepth[x] == 0 and p >= 1 and i == spine_rank[p]:
        return _arena.cone_count(spine_vertex[p - 1], d, nchild, height, sdepth, key,
                                 spine_vertex, spine_rank, cdf)
    return _arena._cone_key(_arena.child_key(key[x], np.uint64(i)), d, cdf)


@njit(cache=True)
def _phi2_path(path, lam, d, m, nchild, height, sdepth, key, spine_vertex, spine_rank, cdf):
    """sum over the path of sum_y p(x,y) (S_y - S_x)^2, all weights at depth d."""
    md = m ** d
    total = 0.0
    for t in range(path.shape[0]):
        x = path[t]
        k = nchild[x]
        ux = _arena.cone_count(x, d, nchild, height, sdepth, key, spine_vertex, spine_rank, cdf) / md
        acc = lam * ux * ux
        for i in range(k):
            uy = _child_cone(x, i, d, nchild, height, sdepth, key, spine_vertex, spine_rank, cdf) / md
            acc += uy * uy
        total += acc / (lam + k)
    return total


@njit(cache=True)
def _fill_S(xs, d, m, Ucache, Scache, parent, nchild, height, sdepth, key,
            spine_vertex, spine_rank, cdf):
    """S at each vertex of xs, caching U and S along the way."""
    md = m ** d
    out = np.empty(xs.shape[0])
    chain = np.empty(64, dtype=np.int64)
    for i in range(xs.shape[0]):
        x = xs[i]
        top = 0
        v = x
        while np.isnan(Scache[v]):
            if sdepth[v] == 0:
                p = -height[v]
                if p <= 0:
                    Scache[v] = 0.0
                    break
                q0 = p - 1
                while q0 > 0 and np.isnan(Scache[spine_vertex[q0]]):
                    q0 -= 1
                if q0 == 0:
                    Scache[spine_vertex[0]] = 0.0
                s = Scache[spine_vertex[q0]]
                for q in range(q0, p):
                    u = spine_vertex[q]
                    if np.isnan(Ucache[u]):
                        Ucache[u] = _arena.cone_count(u, d, nchild, height, sdepth, key,
                                                      spine_vertex, spine_rank, cdf) / md
                    s -= Ucache[u]
                    Scache[spine_vertex[q + 1]] = s
                break
            if top == chain.shape[0]:
                chain = np.concatenate((chain, np.empty(chain.shape[0], dtype=np.int64)))
            chain[top] = v
            top += 1
            v = parent[v]
        s = Scache[v]
        for j in range(top - 1, -1, -1):
            w = chain[j]
            if np.isnan(Ucache[w]):
                Ucache[w] = _arena.cone_count(w, d, nchild, height, sdepth, key,
                                              spine_vertex, spine_rank, cdf) / md
            s += Ucache[w]
            Scache[w] = s
        out[i] = Scache[x]
    return out


class HarmonicWeights:
    """Lazily evaluated U^(n_U) and S on one environment.

    Values are pure functions of the environment; they are cached per
    vertex handle.  A vertex is flagged as clipped when its depth-n_U cone
    reaches past the environment's height budget.
    """

    def __init__(self, env: PointedEnvironment, n_U: int = N_U_DEFAULT):
        self.env = env
        self.n_U = int(n_U)
        self.m = float(env.nu.mean)
        self._U = np.full(0, np.nan)
        self._S = np.full(0, np.nan)
        self._sync()

    def _sync(self):
        n = len(self.env.arena.parent)
        if len(self._U) < n:
            for name in ("_U", "_S"):
                old = getattr(self, name)
                new = np.full(n, np.nan)
                new[: len(old)] = old
                setattr(self, name, new)

    def _args(self):
        a = self.env.arena
        return a.nchild, a.height, a.sdepth, a.key, self.env.spine, self.env.spine_rank, self.env.cdf

    def count(self, x: int, d: int) -> int:
        """Descendants of x exactly d generations below."""
        return int(_arena.cone_count(int(x), int(d), *self._args()))

    def U(self, x: int, d: int | None = None) -> float:
        if d is not None and d != self.n_U:
            return self.count(x, d) / self.m ** d
        self._sync()
        v = self._U[x]
        if np.isnan(v):
            v = self.count(x, self.n_U) / self.m ** self.n_U
            self._U[x] = v
        return float(v)

    def child_U(self, x: int, i: int, d: int | None = None) -> float:
        """U of the i-th child of x without materializing it."""
        d = self.n_U if d is None else d
        return _child_cone(int(x), int(i), int(d), *self._args()) / self.m ** d

    def clipped(self, x: int, d: int | None = None) -> bool:
        d = self.n_U if d is None else d
        return bool(self.env.arena.sdepth[x] + d > self.env.h_max)

    def S(self, x):
        """S at a vertex or an array of vertices, with S = 0 at the point.

        The cache is anchored at the spine bottom o(0); views recentered
        elsewhere subtract the cached value at their point.
        """
        self._sync()
        a = self.env.arena
        xs = np.atleast_1d(np.asarray(x, dtype=np.int64))
        if self.env.point != self.env.spine[0]:
            xs = np.append(xs, self.env.point)
        out = _fill_S(xs, self.n_U, self.m, self._U, self._S, a.parent, *self._args())
        if len(out) > np.size(x):
            out = out[:-1] - out[-1]
        return float(out[0]) if np.ndim(x) == 0 else out

    def csv_rows(self, vertices):
        h = self.env.rel_height(np.asarray(vertices))
        return [(int(v), int(hh), self.U(v), self.S(v)) for v, hh in zip(vertices, h)]


def truncated_weights(env: PointedEnvironment, n_U: int = N_U_DEFAULT) -> HarmonicWeights:
    return HarmonicWeights(env, n_U)


def recursion_residual(w: HarmonicWeights, x: int, d: int | None = None) -> float:
    """U_x^(d) - m^{-1} sum_y U_y^(d-1), computed from independent counts."""
    d = w.n_U if d is None else d
    k = w.env.nchild(x)
    kids = sum(w.child_U(x, i, d - 1) for i in range(k))
    return w.U(x, d) - kids / w.m


def martingale_residual(w: HarmonicWeights, x: int, lam: float | None = None) -> float:
    """sum_y p(x,y)(S_y - S_x) with the weights anchored at the level of x.

    The parent move costs -U_x^(n_U), a move to child y gains
    U_y^(n_U - 1).  With lam = m this vanishes by the counting identity.
    """
    lam = w.m if lam is None else float(lam)
    k = w.env.nchild(x)
    up = -lam * w.U(x)
    down = sum(w.child_U(x, i, w.n_U - 1) for i in range(k))
    if w.env.arena.parent[x] < 0:
        return down / k if k else 0.0
    return (up + down) / (lam + k)


def spine_increment(w: HarmonicWeights, p: int, both: bool = False):
    """beta_p = U_{o(p)} - m^{-1} U_{o(p-1)}^(n_U-1).

    With ``both`` also returns m^{-1} * sum over off-spine children of
    o(p) of U^(n_U-1), which must agree.
    """
    if p < 1 or p > w.env.q:
        raise ValueError("p must lie in 1..q")
    env = w.env
    x, below = env.spine[p], env.spine[p - 1]
    beta = w.U(x) - w.U(below, w.n_U - 1) / w.m
    if not both:
        return beta
    skip = env.spine_rank[p]
    off = sum(w.child_U(x, i, w.n_U - 1) for i in range(env.nchild(x)) if i != skip)
    return beta, off / w.m


def phi2(w: HarmonicWeights, x: int, lam: float | None = None) -> float:
    """E[(S_{X_1} - S_{X_0})^2 | X_0 = x]."""
    lam = w.m if lam is None else float(lam)
    return float(_phi2_path(np.array([x], dtype=np.int64), lam, w.n_U, w.m, *w._args()))


def phi2_average(w: HarmonicWeights, walk, lam: float | None = None) -> float:
    """Average of the exact one-step conditional second moments along a walk."""
    path = walk.vertices if hasattr(walk, "vertices") else np.asarray(walk, dtype=np.int64)
    path = path[:-1] if len(path) > 1 else path
    lam = w.m if lam is None else float(lam)
    return float(_phi2_path(path.astype(np.int64), lam, w.n_U, w.m, *w._args())) / len(path)
