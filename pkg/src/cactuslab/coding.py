"""Coding functions of finite trees and forests.

Lukasiewicz path V, height process H, contour process C and the time
change phi with H_s = C_{phi(s)}.  H and phi are piecewise linear with
breakpoints on the half-integers, C on the integers, so every identity
between them can be checked exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit

from .offspring import OffspringLaw
from .trees import OrderedTree

__all__ = [
    "DecodeError",
    "PiecewiseLinear",
    "CodingTriple",
    "lukasiewicz",
    "height_from_lukasiewicz",
    "height_process",
    "contour",
    "contour_vertices",
    "height_contour_timechange",
    "coding_triple",
    "decode_tree_from_lukasiewicz",
    "mrca_depth_from_height",
    "kemperman_check",
    "forest_codings",
    "concatenate_forest",
    "to_csv_rows",
]


class DecodeError(ValueError):
    """Input is not the Lukasiewicz path of a single finite tree."""


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous function given by its values at sorted breakpoints."""

    x: np.ndarray
    y: np.ndarray

    def __call__(self, s):
        return np.interp(s, self.x, self.y)

    def exact(self, s) -> Fraction:
        """Evaluate in rational arithmetic (breakpoints are dyadic floats)."""
        s = Fraction(s)
        i = int(np.searchsorted(self.x, float(s), side="right")) - 1
        i = min(max(i, 0), len(self.x) - 2)
        x0, x1 = Fraction(float(self.x[i])), Fraction(float(self.x[i + 1]))
        y0, y1 = Fraction(float(self.y[i])), Fraction(float(self.y[i + 1]))
        if x1 == x0:
            return y0
        return y0 + (y1 - y0) * (s - x0) / (x1 - x0)

    @property
    def domain(self):
        return float(self.x[0]), float(self.x[-1])


# ------------------------------------------------------------------ kernels


@njit(cache=True)
def _height_recount(V):
    """H_l = #{m < l : V_m = min_{m<=j<=l} V_j} via a monotone stack."""
    n = V.shape[0] - 1
    H = np.empty(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    top = 0
    for l in range(n):
        while top > 0 and V[stack[top - 1]] > V[l]:
            top -= 1
        H[l] = top
        stack[top] = l
        top += 1
    return H


@njit(cache=True)
def _contour_vertices(counts, size):
    n = counts.shape[0]
    out = np.empty(2 * n - 1, dtype=np.int64)
    nxt = np.empty(n, dtype=np.int64)  # next child to visit
    seen = np.zeros(n, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    parent[0] = -1
    v = 0
    nxt[0] = 1
    out[0] = 0
    for k in range(1, 2 * n - 1):
        if seen[v] < counts[v]:
            c = nxt[v]
            seen[v] += 1
            nxt[v] = c + size[c]
            parent[c] = v
            nxt[c] = c + 1
            v = c
        else:
            v = parent[v]
        out[k] = v
    return out


# ------------------------------------------------------------------ codings


def lukasiewicz(tree: OrderedTree) -> np.ndarray:
    """V_0 = 0, V_{l+1} - V_l = k_{u_l} - 1; length #t + 1, ends at -1."""
    return np.concatenate([[0], np.cumsum(tree.counts - 1)]).astype(np.int64)


def _check_path(V):
    V = np.asarray(V, dtype=np.int64)
    if V.ndim != 1 or len(V) < 2 or V[0] != 0:
        raise DecodeError("path must start at 0 and have at least one step")
    inc = np.diff(V)
    if np.any(inc < -1):
        raise DecodeError("increments must be >= -1")
    if V[-1] != -1:
        raise DecodeError("path must end at -1")
    if np.any(V[:-1] < 0):
        raise DecodeError("path hits -1 before its last step")
    return V


def height_from_lukasiewicz(V) -> np.ndarray:
    """Integer heights H_0..H_{n-1} read off the Lukasiewicz path."""
    return _height_recount(_check_path(V))


def decode_tree_from_lukasiewicz(V) -> OrderedTree:
    V = _check_path(V)
    return OrderedTree(np.diff(V) + 1)


def contour_vertices(tree: OrderedTree) -> np.ndarray:
    """Vertex indices v_0, ..., v_{2(n-1)} visited by the contour walk."""
    return _contour_vertices(tree.counts, tree.size)


def contour(tree: OrderedTree) -> np.ndarray:
    """C_0..C_{2n}: depths along the contour walk, padded by two zeros."""
    c = tree.depth[contour_vertices(tree)]
    return np.concatenate([c, [0, 0]]).astype(np.int64)


def _half_grid(H):
    """Values of H and phi at s = j/2, j = 0..2n (interpolation rules)."""
    n = len(H)
    K = 2 * np.arange(n) - H
    h = np.empty(2 * n + 1)
    f = np.empty(2 * n + 1)
    h[0 : 2 * n : 2] = H
    f[0 : 2 * n : 2] = K
    for l in range(n):
        if l == n - 1:
            # last vertex: descend to the root, then rest on the padding
            h[2 * l + 1] = 0
            f[2 * l + 1] = 2 * n - 2
        elif H[l + 1] == H[l] + 1:
            h[2 * l + 1] = H[l] + 0.5
            f[2 * l + 1] = K[l] + 0.5
        else:
            # u_l is a leaf: descend to the common ancestor, climb one step
            h[2 * l + 1] = H[l + 1] - 1
            f[2 * l + 1] = K[l + 1] - 1
    h[2 * n] = 0
    f[2 * n] = 2 * n
    return h, f


def height_process(tree_or_H) -> PiecewiseLinear:
    """Continuous height process on [0, #t] with H_{#t} = 0."""
    H = tree_or_H.depth if isinstance(tree_or_H, OrderedTree) else np.asarray(tree_or_H)
    h, _ = _half_grid(H)
    return PiecewiseLinear(np.arange(len(h)) / 2.0, h)


def height_contour_timechange(tree: OrderedTree) -> PiecewiseLinear:
    """Increasing bijection phi: [0, #t] -> [0, 2#t] with H_s = C_{phi(s)}."""
    _, f = _half_grid(tree.depth)
    return PiecewiseLinear(np.arange(len(f)) / 2.0, f)


@dataclass(frozen=True)
class CodingTriple:
    V: np.ndarray
    H: PiecewiseLinear
    C: PiecewiseLinear
    K: np.ndarray
    phi: PiecewiseLinear


def coding_triple(tree: OrderedTree) -> CodingTriple:
    c = contour(tree)
    H = tree.depth
    return CodingTriple(
        V=lukasiewicz(tree),
        H=height_process(H),
        C=PiecewiseLinear(np.arange(len(c), dtype=float), c.astype(float)),
        K=2 * np.arange(len(H)) - H,
        phi=height_contour_timechange(tree),
    )


def mrca_depth_from_height(H, l: int, lp: int) -> int:
    """|u_l ^ u_l'| as the minimum of the continuous height process on [l, l']."""
    if l > lp:
        l, lp = lp, l
    h = H.y if isinstance(H, PiecewiseLinear) else _half_grid(np.asarray(H))[0]
    return int(h[2 * l : 2 * lp + 1].min())


# ------------------------------------------------------------------ Kemperman


def _rational_pmf(law: OffspringLaw, kmax: int):
    return [Fraction(float(p)) for p in law.pmf(np.arange(kmax + 1))]


def kemperman_check(law: OffspringLaw, n: int):
    """(P(#tau = n), P(V_n = -1)/n) in exact rational arithmetic.

    The left side is a first-passage DP for the walk killed at -1, the
    right side an unrestricted convolution.  Probabilities are taken from
    the float pmf, which is exact for dyadic laws.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n > 25:
        raise ValueError("exact DP limited to n <= 25")
    mu = _rational_pmf(law, n)
    # killed walk: f[v] = P(V_t = v, V_s >= 0 for s <= t)
    f = {0: Fraction(1)}
    first = Fraction(0)
    for t in range(n):
        g = {}
        for v, pv in f.items():
            for k, pk in enumerate(mu):
                if pk == 0:
                    continue
                w = v + k - 1
                if w < 0:
                    if t == n - 1:
                        first += pv * pk
                    continue
                if w > n:
                    continue
                g[w] = g.get(w, 0) + pv * pk
        f = g
    # free walk
    d = {0: Fraction(1)}
    for _ in range(n):
        g = {}
        for v, pv in d.items():
            for k, pk in enumerate(mu):
                if pk == 0:
                    continue
                w = v + k - 1
                if w > n:
                    continue
                g[w] = g.get(w, 0) + pv * pk
        d = g
    return first, d.get(-1, Fraction(0)) / n


# ------------------------------------------------------------------ forests


def forest_codings(forest, window=None):
    """Yield (k, sigma_k, V, H, C) per tree with forest offsets.

    V is shifted by -k so that consecutive pieces concatenate into the
    forest Lukasiewicz path; H and C are unchanged.  ``window`` = (a, b)
    restricts to trees k with a <= k < b.
    """
    a, b = (0, len(forest)) if window is None else window
    sigma = forest.sigma
    for k in range(a, min(b, len(forest))):
        t = forest.trees[k]
        yield k, int(sigma[k]), lukasiewicz(t)[:-1] - k, t.depth.copy(), contour(t)[:-1]


def concatenate_forest(forest, window=None):
    """Materialize (V, H, C) for the requested window of the forest."""
    parts = list(forest_codings(forest, window))
    k_end = parts[-1][0] + 1 if parts else 0
    V = np.concatenate([p[2] for p in parts] + [[-k_end]])
    H = np.concatenate([p[3] for p in parts])
    C = np.concatenate([p[4] for p in parts] + [[0]])
    return V, H, C


def to_csv_rows(f: PiecewiseLinear, per_unit: int = 1):
    lo, hi = f.domain
    s = np.linspace(lo, hi, int(round((hi - lo) * per_unit)) + 1)
    return list(zip(s.tolist(), f(s).tolist()))
