"""Samplers for the continuum objects.

* ``sample_brownian_excursion``: the standard normalized excursion e.
* ``sample_height_limit``: the limit H of (1/a_n) H_{n.}(tau_n).  With
  b_n = sqrt(var n / 2) the branching mechanism is psi(l) = l^2 and
  H = sqrt(2) e; for alpha < 2 a large-n discrete proxy is used.
* ``sample_brownian_snake_endpoint``: the Brownian snake driven by a
  sampled lifetime, built sequentially along the grid.
* ``cactus_pseudometric``: the snake pseudometric of such a sample.
* ``cactus_two_point``: the cactus distance between two grid times with
  the Brownian-bridge minima between grid levels filled in, and
  ``sample_cactus_two_point_law`` its closed-form limit law.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .coding import height_process
from .metrics import PseudometricGrid, snake_pseudometric
from .offspring import OffspringLaw, UnsupportedLaw, scaling_sequences
from .trees import sample_gw_conditioned_size

__all__ = [
    "ContinuumSnakeSample",
    "sample_brownian_excursion",
    "sample_height_limit",
    "sample_stable_height_proxy",
    "sample_brownian_snake_endpoint",
    "cactus_pseudometric",
    "cactus_two_point",
    "sample_cactus_two_point_law",
    "snake_covariance",
    "contour_class_cf",
]


def sample_brownian_excursion(N: int, rng: np.random.Generator) -> np.ndarray:
    """Normalized excursion at N equally spaced times of [0, 1].

    A Gaussian random-walk bridge with N - 1 steps is rotated at its
    (first) minimum (Vervaat), which yields a nonnegative path vanishing
    exactly at both ends.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    m = N - 1
    z = rng.standard_normal(m) / np.sqrt(m)
    b = np.concatenate([[0.0], np.cumsum(z)])
    b -= np.arange(m + 1) / m * b[-1]
    k = int(np.argmin(b[:-1]))
    e = np.concatenate([b[k:-1], b[: k + 1]]) - b[k]
    e[0] = e[-1] = 0.0
    return e


def sample_stable_height_proxy(alpha: float, law: OffspringLaw, n: int, rng, N: int = 512) -> np.ndarray:
    """(1/a_n) H_{n s}(tau_n) on N + 1 grid points, tau_n of size n."""
    if law.family == "stable-tail" and abs(law.alpha - alpha) > 1e-12:
        raise ValueError("alpha does not match the law")
    sc = scaling_sequences(law, n)
    t = sample_gw_conditioned_size(law, n, rng)
    s = np.linspace(0, n, N + 1)
    return height_process(t)(s) / sc.a_n


def sample_height_limit(law: OffspringLaw, N: int, rng, proxy_n: int = 100000) -> np.ndarray:
    """Sample of the limit lifetime H on N points."""
    if abs(law.mean - 1.0) > 1e-9:
        raise UnsupportedLaw("the height limit needs a critical law")
    if law.finite_support or law.family == "geometric":
        return np.sqrt(2.0) * sample_brownian_excursion(N, rng)
    if law.family == "stable-tail" and law.alpha < 2:
        return sample_stable_height_proxy(law.alpha, law, proxy_n, rng, N - 1)
    raise UnsupportedLaw("no height-limit sampler for this law")


@dataclass(frozen=True)
class ContinuumSnakeSample:
    s: np.ndarray
    h: np.ndarray
    w: np.ndarray
    normals: np.ndarray  # the draws of the sequential construction, for replay

    def path(self, j: int):
        """(levels, values) of the running path W_{s_j} at its stored levels."""
        lv, vv, _ = _snake_run(self.h, self.normals, j)
        return lv, vv


@njit(cache=True)
def _snake_run(h, normals, stop):
    N = h.shape[0]
    lv = np.empty(N + 2)
    vv = np.empty(N + 2)
    w = np.empty(N)
    lv[0] = h[0]
    vv[0] = 0.0
    top = 1
    w[0] = 0.0
    for j in range(N - 1):
        if j == stop:
            break
        m = min(h[j], h[j + 1])
        # drop stored levels above m, remembering the lowest one dropped
        above_l = -1.0
        above_v = 0.0
        while top > 0 and lv[top - 1] > m:
            above_l = lv[top - 1]
            above_v = vv[top - 1]
            top -= 1
        if top == 0 or lv[top - 1] < m:
            if top == 0:
                vm = above_v
            else:
                a, va = lv[top - 1], vv[top - 1]
                if above_l < 0:
                    vm = va
                else:
                    t = (m - a) / (above_l - a)
                    sd = np.sqrt((m - a) * (above_l - m) / (above_l - a))
                    vm = va + t * (above_v - va) + sd * normals[2 * j]
            lv[top] = m
            vv[top] = vm
            top += 1
        vm = vv[top - 1]
        dh = h[j + 1] - m
        wn = vm + np.sqrt(dh) * normals[2 * j + 1]
        w[j + 1] = wn
        if dh > 0:
            lv[top] = h[j + 1]
            vv[top] = wn
            top += 1
    return lv[:top].copy(), vv[:top].copy(), w


def sample_brownian_snake_endpoint(h, rng: np.random.Generator, s=None) -> ContinuumSnakeSample:
    """Brownian snake tip along a lifetime grid.

    The running path is kept as a stack of (level, value) pairs.  Between
    consecutive grid times the path is cut at the lower of the two
    lifetimes, the value there is filled in by a Brownian bridge if needed,
    and a fresh Brownian piece of length h(s_{j+1}) - min is appended.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("lifetime must be nonnegative")
    normals = rng.standard_normal(2 * len(h))
    _, _, w = _snake_run(h, normals, len(h))
    w[0] = 0.0
    s = np.linspace(0, 1, len(h)) if s is None else np.asarray(s)
    return ContinuumSnakeSample(s, h, w, normals)


def cactus_pseudometric(sample: ContinuumSnakeSample) -> PseudometricGrid:
    return snake_pseudometric(sample.h, sample.w, sample.s)


def _records(h, x, k, m):
    """Grid points between x and k (inclusive) on the ancestral line of x, at levels >= m."""
    step = 1 if k >= x else -1
    idx = np.arange(x, k + step, step)
    hv = h[idx]
    on = (hv == np.minimum.accumulate(hv)) & (hv >= m)
    return idx[on]


def _line_min(h, w, idx, rng):
    """Minimum of the snake along the ancestral segment through the grid points idx."""
    lev = h[idx]
    order = np.lexsort((np.arange(len(idx)), -lev))
    lev, val = lev[order], w[idx[order]]
    keep = np.r_[True, np.diff(lev) < 0]
    lev, val = lev[keep], val[keep]
    out = val.min()
    if len(lev) > 1:
        a, b, tau = val[:-1], val[1:], -np.diff(lev)
        # exact minimum of a Brownian bridge of duration tau from a to b
        bridge = 0.5 * (a + b - np.sqrt((a - b) ** 2 - 2.0 * tau * np.log(rng.random(len(tau)))))
        out = min(out, bridge.min())
    return float(out)


def cactus_two_point(h, w, i: int, j: int, rng: np.random.Generator) -> float:
    """Cactus distance between grid times i and j of a snake sample.

    Given the grid values, the snake along each ancestral segment between
    consecutive grid levels is an independent Brownian bridge, so its
    minimum is drawn exactly instead of being read off the grid.  The
    result is the cactus distance of the tree coded by the interpolated
    lifetime; the grid-only pseudometric misses the dips and is biased
    low by an amount decaying like N^(-1/4).
    """
    h = np.asarray(h, dtype=float)
    w = np.asarray(w, dtype=float)
    i, j = sorted((int(i), int(j)))
    if i == j:
        return 0.0
    k = i + int(np.argmin(h[i : j + 1]))
    m = h[k]
    left = np.concatenate([_records(h, i, 0, m), _records(h, i, k, m)])
    right = np.concatenate([_records(h, j, len(h) - 1, m), _records(h, j, k, m)])
    lo = min(_line_min(h, w, left, rng), _line_min(h, w, right, rng))
    return float(w[i] + w[j] - 2.0 * lo)


def sample_cactus_two_point_law(size, rng: np.random.Generator) -> np.ndarray:
    """Distance between two uniform points of the Brownian cactus over sqrt(2) e.

    The tree distance of two uniform points is R / sqrt(2) with R Rayleigh,
    and along the geodesic the labels are Brownian, so the cactus distance
    is sqrt(R / sqrt(2)) times an independent chi_3 variable (2 max - B at
    time 1).  The distance to the root has the same law.
    """
    R = np.sqrt(-2.0 * np.log(rng.random(size)))
    chi3 = np.linalg.norm(rng.standard_normal((3,) + np.shape(R)), axis=0)
    return np.sqrt(R / np.sqrt(2.0)) * chi3


# ------------------------------------------------------------ closed forms


def snake_covariance(h, idx) -> np.ndarray:
    """Cov(w_{s_i}, w_{s_j}) = min of h between grid indices i and j."""
    h = np.asarray(h, dtype=float)
    idx = np.asarray(idx)
    k = len(idx)
    out = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            lo, hi = sorted((idx[a], idx[b]))
            out[a, b] = h[lo : hi + 1].min()
    return out


def contour_class_cf(x, lam) -> float:
    """Characteristic function of the tips at the local maxima of a contour class.

    x = (x_1, ..., x_{2p-1}) lists the heights of the alternating local
    maxima (odd positions) and minima (even positions).  The path is split
    at its lowest interior minimum m: both halves share the Gaussian shift
    of variance m, then evolve independently.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    p = len(lam)
    if len(x) != 2 * p - 1:
        raise ValueError("need 2p - 1 extrema for p maxima")
    if p == 1:
        return float(np.exp(-0.5 * x[0] * lam[0] ** 2))
    mins = x[1::2]
    k = int(np.argmin(mins))
    m = mins[k]
    left = x[: 2 * k + 1] - m
    right = x[2 * k + 2 :] - m
    out = np.exp(-0.5 * m * lam.sum() ** 2)
    return float(out * contour_class_cf(left, lam[: k + 1]) * contour_class_cf(right, lam[k + 1 :]))
