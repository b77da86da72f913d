"""Offspring laws, generating functions and scaling sequences.

Three critical families are built in: the binary law, the geometric law
with parameter 1/2, and a power-tail family in the domain of attraction
of an alpha-stable law.  Supercritical laws (the environment side) are
given by a finite probability vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import mpmath
import numpy as np
from scipy.special import gamma, zeta

__all__ = [
    "OffspringLaw",
    "ScalingPair",
    "UnsupportedLaw",
    "make_critical_law",
    "make_supercritical_law",
    "pgf",
    "psi",
    "tree_size_pgf",
    "scaling_sequences",
    "sigma_nu_sq",
]

# atoms beyond this index are sampled from the closed-form tail
_TABLE_SIZE = 1 << 16


class UnsupportedLaw(ValueError):
    """Raised when a law falls outside the families with explicit b_n."""


@dataclass(frozen=True)
class ScalingPair:
    n: int
    a_n: float
    b_n: float


@dataclass(frozen=True)
class OffspringLaw:
    """A probability law on the nonnegative integers.

    ``table`` holds pmf(0), ..., pmf(K-1).  For the stable-tail family the
    mass beyond K is C * k**(-1-alpha) for k >= K and is never stored.
    """

    family: str
    table: np.ndarray
    mean: float
    m2: float  # sum k^2 p(k), +inf when infinite
    alpha: float = 2.0
    params: dict = field(default_factory=dict)
    tail_const: float = 0.0  # C of the power tail (0 for finite support)

    @property
    def fact2(self) -> float:
        """Second factorial moment sum k(k-1) p(k)."""
        return self.m2 - self.mean

    @property
    def variance(self) -> float:
        return self.m2 - self.mean ** 2

    @property
    def finite_support(self) -> bool:
        return self.tail_const == 0.0

    def pmf(self, k):
        k = np.asarray(k)
        out = np.zeros(k.shape, dtype=float)
        inside = (k >= 0) & (k < len(self.table))
        out[inside] = self.table[k[inside]]
        if not self.finite_support:
            far = k >= len(self.table)
            out[far] = self.tail_const * k[far].astype(float) ** (-1.0 - self.alpha)
        return out if out.ndim else float(out)

    def support_bounds(self):
        nz = np.flatnonzero(self.table > 0)
        hi = np.inf if not self.finite_support else int(nz[-1])
        return int(nz[0]), hi

    def period(self) -> int:
        """gcd of the differences of the support (1 means aperiodic)."""
        nz = np.flatnonzero(self.table > 0)
        g = 0
        for k in nz[1:]:
            g = np.gcd(g, int(k - nz[0]))
        if not self.finite_support:
            g = 1
        return int(g) if g else 0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. offspring numbers."""
        cdf = np.cumsum(self.table)
        u = rng.random(size)
        out = np.searchsorted(cdf, u, side="right").astype(np.int64)
        if self.finite_support:
            return np.minimum(out, len(self.table) - 1)
        far = out >= len(self.table)
        if far.any():
            out[far] = _power_tail(rng, int(far.sum()), len(self.table), self.alpha)
        return out

    def to_config(self) -> dict:
        if self.family in ("finite", "supercritical"):
            return {"family": self.family, "pmf": self.table.tolist()}
        return {"family": self.family, **self.params}


def _power_tail(rng, count, k0, alpha):
    """Exact draws from p(k) proportional to k^(-1-alpha) on k >= k0.

    Continuous Pareto proposal on [k0, inf), floored, then thinned.
    """
    out = np.empty(count, dtype=np.int64)
    filled = 0
    bound = (1.0 + 1.0 / k0) ** (1.0 + alpha) / alpha
    while filled < count:
        m = 2 * (count - filled) + 8
        x = k0 * rng.random(m) ** (-1.0 / alpha)
        k = np.floor(x)
        q = k ** (-alpha) - (k + 1.0) ** (-alpha)
        ratio = k ** (-1.0 - alpha) / q / bound
        keep = k[rng.random(m) < ratio].astype(np.int64)
        take = min(len(keep), count - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def _finite_law(family, pmf, params=None):
    pmf = np.asarray(pmf, dtype=float)
    if pmf.ndim != 1 or len(pmf) == 0 or np.any(pmf < 0):
        raise ValueError("pmf must be a nonnegative vector")
    if abs(pmf.sum() - 1.0) > 1e-12:
        raise ValueError(f"pmf sums to {pmf.sum()!r}, not 1")
    k = np.arange(len(pmf), dtype=float)
    mean = float(np.dot(k, pmf))
    m2 = float(np.dot(k * k, pmf))
    return OffspringLaw(family, pmf, mean, m2, 2.0, dict(params or {}))


def make_critical_law(family: str, **params) -> OffspringLaw:
    """Build a critical, aperiodic offspring law.

    family : "binary", "geometric" (parameter p, only p=1/2 is critical)
             or "stable-tail" (parameters alpha in (1,2], k0 >= 1).
    """
    if family == "binary":
        return _finite_law("binary", [0.5, 0.0, 0.5])
    if family == "geometric":
        p = float(params.get("p", 0.5))
        if not 0 < p < 1:
            raise ValueError("geometric parameter must lie in (0,1)")
        if abs((1 - p) / p - 1) > 1e-12:
            raise ValueError(f"geometric({p}) has mean {(1 - p) / p}; only p=1/2 is critical")
        size = 1
        while 0.5 ** (size + 1) > 1e-300 and size < 1200:
            size += 1
        k = np.arange(size)
        table = 0.5 ** (k + 1)
        table[-1] += 1.0 - table.sum()
        # geometric(1/2): mean 1, E k^2 = 3
        return OffspringLaw("geometric", table, 1.0, 3.0, 2.0, {"p": 0.5})
    if family in ("stable-tail", "stable"):
        alpha = float(params.get("alpha", 1.5))
        k0 = int(params.get("k0", 2))
        if not 1 < alpha <= 2:
            raise ValueError(f"tail index alpha={alpha} outside (1,2]")
        if not 1 <= k0 < _TABLE_SIZE:
            raise ValueError("k0 out of range")
        # mass C*zeta(1+a,k0) on [k0, inf) and mean C*zeta(a,k0) = 1
        c = 1.0 / float(zeta(alpha, k0))
        tail_mass = c * float(zeta(1.0 + alpha, k0))
        p0 = 1.0 - tail_mass
        if p0 < 0:
            raise ValueError("no critical solution for these parameters")
        k = np.arange(_TABLE_SIZE, dtype=float)
        table = np.zeros(_TABLE_SIZE)
        table[k0:] = c * k[k0:] ** (-1.0 - alpha)
        table[0] += p0
        return OffspringLaw(
            "stable-tail", table, 1.0, np.inf, alpha,
            {"alpha": alpha, "k0": k0}, tail_const=c,
        )
    raise ValueError(f"unknown critical family {family!r}")


def make_supercritical_law(family: str = "finite", **params) -> OffspringLaw:
    """Environment law with mean > 1.

    family : "finite" with ``pmf`` (list of probabilities from k=0), or
             "deterministic" with ``k``.
    """
    if family == "deterministic":
        k = int(params["k"])
        pmf = np.zeros(k + 1)
        pmf[k] = 1.0
        law = _finite_law("supercritical", pmf)
    elif family in ("finite", "supercritical"):
        law = _finite_law("supercritical", params["pmf"])
    else:
        raise ValueError(f"unknown supercritical family {family!r}")
    if law.mean <= 1:
        raise ValueError(f"mean {law.mean} is not supercritical")
    return law


def law_from_config(cfg) -> OffspringLaw:
    """Build a law from a ``{"family": ..., params}`` mapping."""
    cfg = dict(cfg)
    family = cfg.pop("family")
    if family in ("binary", "geometric", "stable-tail", "stable"):
        return make_critical_law(family, **cfg)
    if family == "critical-finite":
        law = _finite_law("finite", cfg["pmf"])
        if abs(law.mean - 1) > 1e-12:
            raise ValueError("law is not critical")
        return law
    return make_supercritical_law(family, **cfg)


def pgf(law: OffspringLaw, s):
    """Generating function g(s) = sum_k s^k p(k) on [0, 1]."""
    s = np.asarray(s, dtype=float)
    if np.any((s < 0) | (s > 1)):
        raise ValueError("pgf argument outside [0,1]")
    if law.finite_support:
        return np.polynomial.polynomial.polyval(s, law.table)
    return _vectorize(lambda x: _stable_pgf(law, x), s)


def _vectorize(fn, s):
    if s.ndim == 0:
        return fn(float(s))
    return np.array([fn(float(x)) for x in s.ravel()]).reshape(s.shape)


def _stable_pgf(law, s):
    # g(s) = p0 + C * (Li_{1+a}(s) - sum_{1<=k<k0} s^k k^{-1-a})
    if s == 1.0:
        return 1.0
    a = law.alpha
    k0 = law.params["k0"]
    with mpmath.workdps(30):
        tot = mpmath.polylog(1 + a, s)
        for k in range(1, k0):
            tot -= mpmath.mpf(s) ** k * mpmath.mpf(k) ** (-1 - a)
        return float(law.table[0] + law.tail_const * tot)


def psi(law: OffspringLaw, s):
    """psi(s) = g(1-s) - (1-s)."""
    s = np.asarray(s, dtype=float)
    if np.any((s < 0) | (s > 1)):
        raise ValueError("psi argument outside [0,1]")
    if law.finite_support:
        return pgf(law, 1 - s) - (1 - s)

    def one(x):
        if x == 0.0:
            return 0.0
        a, k0 = law.alpha, law.params["k0"]
        with mpmath.workdps(40):
            t = 1 - mpmath.mpf(x)
            tot = mpmath.polylog(1 + a, t)
            for k in range(1, k0):
                tot -= t ** k * mpmath.mpf(k) ** (-1 - a)
            return float(law.table[0] + law.tail_const * tot - t)

    return _vectorize(one, s)


def tree_size_pgf(law: OffspringLaw, r: float, tol: float = 1e-14, max_iter: int = 100000) -> float:
    """Solve phi = r g(phi) by monotone fixed-point iteration from 0."""
    if not 0 <= r < 1:
        raise ValueError("r must lie in [0,1)")
    phi = 0.0
    for _ in range(max_iter):
        nxt = r * float(pgf(law, phi))
        if abs(nxt - phi) < tol:
            return nxt
        phi = nxt
    raise RuntimeError("fixed-point iteration did not converge")


def scaling_sequences(law: OffspringLaw, n: int) -> ScalingPair:
    """(a_n, b_n) with V_n / b_n -> X_1, log E exp(-lam X_1) = lam^alpha."""
    if law.finite_support or law.family == "geometric":
        if abs(law.mean - 1) > 1e-12:
            raise UnsupportedLaw("scaling sequences need a critical law")
        b = np.sqrt(law.variance * n / 2.0)
    elif law.family == "stable-tail":
        a = law.alpha
        if a >= 2:
            raise UnsupportedLaw("alpha=2 power tail needs a slowly varying correction")
        b = (law.tail_const * gamma(-a) * n) ** (1.0 / a)
    else:
        raise UnsupportedLaw(f"no explicit scaling for family {law.family!r}")
    return ScalingPair(int(n), float(n / b), float(b))


def sigma_nu_sq(law: OffspringLaw) -> float:
    """(m(2) - m) / (m^2 - m) for a supercritical law."""
    m = law.mean
    if m <= 1:
        raise ValueError("sigma_nu^2 needs a supercritical law")
    return (law.m2 - m) / (m * m - m)
