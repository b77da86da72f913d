"""Finite ordered trees, Galton-Watson samplers and pointed environments.

A finite tree is stored as its children-count sequence in depth-first
(lexicographic) order.  Environments are bilateral trees truncated at a
spine of depth q: the spine vertices o(0)=o, ..., o(q) are built eagerly,
the GW subtrees hanging off the spine are grown on demand inside an arena
of integer handles (see ``_arena``).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from . import _arena
from .offspring import OffspringLaw

__all__ = [
    "OrderedTree",
    "Forest",
    "PointedEnvironment",
    "PointedTree",
    "CapExceeded",
    "ImpossibleSize",
    "EnvironmentTooSmall",
    "sample_gw",
    "sample_gw_conditioned_size",
    "sample_gw_conditioned_atleast",
    "sample_forest",
    "sample_environment",
    "truncate",
    "recenter",
    "mrca",
    "CEMETERY",
]


class CapExceeded(RuntimeError):
    """A GW sample grew past its vertex cap."""


class ImpossibleSize(ValueError):
    """The requested tree size has probability zero."""


class EnvironmentTooSmall(RuntimeError):
    """A spine or height budget was exhausted."""


class _Cemetery:
    def __repr__(self):
        return "CEMETERY"


CEMETERY = _Cemetery()


# ---------------------------------------------------------------- finite trees


@njit(cache=True)
def _decode(counts):
    n = counts.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    left = np.empty(n, dtype=np.int64)
    top = 0
    if counts[0] > 0:
        stack[0] = 0
        left[0] = counts[0]
        top = 1
    for l in range(1, n):
        if top == 0:
            return parent, depth, False
        p = stack[top - 1]
        parent[l] = p
        depth[l] = depth[p] + 1
        left[top - 1] -= 1
        if left[top - 1] == 0:
            top -= 1
        if counts[l] > 0:
            stack[top] = l
            left[top] = counts[l]
            top += 1
    return parent, depth, top == 0


@njit(cache=True)
def _subtree_sizes(parent):
    n = parent.shape[0]
    size = np.ones(n, dtype=np.int64)
    for l in range(n - 1, 0, -1):
        size[parent[l]] += size[l]
    return size


class OrderedTree:
    """Finite rooted ordered tree in depth-first layout.

    counts[l] is the number of children of u_l, the l-th vertex in
    lexicographic order.  Derived arrays are computed on first use.
    """

    def __init__(self, counts, check=True):
        counts = np.ascontiguousarray(counts, dtype=np.int64)
        if counts.ndim != 1 or len(counts) == 0:
            raise ValueError("a tree needs at least one vertex")
        counts.setflags(write=False)
        self.counts = counts
        if check:
            if np.any(counts < 0):
                raise ValueError("negative child count")
            par, dep, ok = _decode(counts)
            if not ok or counts.sum() != len(counts) - 1:
                raise ValueError("children counts do not describe a single tree")
            self.__dict__["_pd"] = (par, dep)

    @property
    def n(self) -> int:
        return len(self.counts)

    def __len__(self):
        return len(self.counts)

    @cached_property
    def _pd(self):
        par, dep, ok = _decode(self.counts)
        return par, dep

    @property
    def parent(self) -> np.ndarray:
        return self._pd[0]

    @property
    def depth(self) -> np.ndarray:
        return self._pd[1]

    @cached_property
    def size(self) -> np.ndarray:
        """Subtree sizes; the subtree of u_l is the block l .. l+size[l]-1."""
        return _subtree_sizes(self.parent)

    def children(self, l: int) -> np.ndarray:
        out = np.empty(self.counts[l], dtype=np.int64)
        c = l + 1
        for i in range(self.counts[l]):
            out[i] = c
            c += self.size[c]
        return out

    def height(self) -> int:
        return int(self.depth.max())

    def __eq__(self, other):
        return isinstance(other, OrderedTree) and np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash(self.counts.tobytes())

    def __repr__(self):
        s = self.to_text()
        return f"OrderedTree({s if len(s) < 60 else s[:57] + '...'})"

    def to_text(self) -> str:
        return ",".join(map(str, self.counts.tolist()))

    @classmethod
    def from_text(cls, text: str) -> "OrderedTree":
        return cls([int(t) for t in text.strip().split(",")])


@dataclass(frozen=True)
class Forest:
    trees: tuple

    @cached_property
    def sigma(self) -> np.ndarray:
        """sigma_k = total size of the first k trees, sigma_0 = 0."""
        return np.concatenate([[0], np.cumsum([t.n for t in self.trees])]).astype(np.int64)

    def __len__(self):
        return len(self.trees)


# ------------------------------------------------------------------ GW samplers


def sample_gw(law: OffspringLaw, rng: np.random.Generator, cap: int | None = None) -> OrderedTree:
    """Unconditioned GW tree, drawn in depth-first order.

    Raises CapExceeded once more than ``cap`` vertices would be needed.
    """
    counts = []
    total = 0
    level = 0  # current value of the Lukasiewicz path
    chunk = 64
    while True:
        k = law.sample(rng, chunk)
        path = level + np.cumsum(k - 1)
        hit = np.flatnonzero(path == -1)
        if len(hit):
            counts.append(k[: hit[0] + 1])
            total += hit[0] + 1
            if cap is not None and total > cap:
                raise CapExceeded(f"tree exceeded {cap} vertices")
            break
        counts.append(k)
        total += chunk
        level = int(path[-1])
        if cap is not None and total > cap:
            raise CapExceeded(f"tree exceeded {cap} vertices")
        chunk = min(2 * chunk, 1 << 20)
    return OrderedTree(np.concatenate(counts), check=False)


def size_possible(law: OffspringLaw, n: int) -> bool:
    """Whether P(#tau = n) > 0."""
    if n < 1:
        return False
    if law.table[0] == 0:
        return False
    target = n - 1
    if target == 0:
        return True
    if not law.finite_support:
        k0 = law.params["k0"]
        return target >= k0 or bool(law.table[1 : target + 1].any())
    coins = [k for k in np.flatnonzero(law.table > 0) if 1 <= k <= target]
    reach = np.zeros(target + 1, dtype=bool)
    reach[0] = True
    for c in coins:
        for s in range(c, target + 1):
            if reach[s - c]:
                reach[s] = True
    return bool(reach[target])


def _cyclic_shift(counts):
    """Rotate increments summing to -1 into a valid Lukasiewicz order."""
    s = np.cumsum(counts - 1)
    j = int(np.argmin(s))  # first index where the minimum is attained
    return np.roll(counts, -(j + 1))


def _conditioned_counts(law, n, rng):
    if law.family == "binary":
        k = np.zeros(n, dtype=np.int64)
        k[rng.choice(n, (n - 1) // 2, replace=False)] = 2
        return k
    if law.family == "geometric":
        # uniform weak composition of n-1 into n parts
        bars = np.sort(rng.choice(2 * n - 2, n - 1, replace=False)) if n > 1 else np.zeros(0, np.int64)
        edges = np.concatenate([[-1], bars, [2 * n - 2]])
        return (np.diff(edges) - 1).astype(np.int64)
    if law.finite_support:
        # multinomial type counts, accept when they sum to n-1
        support = np.arange(len(law.table))
        while True:
            nk = rng.multinomial(n, law.table)
            if int(np.dot(nk, support)) == n - 1:
                return rng.permutation(np.repeat(support, nk))
    # heavy tail: draw n-1 values, accept the forced last one
    pmax = float(law.table.max())
    while True:
        k = law.sample(rng, n - 1)
        last = n - 1 - int(k.sum())
        if last >= 0 and rng.random() * pmax < float(law.pmf(last)):
            return np.append(k, last)


def sample_gw_conditioned_size(law: OffspringLaw, n: int, rng: np.random.Generator) -> OrderedTree:
    """GW tree conditioned on n vertices (cycle lemma)."""
    if not size_possible(law, n):
        raise ImpossibleSize(f"P(#tau = {n}) = 0 under {law.family}")
    k = _conditioned_counts(law, n, rng)
    return OrderedTree(_cyclic_shift(k), check=False)


def sample_gw_conditioned_atleast(law: OffspringLaw, n: int, rng: np.random.Generator,
                                  max_tries: int = 10**7, cap: int | None = None) -> OrderedTree:
    """First tree of an i.i.d. GW sequence with at least n vertices.

    ``cap`` is handed to each draw, so CapExceeded may propagate.
    """
    for _ in range(max_tries):
        t = sample_gw(law, rng, cap=cap)
        if t.n >= n:
            return t
    raise RuntimeError("iteration budget exhausted")


def sample_forest(law: OffspringLaw, count: int, rng: np.random.Generator) -> Forest:
    return Forest(tuple(sample_gw(law, rng) for _ in range(count)))


# ------------------------------------------------------------- pointed trees


@dataclass(frozen=True, eq=False)
class PointedTree:
    """A finite tree with a distinguished vertex.

    Heights are relative to the point: ||u|| = depth(u) - depth(point).
    This is the output type of truncation.
    """

    tree: OrderedTree
    point: int

    def heights(self) -> np.ndarray:
        return self.tree.depth - self.tree.depth[self.point]

    def __eq__(self, other):
        return (isinstance(other, PointedTree) and self.point == other.point
                and self.tree == other.tree)

    def __hash__(self):
        return hash((self.tree, self.point))


def _truncate_pointed(pt: PointedTree, p: int, q: int):
    t = pt.tree
    h = pt.heights()
    if p > 0:
        return CEMETERY
    # ancestor of the point at relative height p
    a = pt.point
    while h[a] > p:
        a = t.parent[a]
        if a < 0:
            return CEMETERY
    lo, hi = a, a + t.size[a]
    keep = np.flatnonzero(h[lo:hi] <= q) + lo
    # children counts restricted to kept vertices
    counts = np.zeros(len(keep), dtype=np.int64)
    index = {int(v): i for i, v in enumerate(keep)}
    for i, v in enumerate(keep[1:], start=1):
        counts[index[int(t.parent[v])]] += 1
    return PointedTree(OrderedTree(counts), index[pt.point])


# ---------------------------------------------------------------- environments


class _Arena:
    """Growable vertex storage shared by all views of one environment."""

    def __init__(self, capacity):
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.first = np.full(capacity, -1, dtype=np.int64)
        self.nchild = np.zeros(capacity, dtype=np.int64)
        self.height = np.zeros(capacity, dtype=np.int64)
        self.sdepth = np.zeros(capacity, dtype=np.int64)
        self.key = np.zeros(capacity, dtype=np.uint64)
        self.used = np.zeros(1, dtype=np.int64)

    def grow(self):
        cap = len(self.parent)
        for name, fill in (("parent", -1), ("first", -1), ("nchild", 0),
                           ("height", 0), ("sdepth", 0), ("key", 0)):
            old = getattr(self, name)
            new = np.full(2 * cap, fill, dtype=old.dtype)
            new[:cap] = old
            setattr(self, name, new)

    def arrays(self):
        return self.parent, self.first, self.nchild, self.height, self.sdepth, self.key, self.used


class PointedEnvironment:
    """Truncated bilateral tree (T, o) with spine o(0), ..., o(q).

    Vertices are integer handles.  ``spine[p]`` is the handle of o(p) and
    ``spine_rank[p]`` (p >= 1) the rank of o(p-1) among the children of
    o(p).  Off-spine subtrees are GW(nu), grown lazily up to ``h_max``
    generations above the spine.  Views produced by ``recenter`` share
    the arena and differ only in the point.
    """

    def __init__(self, nu, q, h_max, mode, arena, spine, spine_rank, point, seed):
        self.nu = nu
        self.q = q
        self.h_max = h_max
        self.mode = mode
        self.arena = arena
        self.spine = spine
        self.spine_rank = spine_rank
        self.point = point
        self.seed = seed
        self.cdf = np.cumsum(nu.table)
        self.cdf[-1] = 1.0

    # -- navigation
    @property
    def o(self) -> int:
        return self.point

    def parent(self, x: int) -> int:
        return int(self.arena.parent[x])

    def nchild(self, x: int) -> int:
        return int(self.arena.nchild[x])

    def children(self, x: int) -> np.ndarray:
        self.expand(x)
        f = self.arena.first[x]
        return np.arange(f, f + self.arena.nchild[x], dtype=np.int64)

    def rel_height(self, x):
        """||x|| relative to the current point."""
        return self.arena.height[x] - self.arena.height[self.point]

    def is_spine(self, x: int) -> bool:
        return bool(self.arena.sdepth[x] == 0)

    @property
    def size(self) -> int:
        return int(self.arena.used[0])

    def expand(self, x: int):
        while True:
            st = _arena.expand(x, *self.arena.arrays(), self.cdf, self.h_max)
            if st == _arena.OK:
                return
            if st == _arena.HEIGHT_CAP:
                raise EnvironmentTooSmall(f"vertex {x} sits at the height cap {self.h_max}")
            self.arena.grow()

    def materialize(self, x: int, depth: int):
        """Expand every descendant of x up to ``depth`` generations below."""
        layer = [x]
        for _ in range(depth):
            nxt = []
            for v in layer:
                nxt.extend(self.children(v).tolist())
            layer = nxt
        return layer

    def view(self, point: int) -> "PointedEnvironment":
        return PointedEnvironment(self.nu, self.q, self.h_max, self.mode, self.arena,
                                  self.spine, self.spine_rank, int(point), self.seed)

    def ancestors(self, x: int) -> list:
        out = [int(x)]
        while self.arena.parent[out[-1]] >= 0:
            out.append(int(self.arena.parent[out[-1]]))
        return out

    def spine_records(self):
        """(position, count) of o(p-1) inside o(p), for p = 1..q."""
        return [(int(self.spine_rank[p]) + 1, int(self.arena.nchild[self.spine[p]]))
                for p in range(1, self.q + 1)]

    def to_text(self, depth: int) -> str:
        """Spine records, then one subtree block per off-spine child.

        Blocks are cut ``depth`` generations above the spine; cut vertices
        are written as leaves.
        """
        lines = [f"q={self.q};root={int(self.arena.nchild[self.spine[0]])};spine="
                 + ";".join(f"{j},{k}" for j, k in self.spine_records())]
        for p in range(self.q + 1):
            v = int(self.spine[p])
            skip = int(self.spine_rank[p]) if p >= 1 else -1
            for i, c in enumerate(self.children(v).tolist()):
                if i != skip:
                    lines.append(self._block(c, depth - 1).to_text())
        return "\n".join(lines)

    def _block(self, x, depth):
        counts = []
        stack = [(x, depth)]
        while stack:
            v, d = stack.pop()
            if d <= 0:
                counts.append(0)
                continue
            ch = self.children(v).tolist()
            counts.append(len(ch))
            stack.extend((c, d - 1) for c in reversed(ch))
        return OrderedTree(counts, check=False)


def _spine_pairs(nu, q, rng):
    ks = np.arange(len(nu.table))
    w = ks * nu.table / nu.mean
    k = rng.choice(ks, size=q, p=w / w.sum())
    j = np.floor(rng.random(q) * k).astype(np.int64)  # rank in 0..k-1
    return k.astype(np.int64), np.minimum(j, k - 1)


def sample_environment(nu: OffspringLaw, q: int, h_max: int, mode: str = "invariant",
                       rng=None, seed: int | None = None, capacity: int = 1 << 14) -> PointedEnvironment:
    """Infinite or invariant GW(nu) environment truncated at spine depth q.

    The spine pairs are i.i.d. with law nu(k)/m on {(j,k): 1 <= j <= k}.
    In invariant mode the root degree is reweighted by (m + k)/(2m).
    The hash seed for the off-spine subtrees is drawn from ``rng``.
    """
    if q < 0:
        raise ValueError("q must be nonnegative")
    if mode not in ("invariant", "infinite-GW"):
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    m = nu.mean
    ks = np.arange(len(nu.table))
    w_root = nu.table * ((m + ks) / (2 * m) if mode == "invariant" else 1.0)
    k_root = int(rng.choice(ks, p=w_root / w_root.sum()))
    k_sp, j_sp = _spine_pairs(nu, q, rng)
    base = np.uint64(rng.integers(0, 2**63, dtype=np.int64))
    cdf = np.cumsum(nu.table)
    cdf[-1] = 1.0

    total = 1 + int(k_sp.sum())
    arena = _Arena(max(capacity, 2 * total + 16))
    spine = np.empty(q + 1, dtype=np.int64)
    spine_rank = np.full(q + 1, -1, dtype=np.int64)
    nchild = np.concatenate([[k_root], k_sp])  # nchild of o(p)
    # o(q) at handle 0, blocks laid out top-down
    arena.parent[0] = -1
    arena.nchild[0] = nchild[q]
    arena.height[0] = -q
    arena.key[0] = np.uint64(_arena.splitmix64(base ^ np.uint64(q)))
    spine[q] = 0
    used = 1
    for p in range(q, 0, -1):
        x = spine[p]
        k = int(nchild[p])
        arena.first[x] = used
        for i in range(k):
            c = used + i
            arena.parent[c] = x
            arena.height[c] = arena.height[x] + 1
            if i == j_sp[p - 1]:
                arena.sdepth[c] = 0
                arena.nchild[c] = nchild[p - 1]
                arena.key[c] = np.uint64(_arena.splitmix64(base ^ np.uint64(p - 1)))
                spine[p - 1] = c
            else:
                ck = np.uint64(_arena.child_key(arena.key[x], np.uint64(i)))
                arena.sdepth[c] = 1
                arena.nchild[c] = _arena.count_from_key(ck, cdf)
                arena.key[c] = ck
        spine_rank[p] = j_sp[p - 1]
        used += k
    arena.used[0] = used
    return PointedEnvironment(nu, q, h_max, mode, arena, spine, spine_rank, int(spine[0]),
                              int(base))


def _env_window(env: PointedEnvironment, p: int, q: int) -> PointedTree:
    """Materialize descendants of the point's ancestor at height p, up to height q."""
    a = env.point
    while env.rel_height(a) > p:
        a = env.parent(a)
        if a < 0:
            raise EnvironmentTooSmall("window reaches below the spine bottom")
    counts = []
    order = {}
    stack = [a]
    while stack:
        v = stack.pop()
        order[v] = len(order)
        if env.rel_height(v) >= q:
            counts.append(0)
            continue
        try:
            ch = env.children(v).tolist()
        except EnvironmentTooSmall:
            raise EnvironmentTooSmall("window exceeds the height cap") from None
        counts.append(len(ch))
        stack.extend(reversed(ch))
    return PointedTree(OrderedTree(counts, check=False), order[env.point])


def truncate(obj, p: int, q: int):
    """(p, q)-truncation: descendants of the ancestor at height p, cut at height q.

    Accepts a PointedEnvironment or a PointedTree and returns a PointedTree,
    or CEMETERY when p > 0 (the point has no ancestor at that height).
    """
    if p >= q:
        raise ValueError("truncation needs p < q")
    if obj is CEMETERY or p > 0:
        return CEMETERY
    if isinstance(obj, PointedEnvironment):
        return _env_window(obj, p, q)
    return _truncate_pointed(obj, p, q)


def recenter(obj, x: int):
    """Move the point to x; relative heights shift by -||x||."""
    if isinstance(obj, PointedEnvironment):
        return obj.view(x)
    return PointedTree(obj.tree, int(x))


def mrca(env, x: int, y: int) -> int:
    """Most recent common ancestor of two materialized vertices."""
    if isinstance(env, PointedTree):
        par, h = env.tree.parent, env.tree.depth
    else:
        par, h = env.arena.parent, env.arena.height
    x, y = int(x), int(y)
    while h[x] > h[y]:
        x = int(par[x])
    while h[y] > h[x]:
        y = int(par[y])
    while x != y:
        x, y = int(par[x]), int(par[y])
        if x < 0 or y < 0:
            raise EnvironmentTooSmall("common ancestor lies below the spine bottom")
    return x
