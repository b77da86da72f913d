"""Tree-indexed biased walks and their discrete snakes.

A branching walk labels every vertex of a genealogy (an OrderedTree) by
an environment vertex; children move one biased step from their parent.
Real-valued labels (relative heights or harmonic coordinates) are then
read along the contour or height exploration of the genealogy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _arena
from .coding import PiecewiseLinear, contour_vertices, height_contour_timechange, height_process
from .harmonic import HarmonicWeights
from .trees import EnvironmentTooSmall, OrderedTree, PointedEnvironment

__all__ = [
    "BranchingWalk",
    "DiscreteSnake",
    "SnakeGrid",
    "sample_brw",
    "relative_height_labels",
    "harmonic_labels",
    "contour_snake",
    "height_snake",
    "rescale_snake",
    "forest_contour_snake",
]


@dataclass
class BranchingWalk:
    genealogy: OrderedTree
    env: PointedEnvironment
    labels: np.ndarray  # environment handle per genealogy vertex
    lam: float
    touched_top: bool

    @property
    def origin(self) -> int:
        return int(self.labels[0])


def sample_brw(env: PointedEnvironment, tree: OrderedTree, lam: float, rng=None,
               uniforms=None, origin: int | None = None) -> BranchingWalk:
    """Depth-first BRW: Y_root = origin, Y_u = one biased step from Y_parent(u).

    Raises EnvironmentTooSmall when a label would leave the height budget.
    """
    u = rng.random(tree.n) if uniforms is None else np.asarray(uniforms, dtype=float)
    Y = np.empty(tree.n, dtype=np.int64)
    Y[0] = env.point if origin is None else origin
    l, touched = 1, False
    while True:
        st, l, tch = _arena.brw_kernel(tree.parent, l, u, float(lam), Y,
                                       *env.arena.arrays(), env.cdf, env.h_max)
        touched |= tch
        if st == _arena.NEED_SPACE:
            env.arena.grow()
            continue
        if st == _arena.HEIGHT_CAP:
            raise EnvironmentTooSmall("branching walk reached the height cap")
        return BranchingWalk(tree, env, Y, float(lam), touched)


def relative_height_labels(brw: BranchingWalk) -> np.ndarray:
    """||Y_u|| relative to the origin."""
    h = brw.env.arena.height
    return (h[brw.labels] - h[brw.origin]).astype(float)


def harmonic_labels(brw: BranchingWalk, weights: HarmonicWeights) -> np.ndarray:
    """S_{Y_u} - S_{origin}."""
    s = weights.S(brw.labels)
    return s - s[0]


@dataclass(frozen=True)
class DiscreteSnake:
    """Lifetime and endpoint processes of a labelled tree.

    ``kind`` is "contour" (time in [0, 2n]) or "height" (time in [0, n]).
    Path values W_s(r) are answered through ancestor queries.
    """

    tree: OrderedTree
    labels: np.ndarray
    lifetime: PiecewiseLinear
    endpoint: PiecewiseLinear
    kind: str

    def _vertex_at(self, s):
        """Deepest vertex among the contour neighbours of time s."""
        if self.kind == "height":
            s = float(height_contour_timechange(self.tree)(s))
        cv = _padded_contour(self.tree)
        lo, hi = int(np.floor(s)), int(np.ceil(s))
        a, b = cv[min(lo, len(cv) - 1)], cv[min(hi, len(cv) - 1)]
        return a if self.tree.depth[a] >= self.tree.depth[b] else b

    def path(self, s, r):
        """W_s(r) for 0 <= r <= lifetime(s)."""
        if r > float(self.lifetime(s)) + 1e-12:
            raise ValueError("r exceeds the lifetime at s")
        v = self._vertex_at(s)
        anc = [v]
        while self.tree.parent[anc[-1]] >= 0:
            anc.append(int(self.tree.parent[anc[-1]]))
        anc = anc[::-1]
        return float(np.interp(r, np.arange(len(anc)), self.labels[anc]))


def _padded_contour(tree):
    cv = contour_vertices(tree)
    return np.concatenate([cv, [0, 0]])


def contour_snake(tree: OrderedTree, labels) -> DiscreteSnake:
    """Endpoint W_k = label of the k-th contour vertex, linear in between."""
    labels = np.asarray(labels, dtype=float)
    cv = _padded_contour(tree)
    t = np.arange(len(cv), dtype=float)
    return DiscreteSnake(tree, labels, PiecewiseLinear(t, tree.depth[cv].astype(float)),
                         PiecewiseLinear(t, labels[cv]), "contour")


def height_snake(tree: OrderedTree, labels) -> DiscreteSnake:
    """Endpoint W*_s = W_{phi(s)}: the contour snake read through phi."""
    cs = contour_snake(tree, labels)
    phi = height_contour_timechange(tree)
    # breakpoints: half-integers plus preimages of the integer contour times
    k = np.arange(2 * tree.n + 1, dtype=float)
    pre = np.interp(k, phi.y, phi.x)
    s = np.unique(np.concatenate([phi.x, pre]))
    return DiscreteSnake(tree, cs.labels, height_process(tree),
                         PiecewiseLinear(s, cs.endpoint(phi(s))), "height")


@dataclass(frozen=True)
class SnakeGrid:
    """Snake sampled on a uniform grid of [0, 1]."""

    s: np.ndarray
    h: np.ndarray
    w: np.ndarray

    def csv_rows(self):
        return list(zip(self.s.tolist(), self.h.tolist(), self.w.tolist()))


def rescale_snake(snake, n: int, a_n: float, factor: float, grid: int = 512) -> SnakeGrid:
    """Lifetime / a_n and endpoint * factor on a grid of ``grid`` + 1 points.

    Time runs over 2n (contour) or n (height).  A SnakeGrid input keeps its
    grid and only has its values rescaled.
    """
    if isinstance(snake, SnakeGrid):
        return SnakeGrid(snake.s, snake.h / a_n, snake.w * factor)
    s = np.linspace(0.0, 1.0, grid + 1)
    T = 2 * n if snake.kind == "contour" else n
    return SnakeGrid(s, snake.lifetime(T * s) / a_n, factor * snake.endpoint(T * s))


def forest_contour_snake(trees, labels_per_tree):
    """Concatenated contour lifetime/endpoint samples of a labelled forest.

    Tree k occupies contour times [2 sigma_k, 2 sigma_{k+1}]; the two
    padding steps bridge its root to the next root.
    """
    hs, ws = [], []
    for t, lab in zip(trees, labels_per_tree):
        cs = contour_snake(t, lab)
        hs.append(cs.lifetime.y[:-1])
        ws.append(cs.endpoint.y[:-1])
    last = labels_per_tree[-1][0] if len(trees) else 0.0
    return np.concatenate(hs + [[0.0]]), np.concatenate(ws + [[last]])
