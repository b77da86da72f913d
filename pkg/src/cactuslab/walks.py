"""Lambda-biased random walks on trees and the gambler's-ruin formulas.

From a vertex x with k_x children the walk moves to the parent with
probability lam/(lam + k_x) and to each child with probability
1/(lam + k_x).  At the bottom o(q) of a truncated spine there is no
parent; the walk is reflected into a uniform child and the event is
recorded, so that runs touching the truncation can be discarded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import _arena
from .trees import EnvironmentTooSmall, OrderedTree, PointedEnvironment, PointedTree, mrca

__all__ = [
    "WalkPath",
    "TopologyError",
    "biased_step",
    "run_walk",
    "hitting_prob_formula",
    "hitting_prob_exact",
    "green_formula",
    "return_prob_formula",
    "count_visits",
]


class TopologyError(ValueError):
    """Harmonic system is singular or the vertices are not ancestral."""


@dataclass
class WalkPath:
    env: PointedEnvironment
    vertices: np.ndarray
    lam: float
    touched_top: bool
    exhausted: bool  # stopped early at the height cap

    @property
    def heights(self) -> np.ndarray:
        return self.env.rel_height(self.vertices)

    def csv_rows(self):
        return [(i, int(v), int(h)) for i, (v, h) in enumerate(zip(self.vertices, self.heights))]


def _call(env, kernel, *args):
    """Run a kernel, growing the arena whenever it runs out of room."""
    while True:
        out = kernel(*args, *env.arena.arrays(), env.cdf, env.h_max)
        if out[0] != _arena.NEED_SPACE:
            return out
        env.arena.grow()


def biased_step(env: PointedEnvironment, x: int, lam: float, rng: np.random.Generator) -> int:
    """One step of the walk; raises EnvironmentTooSmall at the height cap."""
    st, y = _call(env, _arena.step, int(x), rng.random(), float(lam))
    if st == _arena.HEIGHT_CAP:
        raise EnvironmentTooSmall("height cap reached")
    return int(y)


def run_walk(env: PointedEnvironment, x0: int, lam: float, steps: int, rng=None,
             uniforms=None) -> WalkPath:
    """Walk of ``steps`` steps from x0, driven by rng or by given uniforms."""
    u = rng.random(steps) if uniforms is None else np.asarray(uniforms, dtype=float)
    path = np.empty(len(u) + 1, dtype=np.int64)
    path[0] = x0
    x, t, touched = int(x0), 0, False
    while True:
        st, t, x, tch = _arena.walk_kernel(x, t, u, float(lam), path, False,
                                            *env.arena.arrays(), env.cdf, env.h_max)
        touched |= tch
        if st == _arena.NEED_SPACE:
            env.arena.grow()
            continue
        return WalkPath(env, path[: t + 1], float(lam), touched, st == _arena.HEIGHT_CAP)


def count_visits(env: PointedEnvironment, x0: int, target: int, lam: float, uniforms,
                 stop_vertex: int = -1, stop_depth: int | None = None):
    """Visits of the walk from x0 to target until absorption.

    Absorption happens at stop_vertex or when the walk reaches the spine
    ``stop_depth`` levels below the target.  Returns (visits, steps,
    status) with status "absorbed", "horizon", "top" or "height-cap".
    """
    h_stop = (env.arena.height[target] - stop_depth) if stop_depth is not None else -(1 << 60)
    st, visits, steps, absorbed = _call(env, _arena.visit_kernel, int(x0), int(target),
                                        int(stop_vertex), int(h_stop), uniforms, float(lam))
    if st == _arena.TOP:
        status = "top"
    elif st == _arena.HEIGHT_CAP:
        status = "height-cap"
    else:
        status = "absorbed" if absorbed else "horizon"
    return int(visits), int(steps), status


# ------------------------------------------------------------------ formulas


def _geometry(env):
    if isinstance(env, PointedEnvironment):
        return env.rel_height, lambda x: int(env.arena.nchild[x])
    if isinstance(env, OrderedTree):
        env = PointedTree(env, 0)
    h = env.heights()
    return (lambda x: h[x]), (lambda x: int(env.tree.counts[x]))


def _is_ancestor(env, z, y):
    return mrca(env if not isinstance(env, OrderedTree) else PointedTree(env, 0), z, y) == z


def hitting_prob_formula(env, x: int, y: int, z: int, lam: float) -> float:
    """P_x(H_y < H_z) = (lam^{||x^y||} - lam^{||z||})_+ / (lam^{||y||} - lam^{||z||})."""
    if lam <= 1:
        raise ValueError("formula needs lam > 1")
    if y == z or not _is_ancestor(env, z, y):
        raise TopologyError("z must be a strict ancestor of y")
    h, _ = _geometry(env)
    tree = env if not isinstance(env, OrderedTree) else PointedTree(env, 0)
    a = h(mrca(tree, x, y))
    hz, hy = h(z), h(y)
    # factor out lam^{||z||} to stay in range
    num = max(lam ** float(a - hz) - 1.0, 0.0)
    return num / (lam ** float(hy - hz) - 1.0)


def hitting_prob_exact(tree, x: int, y: int, z: int, lam: float, return_residual=False):
    """Solve the harmonic system h(y) = 1, h(z) = 0, h = P h on the subtree of z.

    ``tree`` is a finite OrderedTree or PointedTree.
    """
    if isinstance(tree, PointedTree):
        tree = tree.tree
    if y == z or not _is_ancestor(tree, z, y):
        raise TopologyError("z must be a strict ancestor of y")
    if not _is_ancestor(tree, z, x) and x != z:
        # leaving the subtree of z requires passing through z
        return (0.0, 0.0) if return_residual else 0.0
    if x == y:
        return (1.0, 0.0) if return_residual else 1.0
    lo, hi = z, z + int(tree.size[z])
    idx = np.arange(lo, hi)
    n = hi - lo
    par = tree.parent[idx] - lo
    k = tree.counts[idx].astype(float)
    free = (idx != y) & (idx != z)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.ones(n)]
    # h(v) - sum_w p(v,w) h(w) = 0 at free vertices
    fv = np.flatnonzero(free)
    rows.append(fv)
    cols.append(par[fv])
    vals.append(-lam / (lam + k[fv]))
    ch = np.flatnonzero(idx != lo)
    ch = ch[free[par[ch]]]
    rows.append(par[ch])
    cols.append(ch)
    vals.append(-1.0 / (lam + k[par[ch]]))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    b = np.zeros(n)
    b[y - lo] = 1.0
    with np.errstate(all="raise"):
        try:
            sol = spsolve(A.tocsc(), b)
        except (RuntimeError, FloatingPointError) as exc:
            raise TopologyError(str(exc)) from None
    if not np.all(np.isfinite(sol)):
        raise TopologyError("singular harmonic system")
    res = float(np.abs(A @ sol - b).max())
    val = float(sol[x - lo])
    return (val, res) if return_residual else val


def green_formula(env, x: int, y: int, lam: float) -> float:
    """G(x, y) = (lam + k_y)/(lam - 1) * lam^{-(||y|| - ||x^y||)}."""
    if lam <= 1:
        raise ValueError("formula needs lam > 1")
    h, k = _geometry(env)
    tree = env if not isinstance(env, OrderedTree) else PointedTree(env, 0)
    a = h(mrca(tree, x, y))
    return (lam + k(y)) / (lam - 1.0) * lam ** (-float(h(y) - a))


def return_prob_formula(env, x: int, lam: float) -> float:
    """P_x(H_x^+ < inf) = (1 + k_x)/(lam + k_x)."""
    if lam <= 1:
        raise ValueError("formula needs lam > 1")
    _, k = _geometry(env)
    return (1.0 + k(x)) / (lam + k(x))


def visits_before_parent_formula(env, x: int, y: int, lam: float) -> float:
    """E_x[visits to y before hitting parent(x)] = (lam + k_y) lam^{-(||y|| - ||x|| + 1)}."""
    h, k = _geometry(env)
    return (lam + k(y)) * lam ** (-float(h(y) - h(x) + 1))
