"""Compiled kernels for lazily grown environments.

Every vertex carries a 64-bit key.  The number of children of an
off-spine vertex is read off a hash of its key, and the keys of its
children are hashes of (key, rank).  The environment is therefore a pure
function of its seed: the order in which walks materialize vertices has
no observable effect.

Arena arrays (one slot per materialized vertex):
    parent   int64   -1 for the spine bottom o(q)
    first    int64   index of the first child, -1 if not materialized
    nchild   int64   number of children
    height   int64   relative height with respect to the original point
    sdepth   int64   generations above the spine (0 on the spine)
    key      uint64
"""
import numpy as np
from numba import njit

# kernel status codes
OK = 0
NEED_SPACE = 1
HEIGHT_CAP = 2
TOP = 3

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT_COUNT = np.uint64(0xD1B54A32D192ED03)
_SALT_CHILD = np.uint64(0x8CB92BA72F3D8DD7)


@njit(cache=True)
def splitmix64(x):
    z = x + _GOLD
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def unit(x):
    """Map a 64-bit word to a double in [0, 1)."""
    return float(x >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def child_key(key, rank):
    return splitmix64(key ^ splitmix64(np.uint64(rank) * _SALT_CHILD + _GOLD))


@njit(cache=True)
def count_from_key(key, cdf):
    u = unit(splitmix64(key ^ _SALT_COUNT))
    k = np.searchsorted(cdf, u, side="right")
    if k >= cdf.shape[0]:
        k = cdf.shape[0] - 1
    return k


@njit(cache=True)
def expand(x, parent, first, nchild, height, sdepth, key, used, cdf, h_max):
    """Materialize the children of an off-spine vertex."""
    if first[x] >= 0:
        return OK
    k = nchild[x]
    if k == 0:
        first[x] = used[0]
        return OK
    if sdepth[x] >= h_max:
        return HEIGHT_CAP
    start = used[0]
    if start + k > parent.shape[0]:
        return NEED_SPACE
    for i in range(k):
        c = start + i
        ck = child_key(key[x], i)
        parent[c] = x
        first[c] = -1
        nchild[c] = count_from_key(ck, cdf)
        height[c] = height[x] + 1
        sdepth[c] = sdepth[x] + 1
        key[c] = ck
    first[x] = start
    used[0] = start + k
    return OK


@njit(cache=True)
def step(x, u, lam, parent, first, nchild, height, sdepth, key, used, cdf, h_max):
    """One lambda-biased step from x driven by the uniform u.

    Returns (status, y).  At the spine bottom the walk is reflected into a
    uniformly chosen child.
    """
    k = nchild[x]
    if parent[x] < 0:
        i = int(u * k)
        if i >= k:
            i = k - 1
        return TOP, first[x] + i
    w = u * (lam + k)
    if w < lam:
        return OK, parent[x]
    i = int(w - lam)
    if i >= k:
        i = k - 1
    st = expand(x, parent, first, nchild, height, sdepth, key, used, cdf, h_max)
    if st != OK:
        return st, x
    return OK, first[x] + i


@njit(cache=True)
def walk_kernel(x, t0, u, lam, path, stop_at_top,
                parent, first, nchild, height, sdepth, key, used, cdf, h_max):
    """Run steps t0..len(u)-1, writing X_{t+1} into path[t+1].

    Returns (status, t, x, touched): t is the number of completed steps.
    """
    touched = False
    t = t0
    n = u.shape[0]
    while t < n:
        st, y = step(x, u[t], lam, parent, first, nchild, height, sdepth, key, used, cdf, h_max)
        if st == NEED_SPACE or st == HEIGHT_CAP:
            return st, t, x, touched
        if st == TOP:
            touched = True
            if stop_at_top:
                return TOP, t, x, touched
        x = y
        t += 1
        path[t] = x
    return OK, t, x, touched


@njit(cache=True)
def visit_kernel(x0, target, stop_vertex, h_stop, u, lam,
                 parent, first, nchild, height, sdepth, key, used, cdf, h_max):
    """Walk from x0 counting visits to target (time 0 included).

    The walk is absorbed at stop_vertex (if >= 0) or on reaching the spine
    vertex of height h_stop.  Returns (status, visits, steps, absorbed).
    """
    x = x0
    visits = 1 if x0 == target else 0
    for t in range(u.shape[0]):
        st, y = step(x, u[t], lam, parent, first, nchild, height, sdepth, key, used, cdf, h_max)
        if st != OK:
            return st, visits, t, False
        x = y
        if x == stop_vertex or (sdepth[x] == 0 and height[x] <= h_stop):
            return OK, visits, t + 1, True
        if x == target:
            visits += 1
    return OK, visits, u.shape[0], False


@njit(cache=True)
def brw_kernel(gparent, l0, u, lam, Y, parent, first, nchild, height, sdepth, key, used, cdf, h_max):
    """Branching walk along a genealogy in depth-first order.

    Y[0] must hold the origin.  Returns (status, l, touched).
    """
    n = gparent.shape[0]
    touched = False
    l = l0
    while l < n:
        st, y = step(Y[gparent[l]], u[l], lam, parent, first, nchild, height, sdepth, key, used, cdf, h_max)
        if st == NEED_SPACE or st == HEIGHT_CAP:
            return st, l, touched
        if st == TOP:
            touched = True
        Y[l] = y
        l += 1
    return OK, l, touched


@njit(cache=True)
def _cone_key(key, d, cdf):
    """Number of descendants at depth d below a virtual off-spine vertex."""
    if d == 0:
        return 1
    stack_k = np.empty(64 * (d + 1), dtype=np.uint64)
    stack_d = np.empty(64 * (d + 1), dtype=np.int64)
    stack_k[0] = key
    stack_d[0] = d
    top = 1
    total = 0
    while top > 0:
        top -= 1
        kk = stack_k[top]
        dd = stack_d[top]
        c = count_from_key(kk, cdf)
        if dd == 1:
            total += c
            continue
        while top + c >= stack_k.shape[0]:
            stack_k = np.concatenate((stack_k, np.empty(stack_k.shape[0], dtype=np.uint64)))
            stack_d = np.concatenate((stack_d, np.empty(stack_d.shape[0], dtype=np.int64)))
        for i in range(c):
            stack_k[top] = child_key(kk, i)
            stack_d[top] = dd - 1
            top += 1
    return total


@njit(cache=True)
def cone_count(x, d, nchild, height, sdepth, key, spine_vertex, spine_rank, cdf):
    """Descendants of arena vertex x at depth d below it.

    Spine vertices continue through the spine child, whose count law
    differs from the hashed one; everything else is hashed.
    """
    total = 0
    while True:
        if d == 0:
            return total + 1
        k = nchild[x]
        p = -height[x]
        spine = sdepth[x] == 0 and p >= 1
        skip = spine_rank[p] if spine else -1
        for i in range(k):
            if i != skip:
                total += _cone_key(child_key(key[x], i), d - 1, cdf)
        if not spine:
            return total
        x = spine_vertex[p - 1]
        d -= 1


@njit(cache=True)
def euler_tour(parent_r, nodes_h):
    """Euler tour of a rooted tree given by parent pointers (root has -1).

    Returns (first occurrence index, tour heights).
    """
    n = parent_r.shape[0]
    cnt = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        if parent_r[v] >= 0:
            cnt[parent_r[v] + 1] += 1
    for v in range(n):
        cnt[v + 1] += cnt[v]
    kids = np.empty(max(n - 1, 1), dtype=np.int64)
    fill = cnt[:-1].copy()
    root = -1
    for v in range(n):
        p = parent_r[v]
        if p >= 0:
            kids[fill[p]] = v
            fill[p] += 1
        else:
            root = v
    firstocc = np.empty(n, dtype=np.int64)
    tour = np.empty(2 * n - 1, dtype=np.int64)
    ptr = cnt[:-1].copy()
    stack = np.empty(n, dtype=np.int64)
    stack[0] = root
    top = 1
    firstocc[root] = 0
    tour[0] = nodes_h[root]
    pos = 1
    while top > 0:
        v = stack[top - 1]
        if ptr[v] < cnt[v + 1]:
            c = kids[ptr[v]]
            ptr[v] += 1
            firstocc[c] = pos
            tour[pos] = nodes_h[c]
            pos += 1
            stack[top] = c
            top += 1
        else:
            top -= 1
            if top > 0:
                tour[pos] = nodes_h[stack[top - 1]]
                pos += 1
    return firstocc, tour
