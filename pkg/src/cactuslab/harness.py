"""Named experiments, deterministic replica-parallel execution and reports.

Every replica draws from its own Philox stream indexed by
(seed, stream, size, environment, replica), environments are pure
functions of their seed, and block results are reduced in replica order.
Reports are therefore byte-identical for any worker count.
"""
from __future__ import annotations

import csv
import json
import multiprocessing as mp
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .coding import contour, contour_vertices, height_process
from .harmonic import HarmonicWeights, phi2_average
from .limits import (
    cactus_two_point, sample_brownian_snake_endpoint, sample_cactus_two_point_law, sample_height_limit,
)
from .metrics import cactus_discrepancy, range_pseudometric, snake_pseudometric_at
from .offspring import law_from_config, pgf, scaling_sequences, sigma_nu_sq, tree_size_pgf
from .rng import replica_rng
from .snakes import sample_brw
from .stats import AD_CRIT_1PCT, ks_statistic, mean_se, normality_test
from .trees import EnvironmentTooSmall, sample_environment, sample_gw_conditioned_size, size_possible
from .walks import count_visits, green_formula, return_prob_formula, run_walk

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "Verdict",
    "EXPERIMENTS",
    "default_config",
    "run_experiment",
    "run_blocks",
    "ladder_dp",
    "ladder_closed_form",
    "exp_height_convergence",
    "exp_snake_convergence",
    "exp_ghp_convergence",
    "exp_ladder_identity",
    "exp_clt_harmonic",
    "exp_green_return",
    "exp_sigma_ergodic",
    "exp_discrepancy_bound",
]

# stream identifiers for replica_rng
_ENV, _TREE, _LIMIT, _WALK, _TREND, _EXACT = 0, 1, 2, 3, 4, 5

_BINARY = {"family": "binary"}
_NU = {"family": "finite", "pmf": [0.0, 0.5, 0.5]}


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's output.

    ``out`` and ``workers`` only affect where and how fast the run
    happens; they are left out of the serialized report.
    """

    name: str
    mu: dict = field(default_factory=lambda: dict(_BINARY))
    nu: dict = field(default_factory=lambda: dict(_NU))
    n: list = field(default_factory=lambda: [1001])
    replicas: int = 200
    grid: int = 512
    seed: int = 0
    lam: float | None = None
    out: str | None = None
    workers: int = 1
    environments: int = 1
    params: dict = field(default_factory=dict)

    def to_dict(self, portable: bool = True) -> dict:
        d = asdict(self)
        if portable:
            d.pop("out")
            d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        name = _canonical(d.pop("name"))
        base = default_config(name)
        known = set(base.__dataclass_fields__)
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown config keys {sorted(bad)}")
        params = {**base.params, **d.pop("params", {})}
        for k, v in d.items():
            setattr(base, k, v)
        base.params = params
        base.n = [int(x) for x in np.atleast_1d(base.n)]
        return base

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def param(self, key):
        return self.params[key]


@dataclass
class Verdict:
    name: str
    statistic: float
    threshold: float
    sample_size: int
    status: str  # pass | fail | underpowered | info
    kind: str = "statistical"  # or "contamination"
    rule: str = "statistic < threshold"


@dataclass
class ExperimentReport:
    name: str
    config: dict
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    verdicts: list = field(default_factory=list)
    contamination: dict = field(default_factory=dict)  # name -> [bad, total]
    wall_clock: float = 0.0

    def add(self, name, statistic, threshold, size, rule="statistic < threshold",
            underpowered=False, kind="statistical", ok=None, gate=True):
        """Record a verdict; ``gate=False`` reports it without affecting the exit code."""
        if ok is None:
            ok = statistic < threshold
        status = "underpowered" if underpowered else ("pass" if ok else "fail")
        if not gate and status != "underpowered":
            status = "info"
        v = Verdict(name, float(statistic), float(threshold), int(size), status, kind, rule)
        self.verdicts.append(v)
        return v

    def add_contamination(self, name, bad, total, limit=0.01):
        self.contamination[name] = [int(bad), int(total)]
        frac = bad / total if total else 0.0
        return self.add(f"contamination:{name}", frac, limit, total,
                        rule="fraction <= threshold", kind="contamination", ok=frac <= limit)

    def verdict(self, name) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(v.status != "fail" for v in self.verdicts)

    @property
    def exit_code(self) -> int:
        if any(v.status == "fail" and v.kind == "contamination" for v in self.verdicts):
            return 3
        if any(v.status == "fail" for v in self.verdicts):
            return 2
        return 0

    def summary(self) -> dict:
        """Verdict summary; wall-clock is kept out so summaries compare byte-for-byte."""
        return {
            "experiment": self.name,
            "config": self.config,
            "verdicts": [asdict(v) for v in self.verdicts],
            "contamination": self.contamination,
            "exit_code": self.exit_code,
        }

    def lines(self):
        for v in self.verdicts:
            yield (f"{v.status.upper():12s} {v.name}: {v.statistic:.6g} "
                   f"({v.rule}, threshold {v.threshold:.6g}, sample size {v.sample_size})")

    def write(self, out_dir) -> list:
        """One CSV per table, report.json, and timing.json for the wall-clock."""
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for tname, (header, rows) in self.tables.items():
            p = os.path.join(out_dir, f"{tname}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(_plain(r) for r in rows)
            paths.append(p)
        p = os.path.join(out_dir, "report.json")
        with open(p, "w") as fh:
            json.dump(self.summary(), fh, indent=1, sort_keys=True, default=_json_default)
            fh.write("\n")
        paths.append(p)
        with open(os.path.join(out_dir, "timing.json"), "w") as fh:
            json.dump({"wall_clock_s": self.wall_clock}, fh)
        return paths


def _plain(row):
    return [x.item() if isinstance(x, np.generic) else x for x in row]


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# ----------------------------------------------------------------- execution


def run_blocks(fn, tasks, workers: int = 1) -> list:
    """Map fn over tasks, keeping task order; processes when workers > 1."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    # fork keeps scripts without a __main__ guard working; no kernel here uses threads
    ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks)), mp_context=ctx) as ex:
        return list(ex.map(fn, tasks))


def _blocks(total, size):
    size = max(1, int(size))
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


def _env_seed(seed, e) -> int:
    return int(replica_rng(seed, _ENV, e).integers(0, 2**62))


@lru_cache(maxsize=4)
def _environment_cached(nu_json, q, h_max, mode, env_seed, n_U):
    nu = law_from_config(json.loads(nu_json))
    env = sample_environment(nu, q, h_max, mode, seed=env_seed)
    return env, HarmonicWeights(env, n_U)


def _environment(c, e):
    p = c["params"]
    return _environment_cached(json.dumps(c["nu"], sort_keys=True), int(p["q"]), int(p["h_max"]),
                               p.get("mode", "invariant"), _env_seed(c["seed"], e),
                               int(p.get("n_U", 12)))


def _feasible_size(law, n) -> int:
    n = int(n)
    for k in range(n, n + 64):
        if size_possible(law, k):
            return k
    raise ValueError(f"no feasible tree size near {n}")


def _lam(c, nu):
    return float(c["lam"]) if c.get("lam") is not None else float(nu.mean)


def _pl_min(x, y, a, b):
    """Minimum over [a, b] of the piecewise-linear interpolant of (x, y)."""
    inner = y[(x > a) & (x < b)]
    ends = np.interp([a, b], x, y)
    return float(min(ends.min(), inner.min())) if inner.size else float(ends.min())


def _pl_dist(x, y, a, b):
    a, b = min(a, b), max(a, b)
    return float(np.interp(a, x, y) + np.interp(b, x, y) - 2.0 * _pl_min(x, y, a, b))


# ------------------------------------------------------------------- height


def _height_block(task):
    c, n, lo, hi = task
    mu = law_from_config(c["mu"])
    a_n = scaling_sequences(mu, n).a_n
    rows = []
    for r in range(lo, hi):
        rng = replica_rng(c["seed"], _TREE, n, r)
        t = sample_gw_conditioned_size(mu, n, rng)
        H = height_process(t)
        C = contour(t).astype(float)
        tc = np.arange(len(C), dtype=float)
        u1, u2 = rng.random(2)
        rows.append((r, float(t.depth.max()) / a_n, float(H(n / 2)) / a_n, C[n] / a_n,
                     _pl_dist(H.x, H.y, u1 * n, u2 * n) / a_n,
                     _pl_dist(tc, C, 2 * n * u1, 2 * n * u2) / a_n))
    return rows


def _height_limit_block(task):
    c, lo, hi = task
    mu = law_from_config(c["mu"])
    N = int(c["grid"])
    proxy_n = int(c["params"].get("proxy_n", 4 * max(c["n"])))
    rows = []
    for r in range(lo, hi):
        rng = replica_rng(c["seed"], _LIMIT, r)
        h = sample_height_limit(mu, N + 1, rng, proxy_n)
        x = np.linspace(0.0, 1.0, len(h))
        u1, u2 = rng.random(2)
        rows.append((r, float(h.max()), float(np.interp(0.5, x, h)), _pl_dist(x, h, u1, u2)))
    return rows


def exp_height_convergence(config: ExperimentConfig) -> ExperimentReport:
    """Rescaled height and contour of size-conditioned trees against the limit.

    Statistics per replica: the maximum, the value at time 1/2 and the
    tree distance between two uniform times.  For alpha < 2 the limit side
    is a larger-n proxy (self-consistency mode).
    """
    c = config.to_dict()
    rep = ExperimentReport("height_convergence", c)
    mu = law_from_config(c["mu"])
    p = c["params"]
    B = p.get("block", 100)
    lim = [row for blk in run_blocks(_height_limit_block, [(c, lo, hi) for lo, hi in _blocks(config.replicas, B)],
                                     config.workers) for row in blk]
    rep.tables["limit"] = (("replica", "max", "mid", "two_point"), lim)
    L = np.array(lim)[:, 1:]
    for n0 in config.n:
        n = _feasible_size(mu, n0)
        tasks = [(c, n, lo, hi) for lo, hi in _blocks(config.replicas, B)]
        rows = [row for blk in run_blocks(_height_block, tasks, config.workers) for row in blk]
        rep.tables[f"height_n{n}"] = (("replica", "max_h", "mid_h", "mid_c", "two_point_h", "two_point_c"), rows)
        X = np.array(rows)
        small = n < p["min_n"] or config.replicas < p["min_replicas"]
        R = config.replicas
        rep.add(f"n={n}:ks_max", ks_statistic(X[:, 1], L[:, 0]), p["thr_max"], R, underpowered=small)
        rep.add(f"n={n}:ks_mid", ks_statistic(X[:, 2], L[:, 1]), p["thr_mid"], R, underpowered=small, gate=False)
        rep.add(f"n={n}:ks_two_point", ks_statistic(X[:, 4], L[:, 2]), p["thr_two_point"], R, underpowered=small,
                gate=False)
        rep.add(f"n={n}:ks_contour_vs_height_mid", ks_statistic(X[:, 2], X[:, 3]), p["thr_mid"], R,
                underpowered=small, gate=False)
        rep.add(f"n={n}:ks_contour_vs_height_two_point", ks_statistic(X[:, 4], X[:, 5]),
                p["thr_two_point"], R, underpowered=small, gate=False)
        rep.add_contamination(f"n={n}", 0, R)
    return rep


# -------------------------------------------------------------------- snake


def _snake_limit_block(task):
    c, lo, hi = task
    mu = law_from_config(c["mu"])
    N = int(c["grid"])
    s = float(c["params"]["s"])
    j = int(round(s * N))
    rows = []
    for r in range(lo, hi):
        rng = replica_rng(c["seed"], _LIMIT, r)
        h = sample_height_limit(mu, N + 1, rng)
        sn = sample_brownian_snake_endpoint(h, rng)
        rows.append((r, float(sn.w[j])))
    return rows


def _brw_labels(c, n, e, r, stream=_TREE):
    """Sample (tree, brw) for one replica; None when the environment is too small."""
    mu = law_from_config(c["mu"])
    env, w = _environment(c, e)
    rng = replica_rng(c["seed"], stream, n, e, r)
    t = sample_gw_conditioned_size(mu, n, rng)
    try:
        b = sample_brw(env, t, _lam(c, env.nu), rng)
    except EnvironmentTooSmall:
        return env, w, t, None, rng
    return env, w, t, b, rng


def _snake_block(task):
    c, n, e, lo, hi, trend = task
    mu = law_from_config(c["mu"])
    a_n = scaling_sequences(mu, n).a_n
    p = c["params"]
    s, G = float(p["s"]), int(c["grid"])
    rows = []
    for r in range(lo, hi):
        env, w, t, b, _ = _brw_labels(c, n, e, r)
        sig = np.sqrt(sigma_nu_sq(env.nu))
        if b is None:
            rows.append((e, r, np.nan, np.nan, np.nan, 1))
            continue
        cv = np.concatenate([contour_vertices(t), [0, 0]])
        o = b.origin
        v = int(b.labels[cv[int(round(2 * n * s))]])
        h0 = env.arena.height[o]
        harm = (w.S(v) - w.S(o)) / (sig * np.sqrt(a_n))
        rel = sig * (env.arena.height[v] - h0) / np.sqrt(a_n)
        bad = int(b.touched_top or w.clipped(v))
        sup = np.nan
        if r < trend:
            k = np.rint(np.linspace(0, 2 * n, G + 1)).astype(np.int64)
            vs = b.labels[cv[k]]
            S = w.S(vs) - w.S(o)
            sup = float(np.abs(S / sig - sig * (env.arena.height[vs] - h0)).max() / np.sqrt(a_n))
            bad |= int(any(w.clipped(x) for x in vs))
        rows.append((e, r, float(harm), float(rel), sup, bad))
    return rows


def exp_snake_convergence(config: ExperimentConfig) -> ExperimentReport:
    """Quenched endpoint laws of the rescaled harmonic and height snakes.

    Harmonic labels are divided by sigma sqrt(a_n), relative heights are
    multiplied by sigma / sqrt(a_n); both are compared to the Brownian
    snake endpoint over the same lifetime limit at time s.
    """
    c = config.to_dict()
    rep = ExperimentReport("snake_convergence", c)
    mu = law_from_config(c["mu"])
    p = c["params"]
    B = p.get("block", 50)
    R = config.replicas
    lim = [row for blk in run_blocks(_snake_limit_block, [(c, lo, hi) for lo, hi in _blocks(R, B)],
                                     config.workers) for row in blk]
    rep.tables["limit"] = (("replica", "endpoint"), lim)
    Lw = np.array([x[1] for x in lim])
    medians = []
    for n0 in config.n:
        n = _feasible_size(mu, n0)
        tasks = [(c, n, e, lo, hi, int(p["trend_replicas"]))
                 for e in range(config.environments) for lo, hi in _blocks(R, B)]
        rows = [row for blk in run_blocks(_snake_block, tasks, config.workers) for row in blk]
        rep.tables[f"snake_n{n}"] = (("env", "replica", "harmonic", "relative_height", "sup_diff",
                                      "contaminated"), rows)
        X = np.array(rows, dtype=float)
        small = n < p["min_n"] or R < p["min_replicas"]
        for e in range(config.environments):
            Y = X[(X[:, 0] == e) & (X[:, 5] == 0)]
            rep.add(f"n={n}:env={e}:ks_harmonic", ks_statistic(Y[:, 2], Lw), p["thr"], len(Y), underpowered=small)
            rep.add(f"n={n}:env={e}:ks_relative_height", ks_statistic(Y[:, 3], Lw), p["thr"], len(Y),
                    underpowered=small)
            rep.add(f"n={n}:env={e}:ks_harmonic_vs_height", ks_statistic(Y[:, 2], Y[:, 3]), p["thr"], len(Y),
                    underpowered=small, gate=False)
            rep.add_contamination(f"n={n}:env={e}", int(X[X[:, 0] == e, 5].sum()), R)
        if p.get("annealed"):
            Y = X[X[:, 5] == 0]
            rep.add(f"n={n}:annealed:ks_harmonic", ks_statistic(Y[:, 2], Lw), p["thr"], len(Y), underpowered=small,
                    gate=False)
        sup = X[np.isfinite(X[:, 4]) & (X[:, 5] == 0), 4]
        if sup.size:
            medians.append((n, float(np.median(sup)), int(sup.size)))
    if medians:
        rep.tables["sup_diff_median"] = (("n", "median", "count"), medians)
    if len(medians) > 1:
        first, last = medians[0][1], medians[-1][1]
        rep.add("sup_diff_median_shrinks", last - first, 0.0, sum(m[2] for m in medians),
                rule="median(last n) - median(first n) < 0")
    return rep


# ---------------------------------------------------------------------- GHP


def _ghp_block(task):
    c, n, e, lo, hi = task
    mu = law_from_config(c["mu"])
    a_n = scaling_sequences(mu, n).a_n
    K = int(c["params"]["points"])
    rows = []
    for r in range(lo, hi):
        env, w, t, b, rng = _brw_labels(c, n, e, r)
        u = rng.random(2)
        if b is None:
            rows.append((e, r, np.nan, np.nan, np.nan, np.nan, 1))
            continue
        sig = np.sqrt(sigma_nu_sq(env.nu))
        times = np.concatenate([[0.0], 2 * n * u, np.linspace(0, 2 * n, K)])
        D = range_pseudometric(b, times).D * sig / np.sqrt(a_n)
        C = contour(t).astype(float)
        d_h = _pl_dist(np.arange(len(C), dtype=float), C, *(2 * n * u)) / a_n
        rows.append((e, r, float(D[1, 2]), float(D[0, 1]), float(D[3:, 3:].max()), d_h, int(b.touched_top)))
    return rows


def _cactus_limit_block(task):
    c, lo, hi = task
    mu = law_from_config(c["mu"])
    N, K = int(c["grid"]), int(c["params"]["points"])
    rows = []
    for r in range(lo, hi):
        rng = replica_rng(c["seed"], _LIMIT, r)
        h = sample_height_limit(mu, N + 1, rng)
        sn = sample_brownian_snake_endpoint(h, rng)
        u = rng.random(2)
        i, j = np.rint(u * N).astype(np.int64)
        grid = np.rint(np.linspace(0, N, K)).astype(np.int64)
        diam = float(snake_pseudometric_at(h, sn.w, grid).max())
        x = np.linspace(0.0, 1.0, N + 1)
        rows.append((r, cactus_two_point(h, sn.w, i, j, rng), cactus_two_point(h, sn.w, 0, i, rng), diam,
                     _pl_dist(x, h, *u)))
    return rows


def _trend_block(task):
    c, n, lo, hi = task
    mu = law_from_config(c["mu"])
    a_n = scaling_sequences(mu, n).a_n
    out = []
    for r in range(lo, hi):
        _, _, _, b, _ = _brw_labels(c, n, 0, r, _TREND)
        out.append((n, r, np.nan if b is None else 1.5 * cactus_discrepancy(b) / np.sqrt(a_n)))
    return out


def exp_ghp_convergence(config: ExperimentConfig) -> ExperimentReport:
    """Rescaled branching-walk range against the Brownian cactus.

    (a) median of (3/2) max|d_{C,W} - d_range| / sqrt(a_n) along n;
    (b) two-point, pointed and diameter statistics of the range (distances
    times sigma / sqrt(a_n)) against the cactus of the Brownian snake.
    """
    c = config.to_dict()
    rep = ExperimentReport("ghp_convergence", c)
    mu = law_from_config(c["mu"])
    p = c["params"]
    B = p.get("block", 50)
    R = config.replicas
    lim = [row for blk in run_blocks(_cactus_limit_block, [(c, lo, hi) for lo, hi in _blocks(R, B)],
                                     config.workers) for row in blk]
    rep.tables["limit"] = (("replica", "two_point", "to_root", "diameter", "tree_two_point"), lim)
    L = np.array(lim)[:, 1:]
    if not (mu.family == "stable-tail" and mu.alpha < 2):
        # audit of the limit side against the closed-form two-point law
        exact = sample_cactus_two_point_law(20 * R, replica_rng(c["seed"], _EXACT))
        rep.add("limit:ks_two_point_vs_closed_form", ks_statistic(L[:, 0], exact), p["thr_two_point"], R,
                gate=False)
    for n0 in config.n:
        n = _feasible_size(mu, n0)
        tasks = [(c, n, e, lo, hi) for e in range(config.environments) for lo, hi in _blocks(R, B)]
        rows = [row for blk in run_blocks(_ghp_block, tasks, config.workers) for row in blk]
        rep.tables[f"range_n{n}"] = (("env", "replica", "two_point", "to_root", "diameter", "tree_two_point",
                                      "contaminated"), rows)
        X = np.array(rows, dtype=float)
        small = n < p["min_n"] or R < p["min_replicas"]
        for e in range(config.environments):
            Y = X[(X[:, 0] == e) & (X[:, 6] == 0)]
            for j, name, thr, gate in ((2, "two_point", p["thr_two_point"], True),
                                       (3, "to_root", p["thr_two_point"], False),
                                       (4, "diameter", p["thr_two_point"], False),
                                       (5, "tree_two_point", p["thr_tree"], True)):
                rep.add(f"n={n}:env={e}:ks_{name}", ks_statistic(Y[:, j], L[:, j - 2]), thr, len(Y),
                        underpowered=small, gate=gate)
            rep.add_contamination(f"n={n}:env={e}", int(X[X[:, 0] == e, 6].sum()), R)
    T = int(p["trend_replicas"])
    if T > 0 and len(p["trend_n"]) > 1:
        med = []
        for n0 in p["trend_n"]:
            n = _feasible_size(mu, n0)
            rows = [row for blk in run_blocks(_trend_block, [(c, n, lo, hi) for lo, hi in _blocks(T, 10)],
                                              config.workers) for row in blk]
            d = np.array([x[2] for x in rows])
            rep.add_contamination(f"trend:n={n}", int(np.isnan(d).sum()), T)
            med.append((n, float(np.nanmedian(d)), T))
        rep.tables["discrepancy_median"] = (("n", "median", "replicas"), med)
        m = [x[1] for x in med]
        worst = max(b - a for a, b in zip(m[:-1], m[1:]))
        rep.add("discrepancy_median_decreasing", worst, 0.0, T * len(m),
                rule="max consecutive increase of the median < 0")
    return rep


# ------------------------------------------------------------------- ladder


def _law_vector(law, s, kmax):
    k = np.arange(kmax + 1)
    return law.pmf(k), np.power(float(s), k)


def ladder_dp(law, r: float, s: float, L_max: int) -> float:
    """1 - E[r^L s^V] over ladder epochs L <= L_max, by forward recursion.

    The walk has steps k - 1 with k ~ law; it lives on the negative
    integers until its first visit to [0, inf).  State j >= 1 stands for
    position -j.
    """
    kmax = min(len(law.table) - 1, 4096)
    pk, _ = _law_vector(law, 1.0, kmax)
    s = float(s)
    tail_extra = 1.0 - pk.sum() if s == 1.0 else 0.0

    def exit_weight(j):
        # sum_{c > j} p(c) s^(c - 1 - j): overshoot c - 1 - j >= 0 from -j
        c = np.arange(j + 1, kmax + 1)
        return float(np.dot(pk[j + 1:], s ** (c - 1 - j))) + tail_extra

    a = np.zeros(L_max + 2)
    a[0] = 1.0  # start at position 0 (state 0)
    total = 0.0
    for t in range(1, L_max + 1):
        total += r ** t * sum(a[j] * exit_weight(j) for j in range(t) if a[j])
        nxt = np.zeros_like(a)
        for j in range(t):
            if a[j]:
                cs = np.arange(0, min(j, kmax) + 1)
                nxt[j + 1 - cs] += a[j] * pk[cs]
        a = nxt
    return 1.0 - total


def ladder_closed_form(law, r: float, s: float) -> float:
    """(s - r g(s)) / (s - phi(r)), phi the total-progeny generating function.

    At s = phi(r) both terms vanish and the removable value 1 - r g'(s) is used.
    """
    phi = tree_size_pgf(law, r)
    if abs(s - phi) < 1e-9:
        k = np.arange(len(law.table))
        return 1.0 - r * float(np.dot(k[1:] * law.table[1:], float(s) ** (k[1:] - 1)))
    return (s - r * float(pgf(law, s))) / (s - phi)


def exp_ladder_identity(config: ExperimentConfig) -> ExperimentReport:
    c = config.to_dict()
    rep = ExperimentReport("ladder_identity", c)
    law = law_from_config(c["mu"])
    p = c["params"]
    rows = []
    for r in p["r"]:
        for s in p["s"]:
            dp = ladder_dp(law, r, s, int(p["L_max"]))
            cf = ladder_closed_form(law, r, s)
            rows.append((r, s, dp, cf, abs(dp - cf)))
    rep.tables["ladder"] = (("r", "s", "dp", "closed_form", "abs_diff"), rows)
    err = max(x[4] for x in rows)
    rep.add(f"max_abs_diff(L_max={p['L_max']})", err, p["tol"], len(rows))
    return rep


# ---------------------------------------------------------------------- CLT


def _clt_block(task):
    c, n, e, lo, hi = task
    env, w = _environment(c, e)
    p = c["params"]
    lam = _lam(c, env.nu)
    r_n, s_n = int(round(p["r"] * n)), int(round(p["s"] * n))
    rows = []
    for r in range(lo, hi):
        rng = replica_rng(c["seed"], _WALK, n, e, r)
        wk = run_walk(env, env.o, lam, r_n + s_n, rng)
        a, b = int(wk.vertices[r_n]), int(wk.vertices[-1])
        bad = int(wk.touched_top or wk.exhausted or w.clipped(a) or w.clipped(b))
        rows.append((e, r, float((w.S(b) - w.S(a)) / np.sqrt(n)), bad))
    return rows


def exp_clt_harmonic(config: ExperimentConfig) -> ExperimentReport:
    """(S_{X_{r+s n}} - S_{X_r}) / sqrt(n) against N(0, s sigma^2), per environment."""
    c = config.to_dict()
    rep = ExperimentReport("clt_harmonic", c)
    nu = law_from_config(c["nu"])
    p = c["params"]
    var = p["s"] * sigma_nu_sq(nu)
    R = config.replicas
    for n in config.n:
        tasks = [(c, n, e, lo, hi) for e in range(config.environments) for lo, hi in _blocks(R, p.get("block", 250))]
        rows = [row for blk in run_blocks(_clt_block, tasks, config.workers) for row in blk]
        rep.tables[f"clt_n{n}"] = (("env", "replica", "increment", "contaminated"), rows)
        X = np.array(rows, dtype=float)
        for e in range(config.environments):
            Y = X[(X[:, 0] == e) & (X[:, 3] == 0), 2]
            if var == 0:
                rep.add(f"n={n}:env={e}:max_abs", float(np.abs(Y).max()), 1e-12, len(Y),
                        rule="degenerate at 0")
            else:
                rep.add(f"n={n}:env={e}:anderson_darling", normality_test(Y, 0.0, var), p["crit"], len(Y),
                        underpowered=len(Y) < p["min_replicas"])
            rep.add_contamination(f"n={n}:env={e}", int(X[X[:, 0] == e, 3].sum()), R)
    return rep


# ------------------------------------------------------- walk identities (MC)


def _green_block(task):
    c, lo, hi = task
    env, _ = _environment(c, 0)
    p = c["params"]
    out = []
    for r in range(lo, hi):
        u = replica_rng(c["seed"], _WALK, r).random(int(p["horizon"]))
        v, _, status = count_visits(env, env.o, env.o, _lam(c, env.nu), u, stop_depth=int(p["stop_depth"]))
        out.append((r, v, int(status != "absorbed")))
    return out


def exp_green_return(config: ExperimentConfig) -> ExperimentReport:
    """Return probability and Green function at the point, walks absorbed deep on the spine.

    Absorption stop_depth levels down the spine biases the estimates by at
    most lam^-stop_depth; walks still running at the horizon are counted
    as contaminated.
    """
    c = config.to_dict()
    rep = ExperimentReport("green_return", c)
    p = c["params"]
    env, _ = _environment(c, 0)
    lam = _lam(c, env.nu)
    R = config.replicas
    rows = [row for blk in run_blocks(_green_block, [(c, lo, hi) for lo, hi in _blocks(R, p.get("block", 5000))],
                                      config.workers) for row in blk]
    rep.tables["visits"] = (("replica", "visits", "contaminated"), rows)
    X = np.array(rows, dtype=float)
    ok = X[X[:, 2] == 0, 1]
    ret, ret_se = mean_se(ok >= 2)
    G, G_se = mean_se(ok)
    ret_f = return_prob_formula(env, env.o, lam)
    G_f = green_formula(env, env.o, env.o, lam)
    rep.tables["estimates"] = (("quantity", "estimate", "se", "formula"),
                               [("return_probability", ret, ret_se, ret_f), ("green", G, G_se, G_f)])
    rep.add("return_probability:z", abs(ret - ret_f) / ret_se, 3.0, len(ok), rule="|est - formula| / se < 3")
    rep.add("green:z", abs(G - G_f) / G_se, 3.0, len(ok), rule="|est - formula| / se < 3")
    rep.add_contamination("horizon", int(X[:, 2].sum()), R, limit=p["contamination"])
    return rep


def _sigma_block(task):
    c, e = task
    env, w = _environment(c, e)
    wk = run_walk(env, env.o, _lam(c, env.nu), int(c["params"]["steps"]), replica_rng(c["seed"], _WALK, e))
    bad = int(wk.touched_top or wk.exhausted or
              bool(np.any(env.arena.sdepth[wk.vertices] + w.n_U > env.h_max)))
    return e, phi2_average(w, wk), bad


def exp_sigma_ergodic(config: ExperimentConfig) -> ExperimentReport:
    """Ergodic average of exact one-step conditional variances of S along the walk."""
    c = config.to_dict()
    rep = ExperimentReport("sigma_ergodic", c)
    nu = law_from_config(c["nu"])
    target = sigma_nu_sq(nu)
    rows = run_blocks(_sigma_block, [(c, e) for e in range(config.environments)], config.workers)
    rep.tables["sigma"] = (("env", "average", "contaminated"), rows)
    for e, avg, bad in rows:
        rep.add(f"env={e}:relative_error", abs(avg - target) / target, c["params"]["tol"],
                int(c["params"]["steps"]))
    rep.add_contamination("walks", sum(x[2] for x in rows), len(rows))
    return rep


def _disc_block(task):
    c, n, lo, hi = task
    out = []
    for r in range(lo, hi):
        _, _, _, b, _ = _brw_labels(c, n, 0, r)
        out.append((r, np.nan if b is None else cactus_discrepancy(b)))
    return out


def exp_discrepancy_bound(config: ExperimentConfig) -> ExperimentReport:
    """Frequency of {max |d_{C,W} - d_range| > 2 xi} with xi = 4 log_m n against m^2 n^3 m^-xi."""
    c = config.to_dict()
    rep = ExperimentReport("discrepancy_bound", c)
    mu, nu = law_from_config(c["mu"]), law_from_config(c["nu"])
    m = nu.mean
    R = config.replicas
    for n0 in config.n:
        n = _feasible_size(mu, n0)
        xi = 4.0 * np.log(n) / np.log(m)
        bound = m ** 2 * n ** 3 * m ** (-xi)
        rows = [row for blk in run_blocks(_disc_block, [(c, n, lo, hi) for lo, hi in _blocks(R, 25)],
                                          config.workers) for row in blk]
        rep.tables[f"discrepancy_n{n}"] = (("replica", "max_discrepancy"), rows)
        d = np.array([x[1] for x in rows])
        good = d[np.isfinite(d)]
        exceed = int((good > 2 * xi).sum())
        freq = exceed / max(len(good), 1)
        rep.add(f"n={n}:exceedance_frequency", freq, bound, len(good), rule="frequency <= bound", ok=freq <= bound)
        rep.add(f"n={n}:exceedances", exceed, 1, len(good), rule="count == 0")
        rep.add_contamination(f"n={n}", int((~np.isfinite(d)).sum()), R)
    return rep


# ----------------------------------------------------------------- registry


EXPERIMENTS = {
    "height_convergence": exp_height_convergence,
    "snake_convergence": exp_snake_convergence,
    "ghp_convergence": exp_ghp_convergence,
    "ladder_identity": exp_ladder_identity,
    "clt_harmonic": exp_clt_harmonic,
    "green_return": exp_green_return,
    "sigma_ergodic": exp_sigma_ergodic,
    "discrepancy_bound": exp_discrepancy_bound,
}

_ALIASES = {k.split("_")[0]: k for k in EXPERIMENTS}

_ENV_PARAMS = {"q": 500, "h_max": 600, "mode": "invariant", "n_U": 16}
_POWER = {"min_n": 100, "min_replicas": 50}

_DEFAULTS = {
    "height_convergence": dict(n=[10001], replicas=2000, grid=1 << 14,
                               params={"thr_max": 0.05, "thr_mid": 0.05, "thr_two_point": 0.05, **_POWER}),
    "snake_convergence": dict(n=[10001], replicas=1000, grid=4096, environments=5,
                              params={**_ENV_PARAMS, "thr": 0.07, "s": 0.5, "trend_replicas": 0, **_POWER}),
    "ghp_convergence": dict(n=[10001], replicas=1000, grid=4096, environments=1,
                            params={**_ENV_PARAMS, "points": 33, "thr_two_point": 0.08, "thr_tree": 0.05,
                                    "trend_n": [1001, 3001, 10001], "trend_replicas": 40, **_POWER}),
    "ladder_identity": dict(n=[], replicas=0,
                            params={"L_max": 40, "tol": 1e-6, "r": [round(0.1 * i, 1) for i in range(1, 10)],
                                    "s": [round(0.1 * i, 1) for i in range(1, 10)]}),
    "clt_harmonic": dict(n=[10000], replicas=5000, environments=3,
                         params={**_ENV_PARAMS, "q": 1500, "h_max": 1500, "s": 0.5, "r": 0.0,
                                 "crit": AD_CRIT_1PCT, "min_replicas": 50}),
    "green_return": dict(n=[], replicas=100000, lam=2.0,
                         params={**_ENV_PARAMS, "q": 60, "h_max": 200, "mode": "infinite-GW",
                                 "horizon": 1000, "stop_depth": 25, "contamination": 0.001}),
    "sigma_ergodic": dict(n=[], replicas=1, environments=1,
                          params={**_ENV_PARAMS, "q": 3000, "h_max": 2000, "steps": 100000, "tol": 0.05}),
    "discrepancy_bound": dict(n=[2001], replicas=500, params={**_ENV_PARAMS}),
}


def _canonical(name: str) -> str:
    name = name.replace("-", "_")
    if name in EXPERIMENTS:
        return name
    if name in _ALIASES:
        return _ALIASES[name]
    if name.startswith("exp_") and name[4:] in EXPERIMENTS:
        return name[4:]
    raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")


def default_config(name: str, **overrides) -> ExperimentConfig:
    """Desk-scale defaults for a named experiment, then keyword overrides.

    A ``params`` override is merged into the defaults.
    """
    name = _canonical(name)
    d = json.loads(json.dumps(_DEFAULTS[name]))
    params = {**d.pop("params"), **overrides.pop("params", {})}
    cfg = ExperimentConfig(name=name, params=params, **{**d, **overrides})
    cfg.n = [int(x) for x in np.atleast_1d(cfg.n)]
    return cfg


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentReport:
    t0 = time.perf_counter()
    rep = EXPERIMENTS[_canonical(config.name)](config)
    rep.wall_clock = time.perf_counter() - t0
    if write and config.out:
        rep.write(config.out)
    return rep
