"""Command line interface: ``cactus-lab <subcommand> [flags]``.

Sampling subcommands print CSV (default) or JSON to stdout or to --out.
``cactus-lab experiment NAME`` runs a named experiment, writes its tables
and report.json under --out, and exits with 0 (all verdicts pass),
2 (statistical failure) or 3 (contamination failure).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .harmonic import truncated_weights
from .harness import EXPERIMENTS, ExperimentConfig, default_config, run_experiment
from .limits import sample_brownian_snake_endpoint, sample_height_limit
from .metrics import range_pseudometric
from .offspring import law_from_config, scaling_sequences, sigma_nu_sq
from .snakes import contour_snake, harmonic_labels, relative_height_labels, rescale_snake, sample_brw
from .trees import sample_environment, sample_gw, sample_gw_conditioned_size
from .walks import run_walk


def parse_mu(text: str, alpha: float | None = None) -> dict:
    """'binary', 'geometric', 'stable[:alpha]', a comma pmf, or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    if text in ("binary", "geometric"):
        return {"family": text}
    if text.startswith("stable"):
        a = float(text.split(":", 1)[1]) if ":" in text else (alpha if alpha is not None else 1.5)
        return {"family": "stable-tail", "alpha": a}
    return {"family": "critical-finite", "pmf": [float(x) for x in text.split(",")]}


def parse_nu(text: str) -> dict:
    """A comma pmf, 'det:K', or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    if text.startswith("det:"):
        return {"family": "deterministic", "k": int(text[4:])}
    return {"family": "finite", "pmf": [float(x) for x in text.split(",")]}


def _emit(args, header, rows, extra=None):
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        if args.format == "json":
            doc = {"columns": list(header), "rows": [list(r) for r in rows], **(extra or {})}
            json.dump(doc, out, default=lambda x: x.item() if isinstance(x, np.generic) else x)
            out.write("\n")
        else:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()


def _env(args):
    nu = law_from_config(parse_nu(args.nu))
    return sample_environment(nu, args.spine_depth, args.height_cap, args.mode,
                              rng=np.random.default_rng([args.seed, 1]))


def _lam(args, env):
    return env.nu.mean if args.lam is None else args.lam


def cmd_sample_tree(args):
    mu = law_from_config(parse_mu(args.mu, args.alpha))
    rng = np.random.default_rng(args.seed)
    t = sample_gw(mu, rng, cap=args.cap) if args.n is None else sample_gw_conditioned_size(mu, args.n, rng)
    rows = [(l, int(t.parent[l]), int(t.depth[l]), int(t.counts[l])) for l in range(t.n)]
    _emit(args, ("vertex", "parent", "depth", "children"), rows, {"counts": t.to_text()})


def cmd_sample_env(args):
    env = _env(args)
    rows = [(p, j, k) for p, (j, k) in enumerate(env.spine_records(), start=1)]
    _emit(args, ("p", "position", "children"), rows,
          {"root_children": env.nchild(env.o), "text": env.to_text(args.depth)})


def cmd_walk(args):
    env = _env(args)
    w = truncated_weights(env, args.n_u)
    path = run_walk(env, env.o, _lam(args, env), args.n, np.random.default_rng([args.seed, 2]))
    S = w.S(path.vertices)
    rows = [(t, v, h, float(s)) for (t, v, h), s in zip(path.csv_rows(), S)]
    _emit(args, ("t", "vertex", "rel_height", "S"), rows,
          {"touched_top": path.touched_top, "exhausted": path.exhausted})


def _brw(args):
    env = _env(args)
    mu = law_from_config(parse_mu(args.mu, args.alpha))
    rng = np.random.default_rng([args.seed, 3])
    t = sample_gw_conditioned_size(mu, args.n, rng)
    return mu, env, t, sample_brw(env, t, _lam(args, env), rng)


def cmd_brw(args):
    mu, env, t, b = _brw(args)
    rel = relative_height_labels(b)
    S = harmonic_labels(b, truncated_weights(env, args.n_u))
    rows = [(l, int(t.parent[l]), int(t.depth[l]), int(b.labels[l]), int(rel[l]), float(S[l]))
            for l in range(t.n)]
    _emit(args, ("vertex", "parent", "depth", "env_vertex", "rel_height", "S"), rows,
          {"touched_top": b.touched_top})


def cmd_snake(args):
    mu, env, t, b = _brw(args)
    a_n = scaling_sequences(mu, t.n).a_n
    sig = np.sqrt(sigma_nu_sq(env.nu))
    if args.labels == "harmonic":
        lab, factor = harmonic_labels(b, truncated_weights(env, args.n_u)), 1.0 / (sig * np.sqrt(a_n))
    else:
        lab, factor = relative_height_labels(b), sig / np.sqrt(a_n)
    g = rescale_snake(contour_snake(t, lab), t.n, a_n, factor, args.grid)
    _emit(args, ("s", "lifetime", "endpoint"), g.csv_rows())


def cmd_metric(args):
    mu, env, t, b = _brw(args)
    a_n = scaling_sequences(mu, t.n).a_n
    sig = np.sqrt(sigma_nu_sq(env.nu))
    times = np.linspace(0, 2 * t.n, args.grid + 1)
    D = range_pseudometric(b, times).D * sig / np.sqrt(a_n)
    rows = [[float(s / (2 * t.n))] + row.tolist() for s, row in zip(times, D)]
    _emit(args, ["s"] + [f"d{i}" for i in range(len(times))], rows)


def cmd_limit(args):
    mu = law_from_config(parse_mu(args.mu, args.alpha))
    rng = np.random.default_rng([args.seed, 4])
    h = sample_height_limit(mu, args.grid + 1, rng)
    sn = sample_brownian_snake_endpoint(h, rng)
    _emit(args, ("s", "lifetime", "endpoint"), list(zip(sn.s.tolist(), h.tolist(), sn.w.tolist())))


def cmd_experiment(args):
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
        d.setdefault("name", args.name)
        cfg = ExperimentConfig.from_dict(d)
    else:
        cfg = default_config(args.name)
    for key, attr in (("mu", "mu"), ("nu", "nu")):
        v = getattr(args, attr)
        if v is not None:
            setattr(cfg, key, parse_mu(v, args.alpha) if key == "mu" else parse_nu(v))
    if args.n is not None:
        cfg.n = list(args.n)
    for flag, attr in (("replicas", "replicas"), ("grid", "grid"), ("seed", "seed"),
                       ("lam", "lam"), ("environments", "environments")):
        v = getattr(args, flag)
        if v is not None:
            setattr(cfg, attr, v)
    if args.spine_depth is not None:
        cfg.params["q"] = args.spine_depth
    if args.height_cap is not None:
        cfg.params["h_max"] = args.height_cap
    cfg.workers = args.workers
    cfg.out = args.out or f"results/{cfg.name}"
    rep = run_experiment(cfg)
    for line in rep.lines():
        print(line)
    print(f"wrote {cfg.out} (exit code {rep.exit_code})")
    return rep.exit_code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cactus-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, env=False, tree=False):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        if tree:
            sp.add_argument("--mu", default="binary")
            sp.add_argument("--alpha", type=float, default=None)
        if env:
            sp.add_argument("--nu", default="0,0.5,0.5")
            sp.add_argument("--spine-depth", type=int, default=200)
            sp.add_argument("--height-cap", type=int, default=400)
            sp.add_argument("--mode", choices=("invariant", "infinite-GW"), default="invariant")
            sp.add_argument("--lambda", dest="lam", type=float, default=None,
                            help="walk bias (default: mean of nu, the critical value)")
            sp.add_argument("--n-u", type=int, default=16, help="truncation depth of the harmonic weights")

    sp = sub.add_parser("sample-tree", help="GW tree, conditioned on size when --n is given")
    common(sp, tree=True)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--cap", type=int, default=10 ** 6)
    sp.set_defaults(func=cmd_sample_tree)

    sp = sub.add_parser("sample-env", help="pointed infinite or invariant GW environment")
    common(sp, env=True)
    sp.add_argument("--depth", type=int, default=3, help="generations written per off-spine block")
    sp.set_defaults(func=cmd_sample_env)

    sp = sub.add_parser("walk", help="biased walk from the point with harmonic coordinates")
    common(sp, env=True)
    sp.add_argument("--n", type=int, default=1000, help="number of steps")
    sp.set_defaults(func=cmd_walk)

    for name, fn, hlp in (("brw", cmd_brw, "tree-indexed walk on a size-n genealogy"),
                          ("snake", cmd_snake, "rescaled contour snake of a BRW"),
                          ("metric", cmd_metric, "rescaled range pseudometric on a contour grid")):
        sp = sub.add_parser(name, help=hlp)
        common(sp, env=True, tree=True)
        sp.add_argument("--n", type=int, default=1001)
        if name != "brw":
            sp.add_argument("--grid", type=int, default=256 if name == "snake" else 32)
        if name == "snake":
            sp.add_argument("--labels", choices=("harmonic", "height"), default="harmonic")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("limit", help="limit lifetime and Brownian snake on a grid")
    common(sp, tree=True)
    sp.add_argument("--grid", type=int, default=1024)
    sp.set_defaults(func=cmd_limit)

    sp = sub.add_parser("experiment", help="run a named experiment")
    sp.add_argument("name", choices=sorted(EXPERIMENTS) + sorted({k.split("_")[0] for k in EXPERIMENTS}))
    sp.add_argument("--config", default=None, help="JSON file mirroring ExperimentConfig")
    sp.add_argument("--mu", default=None)
    sp.add_argument("--nu", default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--n", type=int, nargs="+", default=None)
    sp.add_argument("--replicas", type=int, default=None)
    sp.add_argument("--environments", type=int, default=None)
    sp.add_argument("--grid", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--spine-depth", type=int, default=None)
    sp.add_argument("--height-cap", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", default=None, help="output directory")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    code = args.func(args)
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
