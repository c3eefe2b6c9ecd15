"""Command-line interface.

``dsflab [--seed S] [--out DIR] [--config FILE] <command> [options]``

Every command writes ``manifest.json``, ``records.jsonl`` and ``summary.json``
(plus CSV tables where relevant) into ``--out``.  Options may also be given in
a flat ``key = value`` config file; command-line flags take precedence.
Exit status: 0 on success, 1 on a runtime failure, 2 on bad arguments.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from . import experiments as ex
from . import rng as _rng
from .domination import (alpha_curve, counterexample_verify, ecdf_dominance, monotone_violations,
                         random_h0, sample_X_many)
from .exploration import Explorer
from .forest import build_forest, count_trees
from .lpgeom import NormContext
from .partition import combinatorial_witness, random_config, witness_scale
from .ppp import PointStore


def _p(value: str) -> float:
    v = value.strip().lower()
    if v in ("inf", "infinity", "oo"):
        return math.inf
    p = float(v)
    if p < 1:
        raise argparse.ArgumentTypeError("p must be >= 1 or inf")
    return p


def _globals(sp):
    """Let ``--seed`` and ``--out`` also follow the subcommand."""
    sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--out", default=argparse.SUPPRESS)


def _common(sp, **defaults):
    """Options shared by the experiment-style commands."""
    sp.add_argument("--d", type=int, default=defaults.get("d", 2))
    sp.add_argument("--p", type=_p, default=defaults.get("p", 2.0))
    sp.add_argument("--k", type=int, default=defaults.get("k", 2))
    sp.add_argument("--sep", type=float, default=defaults.get("sep", 5.0))
    sp.add_argument("--horizon", type=float, default=defaults.get("horizon", 1000.0))
    sp.add_argument("--reps", type=int, default=defaults.get("reps", 10))
    sp.add_argument("--kappa", type=float, default=defaults.get("kappa", 0.0))
    sp.add_argument("--R", type=float, default=defaults.get("R", 1.0))
    sp.add_argument("--max-steps", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dsflab", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="dsflab-out")
    ap.add_argument("--config", default=None, help="flat key = value file")
    ap.add_argument("--version", action="version", version=f"dsflab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("forest", help="build the forest on a window and export it")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--p", type=_p, default=2.0)
    sp.add_argument("--width", type=float, default=20.0)
    sp.add_argument("--height", type=float, default=20.0)

    sp = sub.add_parser("explore", help="run the joint exploration and export its trace")
    _common(sp, horizon=1000.0, k=2)
    sp.add_argument("--check", action="store_true")

    sp = sub.add_parser("dominate", help="domination checks")
    sp.add_argument("mode", choices=["counterexample", "ecdf", "alpha"])
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--p", type=_p, default=2.0)
    sp.add_argument("--n", type=int, default=20000)
    sp.add_argument("--histories", type=int, default=5)
    sp.add_argument("--grid", type=int, default=20)

    sp = sub.add_parser("partition", help="partition witnesses for random configurations")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--p", type=_p, default=2.0)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--kappa", type=float, default=1.0)
    sp.add_argument("--configs", type=int, default=10)
    sp.add_argument("--n-mc", type=int, default=32)

    sp = sub.add_parser("coalesce", help="coalescence campaign")
    _common(sp, horizon=1000.0)

    sp = sub.add_parser("escape", help="non-coalescence statistics (horizon in steps)")
    _common(sp, d=4, k=3, sep=50.0, horizon=1000.0)

    sp = sub.add_parser("scale", help="diffusively scaled paths and their distances")
    sp.add_argument("--p", type=_p, default=2.0)
    sp.add_argument("--n-scale", type=float, default=5.0)
    sp.add_argument("--paths", type=int, default=8)
    sp.add_argument("--step", type=float, default=1e-3)
    sp.add_argument("--calib-traj", type=int, default=400)
    sp.add_argument("--common-start", action="store_true")

    sp = sub.add_parser("audit", help="moment conditions of renewal increments (d = 2, k = 2)")
    _common(sp, sep=1000.0, horizon=20000.0, reps=4, kappa=0.18, R=0.5)
    sp.set_defaults(p=math.inf)
    for sp in sub.choices.values():
        _globals(sp)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv):
    """Parse once for ``--config``; feed its values in as defaults; parse again."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return ap.parse_args(argv)
    values = ex.load_config_file(known.config)
    values = {k.replace("-", "_"): v for k, v in values.items()}
    top = {"seed": int, "out": str}
    ap.set_defaults(**{k: t(values[k]) for k, t in top.items() if k in values})
    args = ap.parse_args(argv)
    # re-parse the chosen subcommand with config defaults
    sub_action = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub_action.choices[args.command]
    conv = {}
    for a in sp._actions:
        if a.dest in values and a.dest != "help":
            v = values[a.dest]
            if a.type is not None:
                v = a.type(v)
            elif isinstance(a, argparse._StoreTrueAction):
                v = str(v).lower() in ("1", "true", "yes", "on")
            conv[a.dest] = v
    sp.set_defaults(**conv)
    return ap.parse_args(argv)


def _cfg(args) -> ex.ExperimentConfig:
    return ex.ExperimentConfig(d=args.d, p=args.p, k=args.k, sep=args.sep, horizon=args.horizon,
                               max_steps=args.max_steps, reps=args.reps, seed=args.seed,
                               kappa=args.kappa, R=args.R, workers=args.workers)


def _plain(args) -> dict:
    out = {k: v for k, v in vars(args).items() if k not in ("config", "out")}
    return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in out.items()}


# --------------------------------------------------------------------------- commands


def cmd_forest(args):
    ctx = NormContext(args.d, args.p)
    store = PointStore(args.d, seed=args.seed, ctx=ctx)
    lo = np.zeros(args.d)
    hi = np.full(args.d, args.width)
    hi[-1] = args.height
    g = build_forest(store, (lo, hi), ctx)
    n_trees, sizes = count_trees(g)
    succ = g.successor()
    records = [{"rep": i, "vertex": g.vertices[i].tolist(), "successor": int(succ[i]),
                "uncertain": bool(g.uncertain[i])} for i in range(g.n_vertices)]
    summary = {"vertices": g.n_vertices, "edges": int(len(g.edges)),
               "uncertain": int(g.uncertain.sum()), "components": n_trees,
               "largest": sizes[:5], "acyclic": g.is_acyclic()}
    ex.write_outputs(args.out, "forest", _plain(args), records, summary)
    g.to_csv(f"{args.out}/vertices.csv", f"{args.out}/edges.csv")
    return summary


def cmd_explore(args):
    cfg = _cfg(args)
    ctx = cfg.ctx
    kappa = ex.resolve_kappa(cfg)
    store = PointStore(cfg.d, seed=_rng.derive_seed(cfg.seed, "explore"), ctx=ctx)
    e = Explorer(store, ex.line_starts(cfg.k, cfg.d, cfg.sep), ctx, kappa=kappa, R=cfg.R,
                 check=args.check, record=True)
    e.run(int(cfg.horizon))
    records = [dict(r, rep=r["n"]) for r in e.records]
    summary = e.summary()
    summary["renewal_steps"] = e.trace.beta
    ex.write_outputs(args.out, "explore", cfg, records, summary)
    return summary


def cmd_dominate(args):
    ctx = NormContext(args.d, args.p)
    if args.mode == "counterexample":
        rep = counterexample_verify()
        print(rep.text())
        summary = {"lifted": str(rep.lifted_cube_sum), "base": str(rep.base_cube),
                   "radius": str(rep.radius_cube), "passed": rep.passed}
        ex.write_outputs(args.out, "dominate", _plain(args), [dict(rep=0, **summary)], summary)
        if not rep.passed:
            raise RuntimeError("counterexample verification failed")
        return summary
    gen = np.random.default_rng(_rng.derive_seed(args.seed, "histories"))
    Hs = [random_h0(args.d, ctx, gen) for _ in range(args.histories)]
    records = []
    if args.mode == "ecdf":
        res = sample_X_many([None] + Hs, ctx, args.seed, args.n)
        base = res[0][0][:, -1]
        tables = {}
        for i, (H, (X, _)) in enumerate(zip(Hs, res[1:])):
            cmp = ecdf_dominance(X[:, -1], base)
            records.append({"rep": i, "history": H.to_dict(), "max_z": cmp.max_violation_z,
                            "passed": cmp.passed})
            tables[f"ecdf_{i}"] = (["h", "survival_H", "survival_empty", "stderr", "z"],
                                   np.column_stack([cmp.grid, cmp.survival_a, cmp.survival_b,
                                                    cmp.stderr, cmp.z]).tolist())
    else:
        hs = np.linspace(0.0, 0.95, args.grid)
        tables = {}
        for i, H in enumerate(Hs):
            est, se = alpha_curve(H, hs, ctx, args.n, _rng.derive_seed(args.seed, "alpha", i))
            bad = monotone_violations(est, se)
            records.append({"rep": i, "history": H.to_dict(), "violations": bad,
                            "passed": not bad})
            tables[f"alpha_{i}"] = (["h", "estimate", "stderr"],
                                    np.column_stack([hs, est, se]).tolist())
    summary = {"mode": args.mode, "histories": len(Hs),
               "passed": all(r["passed"] for r in records)}
    ex.write_outputs(args.out, "dominate", _plain(args), records, summary, tables)
    return summary


def cmd_partition(args):
    ctx = NormContext(args.d, args.p)
    gen = np.random.default_rng(_rng.derive_seed(args.seed, "configs"))
    records = []
    for i in range(args.configs):
        _, R0, _ = witness_scale(args.k, ctx, Fraction(args.kappa))
        cfg = random_config(args.k, args.d, gen, scale=R0)
        w = combinatorial_witness(cfg, args.kappa, ctx, n_mc=args.n_mc,
                                  seed=_rng.derive_seed(args.seed, "mc", i))
        records.append({"rep": i, "witness": json.loads(w.to_json()), "verified": w.verified})
    summary = {"configs": args.configs, "verified": int(sum(r["verified"] for r in records))}
    ex.write_outputs(args.out, "partition", _plain(args), records, summary)
    if summary["verified"] != args.configs:
        raise RuntimeError("witness verification failed")
    return summary


def cmd_coalesce(args):
    cfg = _cfg(args)
    recs = ex.coalescence_run(cfg)
    summary = ex.coalescence_summary(recs)
    if cfg.d == 2:
        T = [r["T"] for r in recs if r["coalesced"]]
        try:
            fit = ex.coalescence_tail(T, sum(not r["coalesced"] for r in recs), cfg.horizon)
            summary["tail"] = fit.to_dict()
        except ex.InsufficientDataError as err:
            summary["tail"] = {"error": str(err)}
    ex.write_outputs(args.out, "coalesce", cfg, recs, summary)
    return summary


def cmd_escape(args):
    cfg = _cfg(args)
    recs, summary = ex.escape_run(cfg)
    ex.write_outputs(args.out, "escape", cfg, recs, summary)
    return summary


def cmd_scale(args):
    gamma, sigma = ex.calibrate_scaling(2, args.p, _rng.derive_seed(args.seed, "calibrate"),
                                        n_traj=args.calib_traj)
    cfg = ex.ExperimentConfig(d=2, p=args.p, seed=args.seed)
    paths, D = ex.scaled_paths(cfg, args.n_scale, gamma, sigma, n_paths=args.paths,
                               step=args.step, common_start=args.common_start)
    records = [{"rep": i, "start": pth.start, "t": pth.t.tolist(), "x": pth.x.tolist()}
               for i, pth in enumerate(paths)]
    summary = {"gamma": gamma, "sigma": sigma, "paths": len(paths),
               "metric_violations": ex.metric_violations(D)}
    tables = {"d_pi": ([f"path_{i}" for i in range(len(paths))], D.tolist())}
    ex.write_outputs(args.out, "scale", _plain(args), records, summary, tables)
    return summary


def cmd_audit(args):
    cfg = _cfg(args)
    if cfg.d != 2 or cfg.k != 2:
        raise ValueError("audit requires d = 2 and k = 2")
    kappa = ex.resolve_kappa(cfg)
    recs = ex.run_replicates(ex.renewal_replicate, cfg)
    rep = ex.assumption_audit([r["Z"] for r in recs], [r["W"] for r in recs], kappa, cfg.R)
    summary = rep.to_dict()
    summary["renewals"] = int(sum(r["n_renewal"] for r in recs))
    ex.write_outputs(args.out, "audit", cfg, recs, summary)
    return summary


COMMANDS = {"forest": cmd_forest, "explore": cmd_explore, "dominate": cmd_dominate,
            "partition": cmd_partition, "coalesce": cmd_coalesce, "escape": cmd_escape,
            "scale": cmd_scale, "audit": cmd_audit}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
    except SystemExit as err:
        return int(err.code or 0)
    except (OSError, ValueError) as err:
        print(f"dsflab: error: {err}", file=sys.stderr)
        return 2
    try:
        summary = COMMANDS[args.command](args)
    except Exception as err:  # noqa: BLE001 - reported as a runtime failure
        print(f"dsflab: {args.command} failed: {err}", file=sys.stderr)
        return 1
    if args.command != "dominate" or args.mode != "counterexample":
        print(json.dumps(ex._jsonable(summary), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
