"""Command-line entry point: ``vecsense <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .denoisers import BlockSoft, JamesStein
from .distributions import parse_dist
from .risk import SparsePrior, m_bst, m_js, se_run, tau_minimax
from .signal_model import SUCCESS_THRESHOLD, ingest_sparsify, read_matrix_csv, write_matrix_csv


def _denoiser(name, epsilon, B):
    if name == "js":
        return JamesStein()
    return BlockSoft(tau_minimax(epsilon, B))


def cmd_minimax(args):
    if args.denoiser == "js":
        out = {"denoiser": "js", "epsilon": args.epsilon, "B": args.dim, "value": m_js(args.epsilon, args.dim)}
    else:
        out = {"denoiser": "bst", "epsilon": args.epsilon, "B": args.dim, "value": m_bst(args.epsilon, args.dim),
               "tau": tau_minimax(args.epsilon, args.dim)}
    print(json.dumps(out))


def cmd_se(args):
    prior = SparsePrior(args.epsilon, parse_dist(args.dist), args.dim)
    spec = _denoiser(args.denoiser, args.epsilon, args.dim)
    kind = "matricial" if args.matricial else "scalar"
    tr = se_run(prior, spec, args.delta, args.iters, kind, args.samples, args.seed)
    out = {"denoiser": args.denoiser, "epsilon": args.epsilon, "B": args.dim, "dist": prior.nonzero.to_dict(),
           **tr.to_dict(), "per_coordinate": tr.per_coordinate().tolist()}
    print(json.dumps(out))


def cmd_trial(args):
    spec = harness.TrialSpec(args.algo, args.N, args.dim, args.epsilon, args.delta, parse_dist(args.dist),
                             args.epsilon_for_tau, args.denoiser, args.threshold, args.max_iters)
    print(json.dumps(harness.run_trial(spec, args.seed).to_dict()))


def cmd_grid(args):
    grid = harness.GridSpec.load(args.config)
    n = harness.run_grid(grid, args.jobs, args.out)
    print(json.dumps({"written": n, "out": args.out}))


def cmd_fit_pt(args):
    fits, skipped = harness.pt_curve(harness.read_records(args.in_path), args.degree)
    harness.write_pt_csv(fits, args.out)
    for eps in skipped:
        print(f"epsilon={eps}: no transition in band; widen the delta band", file=sys.stderr)
    print(json.dumps({"fits": len(fits), "skipped": skipped, "out": args.out}))


def cmd_heatmap(args):
    cells = harness.heatmap(harness.read_records(args.in_path))
    harness.write_heatmap_csv(cells, args.out)
    print(json.dumps({"cells": len(cells), "out": args.out}))


def cmd_sparsify(args):
    M = read_matrix_csv(args.in_path)
    ens = ingest_sparsify(M, args.epsilon, args.log2)
    write_matrix_csv(args.out, ens.X)
    print(json.dumps({"N": int(M.shape[0]), "B": int(M.shape[1]), "k": int(ens.support.size),
                      "support": [int(i) for i in ens.support], "out": args.out}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vecsense", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("minimax", help="analytic minimax risk M_BST or M_JS")
    s.add_argument("--denoiser", choices=["bst", "js"], required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--dim", type=int, required=True)
    s.set_defaults(func=cmd_minimax)

    s = sub.add_parser("se", help="run scalar or matricial state evolution")
    s.add_argument("--denoiser", choices=["bst", "js"], required=True)
    s.add_argument("--dist", default="std_gaussian", help="nonzero distribution, e.g. gaussian, sphere:1e6 or JSON")
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--iters", type=int, default=200)
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--matricial", action="store_true")
    s.set_defaults(func=cmd_se)

    s = sub.add_parser("trial", help="one seeded reconstruction experiment")
    s.add_argument("--algo", choices=harness.ALGOS, required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--dist", default="std_gaussian")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--epsilon-for-tau", type=float, default=None,
                   help="sparsity used for the minimax threshold (default: the true epsilon)")
    s.add_argument("--denoiser", choices=["bst", "js"], default=None, help="array-amp denoiser (default bst)")
    s.add_argument("--threshold", type=float, default=SUCCESS_THRESHOLD, help="success threshold on relative error")
    s.add_argument("--max-iters", type=int, default=None)
    s.set_defaults(func=cmd_trial)

    s = sub.add_parser("grid", help="run a resumable experiment grid to NDJSON")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("fit-pt", help="LD50 phase-transition fit per epsilon")
    s.add_argument("--in", dest="in_path", required=True)
    s.add_argument("--degree", type=int, choices=[1, 2, 3], default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit_pt)

    s = sub.add_parser("heatmap", help="success fraction per (epsilon, delta) cell")
    s.add_argument("--in", dest="in_path", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("sparsify", help="keep the top epsilon fraction of rows of a CSV matrix")
    s.add_argument("--in", dest="in_path", required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--log2", action="store_true", help="apply log2(x + 1) before ranking")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sparsify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"vecsense {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
