"""Command-line interface.

Subcommands: synthesize, verify, search, prune, demo.  Networks, boxes and
results travel as JSON (schemas in networks.py); curve data as CSV.  Exit
codes: 0 success, 1 infeasible or failed solve, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import lab
from .networks import (
    box_from_dict,
    load_json,
    network_from_dict,
    network_to_dict,
    reduced_from_dict,
    save_json,
)
from .sdp import SolverSettings
from .synthesis import (
    SynthesisInfeasibleError,
    SynthesisOptions,
    synthesize,
    verify_pair_bound,
)

__all__ = ["main", "build_parser"]


def _solver_settings(args) -> SolverSettings:
    return SolverSettings(tol=args.tol, max_iters=args.max_solver_iters)


def _add_solver_flags(parser) -> None:
    parser.add_argument("--tol", type=float, default=1e-8, help="solver tolerance (default 1e-8)")
    parser.add_argument("--max-solver-iters", type=int, default=100_000,
                        help="solver iteration cap (default 1e5)")


def _parse_dims(text: str):
    try:
        dims = tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("dims must be a comma-separated list of integers")
    if not dims or any(d <= 0 for d in dims):
        raise argparse.ArgumentTypeError("dims must be positive integers")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netred",
                                     description="Reduced-order network synthesis with certified error bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="synthesize a reduced network from a full one")
    p.add_argument("--net", required=True, help="full network JSON")
    p.add_argument("--dims", required=True, type=_parse_dims,
                   help="reduced hidden-layer sizes, comma separated (e.g. 3 or 3,2)")
    p.add_argument("--box", required=True, help="input box JSON")
    p.add_argument("--w1", type=float, default=1.0)
    p.add_argument("--w2", type=float, default=1.0)
    p.add_argument("--feedforward", action="store_true",
                   help="restrict the reduced coupling to strict feed-forward structure")
    p.add_argument("--diag-multipliers", action="store_true",
                   help="restrict the cross multiplier to its leading diagonal")
    p.add_argument("--out", help="write the result JSON here (default stdout)")
    _add_solver_flags(p)

    p = sub.add_parser("verify", help="certify an error bound for a fixed network pair")
    p.add_argument("--net", required=True, help="full network JSON")
    p.add_argument("--reduced", required=True, help="reduced network JSON")
    p.add_argument("--box", required=True, help="input box JSON")
    p.add_argument("--w1", type=float, default=1.0)
    p.add_argument("--w2", type=float, default=1.0)
    p.add_argument("--out", help="write the certificate JSON here (default stdout)")
    _add_solver_flags(p)

    p = sub.add_parser("search", help="grow the reduced architecture until targets are met")
    p.add_argument("--net", required=True)
    p.add_argument("--box", required=True)
    p.add_argument("--eps1", type=float, required=True, help="certified-bound target")
    p.add_argument("--eps2", type=float, required=True, help="sampled-error target")
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--stop-mode", choices=("or", "and"), default="or")
    p.add_argument("--feedforward", action="store_true")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0, help="sampling seed for boxes with >1 input")
    p.add_argument("--out-dir", default=".", help="directory for the trace CSV and best result")
    _add_solver_flags(p)

    p = sub.add_parser("prune", help="zero the smallest-magnitude weights of a network")
    p.add_argument("--net", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", help="write the pruned network JSON here (default stdout)")

    p = sub.add_parser("demo", help="run a packaged experiment")
    p.add_argument("which", choices=("example1", "example2"))
    p.add_argument("--out-dir", default=".")
    p.add_argument("--seed", type=int, default=lab.EXAMPLE1_SEED,
                   help="weight seed for example1")
    p.add_argument("--samples", type=int, default=None, help="sweep sample count")
    p.add_argument("--box-lo", type=float, default=0.0, help="example2 interval lower end")
    p.add_argument("--box-hi", type=float, default=1.0, help="example2 interval upper end")
    _add_solver_flags(p)
    return parser


def _emit(obj: dict, out_path) -> None:
    if out_path:
        save_json(obj, out_path)
    else:
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")


def _cmd_synthesize(args) -> int:
    net = network_from_dict(load_json(args.net))
    box = box_from_dict(load_json(args.box))
    opts = SynthesisOptions(
        w1=args.w1, w2=args.w2,
        structure="strict-feedforward" if args.feedforward else "general-implicit",
        diagonal_multipliers=args.diag_multipliers,
        solver=_solver_settings(args),
    )
    try:
        result = synthesize(net, args.dims, box, opts)
    except SynthesisInfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(result.to_dict(), args.out)
    return 0


def _cmd_verify(args) -> int:
    net = network_from_dict(load_json(args.net))
    reduced = reduced_from_dict(load_json(args.reduced))
    box = box_from_dict(load_json(args.box))
    gamma_x, gamma, status = verify_pair_bound(net, reduced, box, args.w1, args.w2,
                                               solver=_solver_settings(args))
    if status != "optimal":
        print(f"error: no certificate found (solver status {status})", file=sys.stderr)
        return 1
    _emit({
        "gamma_x": gamma_x,
        "gamma": gamma,
        "bound_sup": gamma_x * box.sup_norm_sq + gamma,
        "solver_status": status,
    }, args.out)
    return 0


def _cmd_search(args) -> int:
    import os

    net = network_from_dict(load_json(args.net))
    box = box_from_dict(load_json(args.box))
    opts = SynthesisOptions(
        structure="strict-feedforward" if args.feedforward else "general-implicit",
        solver=_solver_settings(args),
    )
    sampler = lab.grid(args.samples) if net.n_x == 1 else lab.uniform(args.samples, args.seed)
    try:
        best, trace = lab.architecture_search(net, box, args.eps1, args.eps2,
                                              max_iters=args.max_iters, opts=opts,
                                              sampler=sampler, stop_mode=args.stop_mode)
    except lab.SearchFailedError as exc:
        os.makedirs(args.out_dir, exist_ok=True)
        lab.emit_curves(exc.trace, os.path.join(args.out_dir, "search_trace.csv"))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    os.makedirs(args.out_dir, exist_ok=True)
    lab.emit_curves(trace, os.path.join(args.out_dir, "search_trace.csv"))
    save_json(best.to_dict(), os.path.join(args.out_dir, "best_result.json"))
    return 0


def _cmd_prune(args) -> int:
    net = network_from_dict(load_json(args.net))
    pruned = lab.prune_magnitude(net, args.count)
    _emit(network_to_dict(pruned), args.out)
    return 0


def _cmd_demo(args) -> int:
    solver = _solver_settings(args)
    if args.which == "example1":
        try:
            summary = lab.run_example1(args.out_dir, seed=args.seed,
                                       samples=args.samples or 10_000,
                                       solver=SolverSettings(backend="scs", tol=min(args.tol, 1e-9),
                                                             max_iters=args.max_solver_iters))
        except SynthesisInfeasibleError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"example1: bounds {['%.4g' % b for b in summary['bounds']]}", file=sys.stderr)
        return 0
    summary = lab.run_example2(args.out_dir, box_lower=args.box_lo, box_upper=args.box_hi,
                               samples=args.samples or 1000, solver=solver)
    bounds = ", ".join(f"{k}={v:.3g}" for k, v in summary["bounds"].items())
    print(f"example2: certified sup bounds {bounds}; pruned output mean "
          f"{summary['pruned_mean']:.6g} (std {summary['pruned_std']:.2e}); "
          f"wrote {summary['csv']}", file=sys.stderr)
    return 0


_COMMANDS = {
    "synthesize": _cmd_synthesize,
    "verify": _cmd_verify,
    "search": _cmd_search,
    "prune": _cmd_prune,
    "demo": _cmd_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
