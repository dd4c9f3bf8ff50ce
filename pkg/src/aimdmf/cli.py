"""Command-line entry point.

    aimdmf <experiment> --config <file> --seed <u64> --out <dir>
           [--threads <n>] [--trace] [experiment-specific flags]

Experiments: fixedpoint, equilibrium, scaling, mckean, dynkin, chaos.
All but `scaling` read a network model from a TOML config file; `scaling`
studies the single-connection packet chain and takes its parameters as
flags.  Exit codes: 0 all criteria met, 2 at least one criterion
inconclusive (raise N/M/R), 1 error (bad usage, bad config, solver failure).
"""

from __future__ import annotations

import argparse
import sys

from .calibration import NUMERIC_SEED
from .config import ConfigError, load_model
from .experiments import (
    run_chaos,
    run_dynkin,
    run_equilibrium,
    run_fixedpoint,
    run_mckean,
    run_scaling,
)

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the harness reserves 2
    for inconclusive results, so usage errors must exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"{self.prog}: error: {message}")


def _float_list(text: str):
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _int_list(text: str):
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _seed(text: str) -> int:
    value = int(text)
    if not (0 <= value < 2**64):
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _add_common(p: _Parser, needs_config: bool):
    if needs_config:
        p.add_argument("--config", required=True, metavar="FILE",
                       help="model file (TOML)")
    p.add_argument("--seed", type=_seed, default=NUMERIC_SEED, metavar="U64")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory (created if missing)")
    p.add_argument("--threads", type=int, default=1, metavar="N")
    p.add_argument("--trace", action="store_true",
                   help="emit per-connection event traces where supported")


def build_parser() -> _Parser:
    parser = _Parser(prog="aimdmf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")

    p = sub.add_parser("fixedpoint",
                       help="equilibrium fixed point, both solver routes")
    _add_common(p, needs_config=True)
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("equilibrium",
                       help="particle system initialized at the stationary law")
    _add_common(p, needs_config=True)
    p.add_argument("--n-per-class", type=int, default=None, metavar="N",
                   help="override per-class particle counts")
    p.add_argument("--t-end", type=float, default=6.0)
    p.add_argument("--h", type=float, default=None, help="step size (default: auto)")

    p = sub.add_parser("scaling",
                       help="packet-level chain vs the continuous stationary law")
    _add_common(p, needs_config=False)
    p.add_argument("--r", type=float, default=0.5, help="multiplicative decrease factor")
    p.add_argument("--eps", type=_float_list, default=[1e-2, 1e-3, 1e-4],
                   metavar="E1,E2,...", help="per-packet loss probabilities, decreasing")
    p.add_argument("--samples", type=int, default=50000)
    p.add_argument("--chains", type=int, default=1024)

    p = sub.add_parser("mckean",
                       help="mean-field solver from the stationary initial law")
    _add_common(p, needs_config=True)
    p.add_argument("--m", type=int, default=10000, help="ensemble size")
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=1e-3, help="Picard stopping tolerance")
    p.add_argument("--max-iter", type=int, default=25)

    p = sub.add_parser("dynkin",
                       help="generator-residual (martingale) check")
    _add_common(p, needs_config=True)
    p.add_argument("--m", type=int, default=4000, help="ensemble size")
    p.add_argument("--t-end", type=float, default=6.0)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--init", default="stationary", metavar="stationary|W0",
                   help="initial law: 'stationary' or a number")
    p.add_argument("--functions", default="x,x2", metavar="F1,F2,...",
                   help="test functions among one,x,x2,expneg")

    p = sub.add_parser("chaos",
                       help="replicate populations vs the mean-field reference")
    _add_common(p, needs_config=True)
    p.add_argument("--n-list", type=_int_list, default=[100, 400, 1600],
                   metavar="N1,N2,...", help="population sizes, increasing")
    p.add_argument("--replicates", type=int, default=32)
    p.add_argument("--t-end", type=float, default=8.0)
    p.add_argument("--eval-times", type=_float_list, default=[2.0, 8.0],
                   metavar="T1,T2,...")
    p.add_argument("--m-ref", type=int, default=30000,
                   help="reference ensemble size")
    return parser


def _load(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return load_model(path), text


def _dispatch(args) -> int:
    kw = dict(seed=args.seed, threads=args.threads, trace=args.trace)
    if args.experiment == "scaling":
        result = run_scaling(args.out, r=args.r, eps_list=args.eps,
                             samples=args.samples, chains=args.chains, **kw)
    else:
        model, text = _load(args.config)
        kw["config_text"] = text
        if args.experiment == "fixedpoint":
            result = run_fixedpoint(model, args.out, tol=args.tol, **kw)
        elif args.experiment == "equilibrium":
            result = run_equilibrium(model, args.out, n_per_class=args.n_per_class,
                                     t_end=args.t_end, h=args.h, **kw)
        elif args.experiment == "mckean":
            result = run_mckean(model, args.out, m=args.m, t_end=args.t_end,
                                dt=args.dt, tol=args.tol,
                                max_iter=args.max_iter, **kw)
        elif args.experiment == "dynkin":
            init = args.init if args.init == "stationary" else float(args.init)
            functions = tuple(f for f in args.functions.split(",") if f.strip())
            result = run_dynkin(model, args.out, m=args.m, t_end=args.t_end,
                                dt=args.dt, init=init, functions=functions, **kw)
        elif args.experiment == "chaos":
            result = run_chaos(model, args.out, n_list=args.n_list,
                               replicates=args.replicates, t_end=args.t_end,
                               eval_times=args.eval_times, m_ref=args.m_ref, **kw)
        else:  # pragma: no cover - argparse restricts choices
            raise AssertionError(args.experiment)
    for line in result.summary_lines():
        print(line)
    print(f"artifacts in {args.out}")
    return result.exit_code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse --help exits 0; usage errors carry a message string
        if exc.code in (0, None):
            return 0
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
        return 1
    try:
        return _dispatch(args)
    except (OSError, ConfigError, ValueError, RuntimeError) as exc:
        print(f"aimdmf: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
