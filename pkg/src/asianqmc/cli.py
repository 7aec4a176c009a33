"""Command-line front end.

Subcommands: price, cdf, pdf (single QMC+preintegration estimates), curve
(interpolated density over an interval), study (the four-way convergence
comparison) and cbc (construct and cache generating vectors).  Defaults match
the reference experiment configuration.  Output is deterministic for a fixed
seed; wall times are written only with --timing.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import estimate as est
from .lattice import cbc_construct, is_prime, save_rule, trivial_rule
from .model import MarketParams, pca_factor
from .preintegrate import OracleFailure, SolverFailure, Target
from .weights import pod_weights, product_weights, theory_constants

_LADDER_PRESET = "paper"


def _add_market(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("market")
    g.add_argument("--s0", type=float, default=100.0, help="initial price in currency units (default: %(default)s)")
    g.add_argument("--r", type=float, default=0.1, help="risk-free rate, 1/time (default: %(default)s)")
    g.add_argument("--sigma", type=float, default=0.2, help="volatility, 1/sqrt(time) (default: %(default)s)")
    g.add_argument("--t", type=float, default=1.0, help="expiry in time units (default: %(default)s)")
    g.add_argument("--strike", type=float, default=100.0, help="strike in currency units (default: %(default)s)")
    g.add_argument("--m", type=int, default=256, help="timestep count; d = m - 1 (default: %(default)s)")


def _add_sampling(p: argparse.ArgumentParser, with_n: bool = True) -> None:
    g = p.add_argument_group("sampling")
    if with_n:
        g.add_argument("--n", type=int, default=16001, help="points per shift, prime (default: %(default)s)")
    g.add_argument("--l", type=int, default=32, help="random shifts / replicates, >= 2 (default: %(default)s)")
    g.add_argument("--seed", type=int, default=1, help="base seed for all substreams (default: %(default)s)")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker-thread cap; does not affect results (default: %(default)s)")


def _add_weights(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("weights")
    g.add_argument("--weights", choices=("product", "pod"), default="product",
                   help="weight family fed to the CBC construction (default: %(default)s)")
    g.add_argument("--delta", type=float, default=0.25,
                   help="POD rate parameter in (0, 1/2) (default: %(default)s)")
    g.add_argument("--c2", type=float, default=1.0,
                   help="POD construction constant, placeholder scale (default: %(default)s)")
    g.add_argument("--gv-cache", default=None, metavar="DIR",
                   help="directory for generating-vector cache files")


def _add_output(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("output")
    g.add_argument("--out", default=None, metavar="PATH", help="output file (default: stdout)")
    g.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="output format (default: %(default)s)")
    g.add_argument("--timing", action="store_true",
                   help="write measured wall times (breaks byte-for-byte reproducibility)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asianqmc",
        description="Asian option price/cdf/pdf estimation by preintegration "
                    "and randomly shifted rank-1 lattice rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("price", "estimate the discounted option value (QMC + preintegration)"),
        ("cdf", "estimate the distribution function at --x"),
        ("pdf", "estimate the density at --x"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_market(p)
        _add_sampling(p)
        _add_weights(p)
        _add_output(p)
        if name != "price":
            p.add_argument("--x", type=float, default=100.0,
                           help="evaluation threshold in currency units (default: %(default)s)")

    p = sub.add_parser("curve", help="density curve from Chebyshev nodes")
    _add_market(p)
    _add_sampling(p)
    _add_weights(p)
    _add_output(p)
    p.add_argument("--x-lo", type=float, default=70.0, help="interval lower end (default: %(default)s)")
    p.add_argument("--x-hi", type=float, default=150.0, help="interval upper end (default: %(default)s)")
    p.add_argument("--nodes", type=int, default=30, help="Chebyshev node count (default: %(default)s)")

    p = sub.add_parser("study", help="convergence study over a ladder of moduli")
    _add_market(p)
    _add_sampling(p, with_n=False)
    _add_weights(p)
    _add_output(p)
    p.add_argument("--target", choices=("price", "cdf", "pdf"), default="price",
                   help="study target (default: %(default)s)")
    p.add_argument("--x", type=float, default=100.0,
                   help="threshold for cdf/pdf targets (default: %(default)s)")
    p.add_argument("--ladder", default=_LADDER_PRESET,
                   help="comma-separated prime moduli, or 'paper' (default: %(default)s)")

    p = sub.add_parser("cbc", help="construct generating vectors and write the cache file")
    _add_market(p)
    _add_sampling(p)
    _add_weights(p)
    _add_output(p)

    return parser


def _validate(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if getattr(args, "n", None) is not None and not is_prime(args.n):
        parser.error(f"--n must be prime, got {args.n}")
    if getattr(args, "l", None) is not None and args.l < 2:
        parser.error(f"--l must be >= 2, got {args.l}")
    if getattr(args, "m", None) is not None and args.m < 1:
        parser.error(f"--m must be >= 1, got {args.m}")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        parser.error(f"--seed must be >= 0, got {args.seed}")
    if hasattr(args, "nodes") and args.nodes < 2:
        parser.error(f"--nodes must be >= 2, got {args.nodes}")
    if hasattr(args, "x_lo") and not args.x_lo < args.x_hi:
        parser.error(f"--x-lo must be below --x-hi, got {args.x_lo} >= {args.x_hi}")
    if hasattr(args, "delta") and not 0.0 < args.delta < 0.5:
        parser.error(f"--delta must lie in (0, 1/2), got {args.delta}")
    if hasattr(args, "ladder"):
        args.ladder_values = _parse_ladder(parser, args.ladder)


def _parse_ladder(parser: argparse.ArgumentParser, text: str) -> tuple[int, ...]:
    if text == _LADDER_PRESET:
        return est.PAPER_LADDER
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        parser.error(f"--ladder must be 'paper' or comma-separated integers, got {text!r}")
    if not values:
        parser.error("--ladder must be nonempty")
    for v in values:
        if not is_prime(v):
            parser.error(f"--ladder entries must be prime, got {v}")
    return values


def _market_params(args: argparse.Namespace) -> MarketParams:
    return MarketParams(s0=args.s0, r=args.r, sigma=args.sigma,
                        t_expiry=args.t, strike=args.strike, m=args.m)


def _cbc_gammas(args, params, factor, target: Target) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension weights for the preintegrated (d) and plain (m) rules.

    With --weights pod the POD spec's singleton weights are projected onto
    product form, since the fast construction takes product weights only.
    """
    if args.weights == "product" or params.d == 0:
        gamma_d = product_weights(factor).product_factors if params.d >= 1 else np.zeros(0)
    else:
        a = b = target.x if target.x > 0 else params.strike
        constants = theory_constants(factor, (a, b), delta=args.delta, c2=args.c2)
        gamma_d = pod_weights(target, constants, factor).singleton_factors()
    return gamma_d, est.extended_product_weights(factor)


def _emit(args, records) -> None:
    text_target = open(args.out, "w", newline="\n") if args.out else sys.stdout
    try:
        if args.format == "csv":
            est.write_csv(records, text_target)
        else:
            est.write_json(records, text_target)
    finally:
        if args.out:
            text_target.close()


def _run_single(args, kind: str) -> int:
    params = _market_params(args)
    factor = pca_factor(params)
    if kind == "price":
        target = Target.price(params.strike)
    elif kind == "cdf":
        target = Target.cdf(args.x)
    else:
        target = Target.pdf(args.x)
    gamma_d, _ = _cbc_gammas(args, params, factor, target)
    rule = est.study_rule(args.n, params.d, gamma_d, args.gv_cache)
    result = est.qmc_preint_estimate(target, params, factor, rule, args.l,
                                     args.seed, args.threads)
    _emit(args, est.estimate_records(result, target, params, timing=args.timing))
    return 0


def _run_curve(args) -> int:
    params = _market_params(args)
    factor = pca_factor(params)
    target = Target.pdf(0.5 * (args.x_lo + args.x_hi))
    gamma_d, _ = _cbc_gammas(args, params, factor, target)
    rule = est.study_rule(args.n, params.d, gamma_d, args.gv_cache)
    curve = est.pdf_curve(params, factor, args.x_lo, args.x_hi, args.nodes,
                          rule, args.l, args.seed, args.threads)
    _emit(args, est.curve_records(curve, params, timing=args.timing))
    return 0


def _run_study(args) -> int:
    params = _market_params(args)
    factor = pca_factor(params)
    if args.target == "price":
        target = Target.price(params.strike)
    elif args.target == "cdf":
        target = Target.cdf(args.x)
    else:
        target = Target.pdf(args.x)

    def progress(row) -> None:
        print(f"[study] N={row.n} method={row.method.value} mean={row.mean:.6g} "
              f"stderr={row.stderr:.3g}", file=sys.stderr, flush=True)

    rows = est.convergence_study(target, params, args.ladder_values, args.l,
                                 args.seed, gv_cache=args.gv_cache,
                                 threads=args.threads, factor=factor,
                                 progress=progress)
    _emit(args, est.study_records(rows, params, args.l, timing=args.timing))
    return 0


def _run_cbc(args) -> int:
    params = _market_params(args)
    factor = pca_factor(params)
    target = Target.price(params.strike)
    gamma_d, gamma_full = _cbc_gammas(args, params, factor, target)
    if params.d >= 1:
        rule_d = cbc_construct(params.d, args.n, gamma_d)
    else:
        rule_d = trivial_rule(args.n)
    if args.gv_cache:
        # The study needs both the preintegrated and the full-dimensional
        # vectors, so cache both.
        rule_full = est.study_rule(args.n, params.m, gamma_full, args.gv_cache)
        path_d = est._rule_cache_path(args.gv_cache, args.n, params.d, gamma_d)
        if params.d >= 1:
            save_rule(rule_d, path_d)
        print(f"cached n={args.n} d={rule_d.d} criterion={rule_d.criterion_value:.6g} "
              f"and d={rule_full.d} criterion={rule_full.criterion_value:.6g} "
              f"under {args.gv_cache}", file=sys.stderr)
    elif args.out:
        save_rule(rule_d, args.out)
        print(f"wrote n={args.n} d={rule_d.d} criterion={rule_d.criterion_value:.6g} "
              f"to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(f"{rule_d.n} {rule_d.d}\n")
        sys.stdout.write(" ".join(str(int(v)) for v in rule_d.z) + "\n")
        sys.stdout.write(format(rule_d.criterion_value, ".17g") + "\n")
    return 0


def run(argv=None) -> int:
    """Entry point; returns 0 on success, 2 on usage error, 1 on numeric failure."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        if args.command in ("price", "cdf", "pdf"):
            return _run_single(args, args.command)
        if args.command == "curve":
            return _run_curve(args)
        if args.command == "study":
            return _run_study(args)
        return _run_cbc(args)
    except (SolverFailure, OracleFailure, FloatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
