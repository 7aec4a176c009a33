"""Estimators, the convergence study, and the interpolated pdf curve.

Four estimators are provided: plain MC and QMC on the full-dimensional
integrands, and MC/QMC applied to the preintegrated integrand.  QMC variants
average over L independent random shifts of one rank-1 rule; MC variants use
L x N points split into L replicates so that the reported standard errors are
comparable.  All randomness flows through per-shift/per-replicate substreams,
so results are bit-identical regardless of the number of worker threads.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from .lattice import (
    LatticeRule,
    cbc_construct,
    inverse_normal_cdf,
    is_prime,
    load_rule,
    mc_stream,
    point_block,
    sample_shifts,
    save_rule,
    trivial_rule,
)
from .model import BrownianFactor, MarketParams, pca_factor, phi
from .preintegrate import Target, TargetKind, exponent_parts, preint_batch, preint_from_parts
from .weights import product_weights

__all__ = [
    "Method",
    "Estimate",
    "StudyRow",
    "PdfCurve",
    "PAPER_LADDER",
    "CSV_HEADER",
    "qmc_preint_estimate",
    "mc_preint_estimate",
    "qmc_estimate",
    "mc_estimate",
    "convergence_study",
    "pdf_curve",
    "fit_barycentric",
    "study_rule",
    "extended_product_weights",
    "estimate_records",
    "study_records",
    "write_csv",
    "write_json",
]

# Moduli used by the reference experiments; all prime.
PAPER_LADDER = (101, 251, 503, 997, 1999, 4001, 8009, 16001, 32003, 64007, 128021)

CSV_HEADER = "method,target,x,m,N,L,mean,stderr,seconds"

# Points are processed in blocks of this many rows to bound peak memory.
_CHUNK = 16384

# A lattice point with a zero component would map to -infinity under the
# Gaussian quantile; random shifts make this a probability-zero event, but
# the unshifted diagnostic path nudges such components to 2^-64.
_U_FLOOR = 2.0**-64


class Method(str, Enum):
    MC = "MC"
    QMC = "QMC"
    MC_PREINT = "MCPreint"
    QMC_PREINT = "QMCPreint"


@dataclass(frozen=True)
class Estimate:
    """Shift/replicate-averaged estimate with its standard error."""

    mean: float
    stderr: float
    l: int
    n: int
    method: Method
    seconds: float


@dataclass(frozen=True)
class StudyRow:
    n: int
    method: Method
    target: Target
    mean: float
    stderr: float
    seconds: float


def _map_indexed(fn, count: int, threads: int) -> list:
    """fn(0..count-1) in index order; thread pool only changes wall time."""
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(threads, count)) as ex:
        return list(ex.map(fn, range(count)))


def _mean_stderr(per_shift: np.ndarray) -> tuple[float, float]:
    l = per_shift.size
    mean = float(np.mean(per_shift))
    var = float(np.sum((per_shift - mean) ** 2)) / (l * (l - 1))
    return mean, math.sqrt(var)


def _gaussian_block(rule: LatticeRule, shift: np.ndarray, start: int, stop: int) -> np.ndarray:
    pts = point_block(rule, shift, start, stop)
    pts[pts == 0.0] = _U_FLOOR
    return inverse_normal_cdf(pts)


def _qmc_shift_means(integrand, rule: LatticeRule, shifts: np.ndarray, threads: int) -> np.ndarray:
    def one(i: int) -> float:
        total = 0.0
        for k0 in range(0, rule.n, _CHUNK):
            y = _gaussian_block(rule, shifts[i], k0, min(k0 + _CHUNK, rule.n))
            total += float(np.sum(integrand(y)))
        return total / rule.n

    return np.array(_map_indexed(one, shifts.shape[0], threads))


def _mc_replicate_means(integrand, dim: int, n: int, l: int, seed: int, threads: int) -> np.ndarray:
    def one(i: int) -> float:
        rng = mc_stream(seed, i)
        total = 0.0
        for k0 in range(0, n, _CHUNK):
            y = rng.standard_normal((min(k0 + _CHUNK, n) - k0, dim))
            total += float(np.sum(integrand(y)))
        return total / n

    return np.array(_map_indexed(one, l, threads))


def _preint_integrand(target: Target, params: MarketParams, factor: BrownianFactor):
    def integrand(y: np.ndarray) -> np.ndarray:
        return preint_batch(factor, params, target, y)

    return integrand


def _plain_integrand(target: Target, params: MarketParams, factor: BrownianFactor):
    """Full-dimensional integrand; the Dirac target cannot be evaluated."""
    if target.kind is TargetKind.PDF:
        raise ValueError("plain MC/QMC cannot evaluate the pdf target")

    if target.kind is TargetKind.PRICE:
        def integrand(y: np.ndarray) -> np.ndarray:
            return np.maximum(target.x - phi(factor, params, y), 0.0)
    else:
        def integrand(y: np.ndarray) -> np.ndarray:
            return (phi(factor, params, y) <= target.x).astype(np.float64)

    return integrand


def _finish(target, params, per_shift, n, l, method, t0) -> Estimate:
    mean, stderr = _mean_stderr(per_shift)
    if target.kind is TargetKind.PRICE:
        disc = math.exp(-params.r * params.t_expiry)
        mean *= disc
        stderr *= disc
    return Estimate(mean=mean, stderr=stderr, l=l, n=n, method=method,
                    seconds=time.perf_counter() - t0)


def qmc_preint_estimate(
    target: Target,
    params: MarketParams,
    factor: BrownianFactor,
    rule: LatticeRule,
    l: int,
    seed: int,
    threads: int = 1,
) -> Estimate:
    """Randomly shifted lattice rule applied to the preintegrated integrand."""
    if l < 2:
        raise ValueError(f"need at least 2 shifts, got {l}")
    if rule.d != params.d:
        raise ValueError(f"rule dimension {rule.d} != d={params.d}")
    t0 = time.perf_counter()
    shifts = sample_shifts(l, params.d, seed)
    q = _qmc_shift_means(_preint_integrand(target, params, factor), rule, shifts, threads)
    return _finish(target, params, q, rule.n, l, Method.QMC_PREINT, t0)


def mc_preint_estimate(
    target: Target,
    params: MarketParams,
    factor: BrownianFactor,
    total_points: int,
    l: int,
    seed: int,
    threads: int = 1,
) -> Estimate:
    """Monte Carlo on the preintegrated integrand, l replicates of n points."""
    if l < 2:
        raise ValueError(f"need at least 2 replicates, got {l}")
    if total_points % l:
        raise ValueError(f"total_points={total_points} not divisible by l={l}")
    n = total_points // l
    t0 = time.perf_counter()
    q = _mc_replicate_means(_preint_integrand(target, params, factor),
                            params.d, n, l, seed, threads)
    return _finish(target, params, q, n, l, Method.MC_PREINT, t0)


def qmc_estimate(
    target: Target,
    params: MarketParams,
    factor: BrownianFactor,
    rule: LatticeRule,
    l: int,
    seed: int,
    threads: int = 1,
) -> Estimate:
    """Plain QMC on the full (d+1)-dimensional integrand (price/cdf only)."""
    if l < 2:
        raise ValueError(f"need at least 2 shifts, got {l}")
    if rule.d != params.m:
        raise ValueError(f"rule dimension {rule.d} != m={params.m}")
    t0 = time.perf_counter()
    shifts = sample_shifts(l, params.m, seed)
    q = _qmc_shift_means(_plain_integrand(target, params, factor), rule, shifts, threads)
    return _finish(target, params, q, rule.n, l, Method.QMC, t0)


def mc_estimate(
    target: Target,
    params: MarketParams,
    factor: BrownianFactor,
    total_points: int,
    l: int,
    seed: int,
    threads: int = 1,
) -> Estimate:
    """Plain Monte Carlo on the full integrand (price/cdf only)."""
    if l < 2:
        raise ValueError(f"need at least 2 replicates, got {l}")
    if total_points % l:
        raise ValueError(f"total_points={total_points} not divisible by l={l}")
    n = total_points // l
    t0 = time.perf_counter()
    q = _mc_replicate_means(_plain_integrand(target, params, factor),
                            params.m, n, l, seed, threads)
    return _finish(target, params, q, n, l, Method.MC, t0)


def extended_product_weights(factor: BrownianFactor) -> np.ndarray:
    """Product weights for the full-dimensional plain-QMC rule: the same
    per-coordinate formula extended to include the leading coordinate."""
    return factor.lam ** (4.0 / 3.0)


def _rule_cache_path(cache_dir, n: int, dim: int, gamma: np.ndarray) -> Path:
    tag = hashlib.sha256(np.ascontiguousarray(gamma, dtype=np.float64).tobytes()).hexdigest()[:10]
    return Path(cache_dir) / f"gv_n{n}_d{dim}_{tag}.txt"


def study_rule(n: int, dim: int, gamma: np.ndarray, gv_cache=None) -> LatticeRule:
    """CBC rule of the given dimension, read from/written to the cache dir."""
    if dim == 0:
        return trivial_rule(n)
    if gv_cache is not None:
        path = _rule_cache_path(gv_cache, n, dim, gamma[:dim])
        if path.exists():
            try:
                rule = load_rule(path)
                if rule.n == n and rule.d == dim:
                    return rule
            except (ValueError, OSError):
                pass  # stale or foreign file: rebuild below
    rule = cbc_construct(dim, n, gamma)
    if gv_cache is not None:
        Path(gv_cache).mkdir(parents=True, exist_ok=True)
        save_rule(rule, path)
    return rule


def _row_seed(seed: int, method: Method, n: int) -> int:
    """Independent deterministic substream per (method, modulus) row."""
    order = list(Method).index(method)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(2, order, n))
    return int(ss.generate_state(1, np.uint64)[0])


def default_methods(target: Target) -> tuple[Method, ...]:
    if target.kind is TargetKind.PDF:
        return (Method.MC_PREINT, Method.QMC_PREINT)
    return (Method.MC, Method.QMC, Method.MC_PREINT, Method.QMC_PREINT)


def convergence_study(
    target: Target,
    params: MarketParams,
    n_ladder,
    l: int,
    seed: int,
    methods=None,
    gv_cache=None,
    threads: int = 1,
    factor: BrownianFactor | None = None,
    progress=None,
) -> list[StudyRow]:
    """One row per (modulus, method), in deterministic order.

    Rules are constructed (or loaded from ``gv_cache``) per modulus: a
    d-dimensional rule for the preintegrated estimator and a (d+1)-dimensional
    rule for plain QMC.  ``progress`` may be a callable receiving each
    completed row.
    """
    ladder = [int(n) for n in n_ladder]
    if not ladder:
        raise ValueError("ladder must be nonempty")
    for n in ladder:
        if not is_prime(n):
            raise ValueError(f"ladder entries must be prime, got {n}")
    if methods is None:
        methods = default_methods(target)
    methods = tuple(Method(m) for m in methods)
    if target.kind is TargetKind.PDF and (Method.MC in methods or Method.QMC in methods):
        raise ValueError("plain MC/QMC cannot evaluate the pdf target")
    if factor is None:
        factor = pca_factor(params)
    gamma_preint = product_weights(factor).product_factors if params.d >= 1 else np.zeros(0)
    gamma_plain = extended_product_weights(factor)

    rows: list[StudyRow] = []
    for n in ladder:
        rule_d = None
        rule_full = None
        if Method.QMC_PREINT in methods:
            rule_d = study_rule(n, params.d, gamma_preint, gv_cache)
        if Method.QMC in methods:
            rule_full = study_rule(n, params.m, gamma_plain, gv_cache)
        for method in methods:
            rseed = _row_seed(seed, method, n)
            if method is Method.QMC_PREINT:
                est = qmc_preint_estimate(target, params, factor, rule_d, l, rseed, threads)
            elif method is Method.QMC:
                est = qmc_estimate(target, params, factor, rule_full, l, rseed, threads)
            elif method is Method.MC_PREINT:
                est = mc_preint_estimate(target, params, factor, l * n, l, rseed, threads)
            else:
                est = mc_estimate(target, params, factor, l * n, l, rseed, threads)
            row = StudyRow(n=n, method=method, target=target,
                           mean=est.mean, stderr=est.stderr, seconds=est.seconds)
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows


@dataclass(frozen=True)
class PdfCurve:
    """Density estimates at Chebyshev nodes plus a barycentric interpolant."""

    nodes: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    n: int
    l: int
    seconds: float
    _interp: BarycentricInterpolator

    def __call__(self, x):
        out = self._interp(np.asarray(x, dtype=np.float64))
        return float(out) if np.ndim(x) == 0 else out


def fit_barycentric(nodes, values) -> BarycentricInterpolator:
    return BarycentricInterpolator(np.asarray(nodes, float), np.asarray(values, float))


def chebyshev_nodes(x_lo: float, x_hi: float, count: int) -> np.ndarray:
    """Chebyshev points of the second kind mapped to [x_lo, x_hi], ascending."""
    j = np.arange(count)
    mid = 0.5 * (x_lo + x_hi)
    half = 0.5 * (x_hi - x_lo)
    return mid - half * np.cos(np.pi * j / (count - 1))


def pdf_curve(
    params: MarketParams,
    factor: BrownianFactor,
    x_lo: float,
    x_hi: float,
    node_count: int,
    rule: LatticeRule,
    l: int,
    seed: int,
    threads: int = 1,
) -> PdfCurve:
    """QMC+preintegration density estimates at Chebyshev nodes.

    The exponent parts of each lattice point are computed once per shift and
    shared across all nodes, so the sweep costs little more than a single
    density estimate plus one root solve per node.
    """
    if not x_lo < x_hi:
        raise ValueError("need x_lo < x_hi")
    if node_count < 2:
        raise ValueError("need at least 2 nodes")
    if l < 2:
        raise ValueError(f"need at least 2 shifts, got {l}")
    if rule.d != params.d:
        raise ValueError(f"rule dimension {rule.d} != d={params.d}")
    t0 = time.perf_counter()
    nodes = chebyshev_nodes(x_lo, x_hi, node_count)
    targets = [Target.pdf(float(x)) for x in nodes]
    shifts = sample_shifts(l, params.d, seed)

    def one(i: int) -> np.ndarray:
        sums = np.zeros(node_count)
        for k0 in range(0, rule.n, _CHUNK):
            y = _gaussian_block(rule, shifts[i], k0, min(k0 + _CHUNK, rule.n))
            parts = exponent_parts(factor, params, y)
            for j, tgt in enumerate(targets):
                sums[j] += float(np.sum(preint_from_parts(factor, params, tgt, parts)))
        return sums / rule.n

    per_shift = np.array(_map_indexed(one, l, threads))  # (l, nodes)
    means = per_shift.mean(axis=0)
    stderrs = np.sqrt(((per_shift - means) ** 2).sum(axis=0) / (l * (l - 1)))
    return PdfCurve(nodes=nodes, means=means, stderrs=stderrs, n=rule.n, l=l,
                    seconds=time.perf_counter() - t0,
                    _interp=fit_barycentric(nodes, means))


# ---------------------------------------------------------------------------
# Output records (one source of truth for CSV and JSON)
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _record(method: Method, target: Target, params: MarketParams, n: int, l: int,
            mean: float, stderr: float, seconds: float, timing: bool) -> dict:
    return {
        "method": method.value,
        "target": target.kind.value,
        "x": float(target.x),
        "m": int(params.m),
        "N": int(n),
        "L": int(l),
        "mean": float(mean),
        "stderr": float(stderr),
        "seconds": float(seconds) if timing else 0.0,
    }


def estimate_records(est: Estimate, target: Target, params: MarketParams,
                     timing: bool = False) -> list[dict]:
    return [_record(est.method, target, params, est.n, est.l,
                    est.mean, est.stderr, est.seconds, timing)]


def study_records(rows, params: MarketParams, l: int, timing: bool = False) -> list[dict]:
    return [_record(r.method, r.target, params, r.n, l,
                    r.mean, r.stderr, r.seconds, timing) for r in rows]


def curve_records(curve: PdfCurve, params: MarketParams, timing: bool = False) -> list[dict]:
    return [
        _record(Method.QMC_PREINT, Target.pdf(float(x)), params, curve.n, curve.l,
                m, s, curve.seconds, timing)
        for x, m, s in zip(curve.nodes, curve.means, curve.stderrs)
    ]


def write_csv(records, fh) -> None:
    """Exact schema: method,target,x,m,N,L,mean,stderr,seconds with floats at
    17 significant digits."""
    fh.write(CSV_HEADER + "\n")
    for r in records:
        fh.write(
            f"{r['method']},{r['target']},{_fmt(r['x'])},{r['m']},{r['N']},{r['L']},"
            f"{_fmt(r['mean'])},{_fmt(r['stderr'])},{_fmt(r['seconds'])}\n"
        )


def write_json(records, fh) -> None:
    json.dump(records, fh, indent=2)
    fh.write("\n")
