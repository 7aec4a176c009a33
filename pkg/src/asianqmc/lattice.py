"""Rank-1 lattice rules: CBC construction, shifted points, Gaussian map.

Generating vectors are constructed component by component against the
shift-averaged squared worst-case error with the standard shift-invariant
cube kernel omega(t) = 2 pi^2 (t^2 - t + 1/6).  The modulus is restricted to
primes, which makes every candidate coprime and lets the fast construction
reindex the kernel matrix through a primitive root into a circulant that is
convolved by FFT (O(d n log n)); a direct O(d n^2) scan is kept as the
reference path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .weights import WeightSpec

__all__ = [
    "LatticeRule",
    "ShiftedPointSet",
    "omega_kernel",
    "is_prime",
    "primitive_root",
    "criterion",
    "cbc_construct",
    "trivial_rule",
    "generate_points",
    "point_block",
    "sample_shifts",
    "shift_stream",
    "mc_stream",
    "inverse_normal_cdf",
    "save_rule",
    "load_rule",
]

# Substream tags for the splittable counter-based generator: shifts are drawn
# from (seed, (STREAM_SHIFT, shift_index)), Monte Carlo replicates from
# (seed, (STREAM_MC, replicate_index)).
STREAM_SHIFT = 0
STREAM_MC = 1

_TWO_PI_SQ = 2.0 * np.pi**2


def omega_kernel(t):
    """Shift-invariant kernel 2 pi^2 (t^2 - t + 1/6) on [0, 1)."""
    t = np.asarray(t, dtype=np.float64)
    return _TWO_PI_SQ * (t * t - t + 1.0 / 6.0)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def primitive_root(n: int) -> int:
    """Smallest primitive root of the prime n (1 for n = 2)."""
    if n == 2:
        return 1
    phi = n - 1
    factors = []
    rem = phi
    f = 2
    while f * f <= rem:
        if rem % f == 0:
            factors.append(f)
            while rem % f == 0:
                rem //= f
        f += 1
    if rem > 1:
        factors.append(rem)
    for g in range(2, n):
        if all(pow(g, phi // p, n) != 1 for p in factors):
            return g
    raise ValueError(f"no primitive root found; is {n} prime?")


@dataclass(frozen=True)
class LatticeRule:
    """Rank-1 rule: prime modulus n, generating vector z, criterion value.

    ``gamma`` records the per-dimension product weights the rule was built
    for (None when loaded from a cache file, which does not store weights).
    """

    n: int
    z: np.ndarray
    criterion_value: float
    gamma: np.ndarray | None = None

    def __post_init__(self):
        if not is_prime(self.n):
            raise ValueError(f"modulus must be prime, got {self.n}")
        z = np.array(self.z, dtype=np.int64, copy=True)
        if z.ndim != 1:
            raise ValueError("z must be a vector")
        if z.size and (z.min() < 1 or z.max() > self.n - 1):
            raise ValueError("entries of z must lie in {1, ..., n-1}")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        if not (np.isfinite(self.criterion_value) and self.criterion_value >= 0):
            raise ValueError("criterion_value must be finite and >= 0")
        if self.gamma is not None:
            g = np.asarray(self.gamma, dtype=np.float64)
            g.setflags(write=False)
            object.__setattr__(self, "gamma", g)

    @property
    def d(self) -> int:
        return int(self.z.size)


@dataclass(frozen=True)
class ShiftedPointSet:
    """Lattice points {k z / n + shift} in [0, 1)^d."""

    points: np.ndarray
    shift: np.ndarray
    seed: int | None = None


def _product_criterion(z, n, gamma) -> float:
    k = np.arange(n, dtype=np.int64)
    prod = np.ones(n)
    for zj, gj in zip(z, gamma):
        prod *= 1.0 + gj * omega_kernel(((k * int(zj)) % n) / n)
    return max(float(prod.mean() - 1.0), 0.0)


def _pod_component_criterion(z, n, order_factors, dim_factors) -> float:
    """Shift-averaged criterion for one POD family via the elementary
    symmetric polynomial recurrence (O(d^2 n))."""
    d = len(z)
    k = np.arange(n, dtype=np.int64)
    e = np.zeros((d + 1, n))
    e[0] = 1.0
    for j in range(d):
        w = dim_factors[j] * omega_kernel(((k * int(z[j])) % n) / n)
        for ell in range(min(j + 1, d), 0, -1):
            e[ell] += w * e[ell - 1]
    total = np.zeros(n)
    for ell in range(1, d + 1):
        total += order_factors[ell] * e[ell]
    return max(float(total.mean()), 0.0)


def criterion(z, n: int, gamma) -> float:
    """Shift-averaged squared worst-case error E^2(z) of a rank-1 rule.

    ``gamma`` is either a per-dimension array of product weights or a
    :class:`~asianqmc.weights.WeightSpec`.  POD specs are evaluated through
    their componentwise POD form (for multi-component specs this is the
    order-exact majorant obtained by summing the component criteria).
    """
    if not is_prime(n):
        raise ValueError(f"modulus must be prime, got {n}")
    z = np.asarray(z, dtype=np.int64)
    if z.size and (z.min() < 1 or z.max() > n - 1):
        raise ValueError("entries of z must lie in {1, ..., n-1}")
    if isinstance(gamma, WeightSpec):
        if gamma.d < z.size:
            raise ValueError("weight spec has fewer dimensions than z")
        if gamma.kind == "product":
            return _product_criterion(z, n, gamma.product_factors[: z.size])
        if z.size > gamma.max_order:
            raise ValueError("POD spec does not tabulate enough orders")
        total = 0.0
        p = gamma.exponent
        for c in range(gamma.log_order.shape[0]):
            ells = np.arange(z.size + 1)
            ordf = np.exp(p * (gamma.log_order[c, : z.size + 1]
                               - ells * np.log(gamma.scale)))
            dimf = np.exp(p * gamma.log_dim[c, : z.size])
            total += _pod_component_criterion(z, n, ordf, dimf)
        return total
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(gamma < 0) or not np.all(np.isfinite(gamma)):
        raise ValueError("weights must be nonnegative and finite")
    if gamma.size < z.size:
        raise ValueError("need one weight per dimension")
    return _product_criterion(z, n, gamma[: z.size])


def _candidate_scores_fft(p, n, perm, fw, omega_grid):
    """T(z) = sum_k omega({k z / n}) p_k for every candidate z, via FFT."""
    m = n - 1
    q = p[perm]
    qhat = np.concatenate((q[:1], q[1:][::-1]))
    conv = np.fft.irfft(fw * np.fft.rfft(qhat), m)
    scores = np.empty(n)
    scores[perm] = conv + omega_grid[0] * p[0]
    return scores[1:]  # index z-1 -> T(z)


def _candidate_scores_direct(p, n, omega_grid):
    k = np.arange(n, dtype=np.int64)
    zs = np.arange(1, n, dtype=np.int64)
    idx = (zs[:, None] * k[None, :]) % n
    return omega_grid[idx] @ p


def cbc_construct(d: int, n: int, gamma, method: str = "auto") -> LatticeRule:
    """Component-by-component construction with product weights.

    For each component s the candidate minimising the criterion with the
    previous components fixed is chosen, ties broken by the smallest
    candidate.  The kernel symmetry omega(t) = omega(1 - t) makes z and n - z
    exactly equivalent, so candidates are folded in pairs and the first
    component (for which all candidates generate the same point set) is fixed
    to 1 outright.  The stored criterion value is recomputed through the
    direct path, which is also what :func:`criterion` returns.

    method: "fft" (default via "auto"), or "direct" for the O(d n^2)
    reference scan.
    """
    if d < 1:
        raise ValueError("cbc_construct needs d >= 1 (use trivial_rule for d = 0)")
    if not is_prime(n) or n < 3:
        raise ValueError(f"modulus must be a prime >= 3, got {n}")
    if isinstance(gamma, WeightSpec):
        if gamma.kind != "product":
            raise ValueError("CBC construction accepts product weights only")
        gamma = gamma.product_factors
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.size < d:
        raise ValueError(f"need {d} weights, got {gamma.size}")
    if np.any(gamma < 0) or not np.all(np.isfinite(gamma)):
        raise ValueError("weights must be nonnegative and finite")
    if method == "auto":
        method = "fft"
    if method not in ("fft", "direct"):
        raise ValueError(f"unknown method {method!r}")

    omega_grid = omega_kernel(np.arange(n) / n)
    if method == "fft":
        perm = np.empty(n - 1, dtype=np.int64)
        g = primitive_root(n)
        acc = 1
        for t in range(n - 1):
            perm[t] = acc
            acc = (acc * g) % n
        fw = np.fft.rfft(omega_grid[perm])

    half = (n - 1) // 2
    p = np.ones(n)
    z = np.empty(d, dtype=np.int64)
    k = np.arange(n, dtype=np.int64)
    for s in range(d):
        if s == 0 or gamma[s] == 0.0:
            # Every candidate yields the same criterion: permutation
            # invariance for the first component, vanishing weight otherwise.
            zs = 1
        else:
            if method == "fft":
                scores = _candidate_scores_fft(p, n, perm, fw, omega_grid)
            else:
                scores = _candidate_scores_direct(p, n, omega_grid)
            folded = scores[:half] + scores[n - 2 : half - 1 : -1]
            zs = 1 + int(np.argmin(folded))
        z[s] = zs
        p *= 1.0 + gamma[s] * omega_grid[(k * zs) % n]
    return LatticeRule(n=n, z=z, criterion_value=criterion(z, n, gamma),
                       gamma=gamma[:d].copy())


def trivial_rule(n: int) -> LatticeRule:
    """Zero-dimensional rule (one timestep: nothing left to integrate)."""
    return LatticeRule(n=n, z=np.zeros(0, dtype=np.int64), criterion_value=0.0,
                       gamma=np.zeros(0))


def point_block(rule: LatticeRule, shift, start: int, stop: int) -> np.ndarray:
    """Rows start..stop-1 of the shifted point set, streamed without
    materialising the whole matrix."""
    shift = np.asarray(shift, dtype=np.float64)
    k = np.arange(start, stop, dtype=np.int64)
    pts = ((k[:, None] * rule.z[None, :]) % rule.n) / rule.n
    pts += shift
    pts %= 1.0
    return pts


def generate_points(rule: LatticeRule, shift, seed: int | None = None) -> ShiftedPointSet:
    """All n shifted lattice points {k z / n + shift} in [0, 1)^d."""
    shift = np.asarray(shift, dtype=np.float64)
    if shift.shape != (rule.d,):
        raise ValueError(f"shift must have length d={rule.d}")
    if shift.size and (shift.min() < 0.0 or shift.max() >= 1.0):
        raise ValueError("shift components must lie in [0, 1)")
    return ShiftedPointSet(points=point_block(rule, shift, 0, rule.n),
                           shift=shift.copy(), seed=seed)


def shift_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for shift number ``index`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(STREAM_SHIFT, index))
    return np.random.Generator(np.random.Philox(ss))


def mc_stream(seed: int, replicate: int) -> np.random.Generator:
    """Counter-based generator for MC replicate ``replicate`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(STREAM_MC, replicate))
    return np.random.Generator(np.random.Philox(ss))


def sample_shifts(l: int, d: int, seed: int) -> np.ndarray:
    """l independent uniform shifts in [0, 1)^d, one substream per shift."""
    if l < 1:
        raise ValueError(f"need l >= 1 shifts, got {l}")
    out = np.empty((l, d))
    for i in range(l):
        out[i] = shift_stream(seed, i).random(d)
    return out


def inverse_normal_cdf(u):
    """Standard normal quantile; domain error outside (0, 1)."""
    arr = np.asarray(u, dtype=np.float64)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError("inverse normal cdf requires u in (0, 1)")
    out = ndtri(arr)
    return float(out) if arr.ndim == 0 else out


def save_rule(rule: LatticeRule, path) -> None:
    """Write the plain-text cache format: 'n d' / z entries / criterion."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{rule.n} {rule.d}\n")
        fh.write(" ".join(str(int(v)) for v in rule.z) + "\n")
        fh.write(format(rule.criterion_value, ".17g") + "\n")


def load_rule(path) -> LatticeRule:
    """Read a cache file written by :func:`save_rule`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3:
        raise ValueError(f"malformed generating-vector file {path}")
    n, d = (int(v) for v in lines[0].split())
    z = np.array([int(v) for v in lines[1].split()], dtype=np.int64)
    if z.size != d:
        raise ValueError(f"expected {d} entries in {path}, found {z.size}")
    try:
        crit = float(lines[2])
    except ValueError:
        crit = float.fromhex(lines[2])
    return LatticeRule(n=n, z=z, criterion_value=crit)
