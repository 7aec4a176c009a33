"""Preintegration of the discontinuous integrands over the leading coordinate.

For fixed remaining coordinates y the average-price map is a strictly
increasing bijection of the leading Gaussian coordinate onto (0, inf), so the
discontinuity boundary xi(x, y) is the unique root of phi(., y) = x.  Once xi
is known, the integral over the leading coordinate has a closed form for each
of the three targets (price, cdf, pdf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

from .model import EXP_CLIP, BrownianFactor, MarketParams, phi

__all__ = [
    "Target",
    "TargetKind",
    "RootResult",
    "SolverFailure",
    "OracleFailure",
    "normal_cdf",
    "normal_pdf",
    "solve_xi",
    "preint_cdf",
    "preint_pdf",
    "preint_price",
    "preint_batch",
    "exponent_parts",
    "preint_from_parts",
    "reference_preintegrate",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Root solve: mixed absolute/relative residual target, bracket doubling cap,
# and Newton/bisection iteration cap.
ROOT_TOL = 1e-12
_MAX_DOUBLINGS = 60
_MAX_ITER = 100


class SolverFailure(RuntimeError):
    """Root refinement did not converge; carries the last bracket."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(message)
        self.bracket = bracket


class OracleFailure(RuntimeError):
    """The quadrature oracle could not reach its error target."""


class TargetKind(str, Enum):
    PRICE = "Price"
    CDF = "Cdf"
    PDF = "Pdf"


@dataclass(frozen=True)
class Target:
    """Which quantity is estimated, and at which threshold.

    For the price target ``x`` is the strike; for cdf/pdf it is the point at
    which the distribution/density is evaluated.
    """

    kind: TargetKind
    x: float

    @classmethod
    def price(cls, strike: float) -> "Target":
        return cls(TargetKind.PRICE, float(strike))

    @classmethod
    def cdf(cls, x: float) -> "Target":
        return cls(TargetKind.CDF, float(x))

    @classmethod
    def pdf(cls, x: float) -> "Target":
        return cls(TargetKind.PDF, float(x))


@dataclass(frozen=True)
class RootResult:
    """Solved boundary point and the map's leading derivative there."""

    xi: float
    dphi0_at_xi: float
    iterations: int


def normal_cdf(t):
    """Standard normal cdf through erfc, accurate in both tails."""
    return 0.5 * erfc(np.asarray(t, dtype=np.float64) / -_SQRT2)


def normal_pdf(t):
    t = np.asarray(t, dtype=np.float64)
    return _INV_SQRT_2PI * np.exp(-0.5 * t * t)


def exponent_parts(factor: BrownianFactor, params: MarketParams, y) -> np.ndarray:
    """Exponents of the average-price map with the leading coordinate left out.

    ``y`` is (n, d); the result B is (n, m) with
    phi(t, y) = (s0/m) sum_k exp(B[:, k] + sigma A[k, 0] t).
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if y.shape[1] != params.m - 1:
        raise ValueError(f"y must have d={params.m - 1} columns, got {y.shape[1]}")
    if params.m == 1:
        return np.broadcast_to(factor.drift, (y.shape[0], 1))
    return factor.drift + y @ factor.sigma_a[:, 1:].T


def _phi_dphi_at(b, a0, s0_over_m, t):
    """Value and leading derivative of the map at t (n,) given parts b (n, m)."""
    e = b + t[:, None] * a0
    np.clip(e, -EXP_CLIP, EXP_CLIP, out=e)
    np.exp(e, out=e)
    return s0_over_m * e.sum(axis=1), s0_over_m * (e @ a0)


def _solve_batch(b, a0, s0_over_m, x):
    """Vectorised safeguarded Newton for phi(t) = x on each row of ``b``.

    Brackets by doubling outward from 0 (start [-1, 1]), then iterates Newton
    steps that are demoted to bisection whenever they leave the bracket or
    fail to cut the residual by at least 10%.  Deterministic; raises
    SolverFailure carrying the last bracket if any point fails to converge.
    """
    n = b.shape[0]
    x = np.broadcast_to(np.asarray(x, dtype=np.float64), (n,))
    tol = ROOT_TOL * np.maximum(1.0, x)

    lo = np.full(n, -1.0)
    hi = np.full(n, 1.0)
    flo = _phi_dphi_at(b, a0, s0_over_m, lo)[0] - x
    fhi = _phi_dphi_at(b, a0, s0_over_m, hi)[0] - x
    for _ in range(_MAX_DOUBLINGS):
        left = np.flatnonzero(flo > 0.0)   # root lies left of lo
        right = np.flatnonzero(fhi < 0.0)  # root lies right of hi
        if left.size == 0 and right.size == 0:
            break
        if left.size:
            hi[left] = lo[left]
            fhi[left] = flo[left]
            lo[left] *= 2.0
            flo[left] = _phi_dphi_at(b[left], a0, s0_over_m, lo[left])[0] - x[left]
        if right.size:
            lo[right] = hi[right]
            flo[right] = fhi[right]
            hi[right] *= 2.0
            fhi[right] = _phi_dphi_at(b[right], a0, s0_over_m, hi[right])[0] - x[right]
    bad = np.flatnonzero((flo > 0.0) | (fhi < 0.0))
    if bad.size:
        j = int(bad[0])
        raise SolverFailure(
            f"no sign change after {_MAX_DOUBLINGS} doublings for {bad.size} point(s)",
            bracket=(float(lo[j]), float(hi[j])),
        )

    t = 0.5 * (lo + hi)
    fval, dval = _phi_dphi_at(b, a0, s0_over_m, t)
    f = fval - x
    iters = np.zeros(n, dtype=np.int64)
    active = np.abs(f) > tol
    for _ in range(_MAX_ITER):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        iters[ia] += 1
        # Tighten the bracket with the current iterate.
        pos = f[ia] > 0.0
        hi[ia[pos]] = t[ia[pos]]
        lo[ia[~pos]] = t[ia[~pos]]
        mid = 0.5 * (lo[ia] + hi[ia])
        with np.errstate(divide="ignore", invalid="ignore"):
            step = t[ia] - f[ia] / dval[ia]
        newton_ok = (step > lo[ia]) & (step < hi[ia]) & np.isfinite(step)
        cand = np.where(newton_ok, step, mid)
        cval, cder = _phi_dphi_at(b[ia], a0, s0_over_m, cand)
        fc = cval - x[ia]
        reject = newton_ok & (np.abs(fc) > 0.9 * np.abs(f[ia]))
        ir = np.flatnonzero(reject)
        if ir.size:
            sub = ia[ir]
            mval, mder = _phi_dphi_at(b[sub], a0, s0_over_m, mid[ir])
            cand[ir] = mid[ir]
            fc[ir] = mval - x[sub]
            cder[ir] = mder
        t[ia] = cand
        f[ia] = fc
        dval[ia] = cder
        active[ia] = np.abs(fc) > tol[ia]
    ia = np.flatnonzero(active)
    if ia.size:
        j = int(ia[0])
        raise SolverFailure(
            f"root refinement hit the {_MAX_ITER}-iteration cap for {ia.size} point(s)",
            bracket=(float(lo[j]), float(hi[j])),
        )
    return t, dval, iters


def solve_xi(factor: BrownianFactor, params: MarketParams, x: float, y) -> RootResult:
    """Solve the boundary phi(xi, y) = x for a single point ``y`` of length d.

    Raises ValueError for x <= 0 (the map is onto (0, inf)) and SolverFailure
    if refinement does not converge.
    """
    if not (np.isfinite(x) and x > 0):
        raise ValueError(f"x must be finite and > 0, got {x!r}")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    b = exponent_parts(factor, params, y[None, :])
    xi, dphi0, iters = _solve_batch(b, factor.sigma_a[:, 0], params.s0 / params.m, x)
    return RootResult(float(xi[0]), float(dphi0[0]), int(iters[0]))


def preint_from_parts(
    factor: BrownianFactor, params: MarketParams, target: Target, parts: np.ndarray
) -> np.ndarray:
    """Preintegrated values given precomputed exponent parts (n, m).

    Splitting this from :func:`preint_batch` lets callers that sweep the
    threshold x (the pdf curve) reuse one set of parts for every threshold.
    """
    n = parts.shape[0]
    x = target.x
    if x <= 0.0:
        # The boundary set is empty: the indicator never fires.
        return np.zeros(n)
    a0 = factor.sigma_a[:, 0]
    s0_over_m = params.s0 / params.m
    xi, dphi0, _ = _solve_batch(parts, a0, s0_over_m, x)
    if target.kind is TargetKind.CDF:
        return normal_cdf(xi)
    if target.kind is TargetKind.PDF:
        return normal_pdf(xi) / dphi0
    # Price: integrate (x - phi) against the Gaussian density up to xi.
    # Each exponential integrates to exp(a^2/2) Phi(xi - a).
    e = np.clip(parts, -EXP_CLIP, EXP_CLIP)
    c = s0_over_m * np.exp(e)
    terms = c * np.exp(0.5 * a0 * a0) * normal_cdf(xi[:, None] - a0)
    vals = x * normal_cdf(xi) - terms.sum(axis=1)
    return np.clip(vals, 0.0, x)


def preint_batch(
    factor: BrownianFactor, params: MarketParams, target: Target, ys
) -> np.ndarray:
    """Preintegrated integrand at each row of ``ys`` (n, d)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if target.x <= 0.0:
        return np.zeros(ys.shape[0])
    return preint_from_parts(factor, params, target, exponent_parts(factor, params, ys))


def preint_cdf(factor: BrownianFactor, params: MarketParams, x: float, y) -> float:
    """Conditional cdf value Phi(xi(x, y)); 0 for x <= 0."""
    if x <= 0.0:
        return 0.0
    r = solve_xi(factor, params, x, y)
    return float(normal_cdf(r.xi))


def preint_pdf(factor: BrownianFactor, params: MarketParams, x: float, y) -> float:
    """Conditional density value rho(xi) / D0 phi(xi, y); 0 for x <= 0."""
    if x <= 0.0:
        return 0.0
    r = solve_xi(factor, params, x, y)
    return float(normal_pdf(r.xi) / r.dphi0_at_xi)


def preint_price(factor: BrownianFactor, params: MarketParams, y) -> float:
    """Undiscounted conditional put value for strike params.strike; in [0, K]."""
    k = params.strike
    if k <= 0.0:
        return 0.0
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    return float(preint_batch(factor, params, Target.price(k), y)[0])


def reference_preintegrate(
    factor: BrownianFactor, params: MarketParams, target: Target, y
) -> float:
    """Adaptive-quadrature evaluation of the preintegrated integrand.

    Testing oracle for the closed forms (price and cdf targets only): the
    integral over (-inf, xi] is computed by adaptive quadrature on a mapped
    bounded interval with absolute tolerance 1e-12.
    """
    if target.kind not in (TargetKind.PRICE, TargetKind.CDF):
        raise ValueError(f"unsupported oracle target {target.kind}")
    x = target.x
    if x <= 0.0:
        return 0.0
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    r = solve_xi(factor, params, x, y)

    if target.kind is TargetKind.CDF:
        def integrand(t: float) -> float:
            return float(normal_pdf(t))
    else:
        def integrand(t: float) -> float:
            yfull = np.concatenate(([t], y))
            return (x - phi(factor, params, yfull)) * float(normal_pdf(t))

    out = quad(integrand, -np.inf, r.xi, epsabs=1e-12, epsrel=1e-12,
               limit=200, full_output=1)
    val, abserr = out[0], out[1]
    # quad appends a message when it could not meet the request; tolerate
    # pure roundoff-limit reports as long as the estimated error is below
    # the tolerance at which the oracle arbitrates.
    if len(out) > 3 and abserr > 1e-10:
        raise OracleFailure(f"quadrature error {abserr:.3e} too large: {out[3]}")
    return float(val)
