"""Weight parameters for the lattice construction.

Two families are provided: the simplified product weights used by the
numerical experiments (per-dimension factors lam_j^(4/3)), and the
theoretically optimal product-and-order-dependent (POD) weights derived from
the norm bounds of the preintegrated integrands.  The POD route needs a
handful of constants (Hermite-density suprema, exponential-weight integrals,
a zeta value) which are computed here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.optimize import golden

from .model import BrownianFactor
from .preintegrate import Target, TargetKind, normal_cdf, normal_pdf

__all__ = [
    "WeightSpec",
    "ThetaKind",
    "TheoryConstants",
    "product_weights",
    "kappa_beta",
    "b_constant",
    "theory_constants",
    "pod_weights",
    "riemann_zeta",
    "psi",
]

BETA_MAX = 10


class ThetaKind(str, Enum):
    """Form of the smooth factor multiplying the indicator."""

    ONE = "One"
    X_MINUS_PHI = "XMinusPhi"


@dataclass(frozen=True)
class WeightSpec:
    """Per-subset weights gamma_eta, either product or POD form.

    Product kind: gamma_eta = prod_{eta_i != 0} product_factors[i-1].

    Pod kind: gamma_eta = (A_eta / scale^|eta|)^exponent where A_eta is a sum
    of POD components, stored in log form as
    A_eta = sum_c exp(log_order[c, |eta|] + sum_{eta_i != 0} log_dim[c, i-1]).
    Log storage keeps high orders finite as long as the final weight is
    representable.
    """

    kind: str  # "product" | "pod"
    product_factors: np.ndarray | None = None
    log_order: np.ndarray | None = None  # (components, max_order + 1)
    log_dim: np.ndarray | None = None    # (components, d)
    scale: float = 1.0
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind == "product":
            f = np.asarray(self.product_factors, dtype=np.float64)
            if f.ndim != 1 or not np.all(np.isfinite(f)) or np.any(f <= 0):
                raise ValueError("product factors must be positive and finite")
            object.__setattr__(self, "product_factors", f)
        elif self.kind == "pod":
            lo = np.atleast_2d(np.asarray(self.log_order, dtype=np.float64))
            ld = np.atleast_2d(np.asarray(self.log_dim, dtype=np.float64))
            if lo.shape[0] != ld.shape[0]:
                raise ValueError("order/dim component counts differ")
            object.__setattr__(self, "log_order", lo)
            object.__setattr__(self, "log_dim", ld)
            if not (self.scale > 0 and self.exponent > 0):
                raise ValueError("scale and exponent must be positive")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")

    @property
    def d(self) -> int:
        if self.kind == "product":
            return len(self.product_factors)
        return self.log_dim.shape[1]

    @property
    def max_order(self) -> int:
        """Largest |eta| for which a POD weight can be queried."""
        if self.kind == "product":
            return self.d
        return self.log_order.shape[1] - 1

    def weight(self, eta) -> float:
        """gamma_eta for a 0/1 multi-index of length d (empty product = 1)."""
        eta = np.asarray(eta)
        if eta.shape != (self.d,):
            raise ValueError(f"eta must have length {self.d}")
        mask = eta != 0
        if self.kind == "product":
            return float(np.prod(self.product_factors[mask]))
        order = int(mask.sum())
        if order > self.max_order:
            raise ValueError(
                f"|eta|={order} exceeds the tabulated order {self.max_order}"
            )
        logs = self.log_order[:, order] + self.log_dim[:, mask].sum(axis=1)
        top = logs.max()
        if top == -np.inf:
            return 0.0
        log_a = top + math.log(np.exp(logs - top).sum())
        return math.exp(self.exponent * (log_a - order * math.log(self.scale)))

    def singleton_factors(self) -> np.ndarray:
        """gamma_{e_j} for j = 1..d (used to project POD onto product form)."""
        if self.kind == "product":
            return self.product_factors.copy()
        eye = np.eye(self.d, dtype=np.int64)
        return np.array([self.weight(eye[j]) for j in range(self.d)])


def product_weights(factor: BrownianFactor) -> WeightSpec:
    """Simplified product weights gamma_j = lam_j^(4/3), j = 1..d."""
    if factor.d < 1:
        raise ValueError("product weights need d >= 1")
    return WeightSpec(kind="product", product_factors=factor.lam[1:] ** (4.0 / 3.0))


def _hermite_rho(beta: int, v: np.ndarray) -> np.ndarray:
    """|He_beta(v)| * rho(v) via the probabilist's Hermite recurrence."""
    he_prev = np.zeros_like(v)
    he = np.ones_like(v)
    for b in range(beta):
        he, he_prev = v * he - b * he_prev, he
    return np.abs(he) * normal_pdf(v)


@lru_cache(maxsize=None)
def kappa_beta(beta: int, beta_max: int = BETA_MAX) -> float:
    """Supremum of |He_beta| * rho over the reals.

    Located by a dense grid scan on [-20, 20] (step 1e-3) refined by
    golden-section search to 1e-10.
    """
    if not (0 <= beta <= beta_max):
        raise ValueError(f"beta must lie in [0, {beta_max}], got {beta}")
    grid = np.arange(-20.0, 20.0 + 5e-4, 1e-3)
    vals = _hermite_rho(beta, grid)
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    try:
        vstar = golden(lambda v: -_hermite_rho(beta, np.array([v]))[0],
                       brack=(a, grid[i], b), tol=1e-10)
        refined = _hermite_rho(beta, np.array([vstar]))[0]
    except ValueError:  # degenerate bracket; the grid value is already the sup
        refined = vals[i]
    return float(max(vals[i], refined))


def _omega_q(theta: ThetaKind, q: int, x_range: tuple[float, float]) -> float:
    """Threshold-power bound sup_{x in [a,b]} x^(m_theta - q)."""
    a, b = x_range
    if theta is ThetaKind.ONE:
        if q == 0:
            return 1.0
        if a <= 0:
            raise ValueError("x-range lower bound must be > 0 for this case")
        return 1.0 / a
    if q == 1:
        return 1.0
    return b


def b_constant(
    q: int,
    eta,
    theta: ThetaKind,
    x_range: tuple[float, float],
    factor: BrownianFactor,
) -> float:
    """Square-integral bound for the chain-rule terms of the preintegrand.

    ``eta`` is a 0/1 multi-index over the d post-preintegration dimensions;
    ``q`` is 0 for indicator-type targets and 1 for the density target.
    Requires |eta| + q >= 1.
    """
    eta = np.asarray(eta)
    if eta.shape != (factor.d,):
        raise ValueError(f"eta must have length d={factor.d}")
    if q not in (0, 1):
        raise ValueError("q must be 0 or 1")
    order = int(np.count_nonzero(eta))
    if order + q < 1:
        raise ValueError("|eta| + q must be >= 1")
    kmax = max(kappa_beta(b) for b in range(order + q))
    lam0 = float(factor.lam[0])
    base = (
        kmax
        * _omega_q(theta, q, x_range)
        * (2 * factor.d + 3) ** (2 * order + 2 * q - 1)
        / min(lam0, 1.0) ** (order + q)
        * float(np.prod(factor.lam[1:] ** eta))
    )
    return base * base


@dataclass(frozen=True)
class TheoryConstants:
    """Precomputed constants feeding the POD weights.

    kappa[beta] are the Hermite-density suprema; i1[i] and i2[i] are the
    exponential moments of the Gaussian and of the exponential weight
    functions (i2[0] diverges and is stored as inf); x_range is the threshold
    interval [a, b]; c2 is the user-supplied construction constant (there is
    no paper-backed numeric value, so it defaults to 1.0 and only sets the
    scale profile across orders).
    """

    kappa: np.ndarray
    lam: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    lambda0: float
    z_mean: float
    delta: float
    c2: float
    x_range: tuple[float, float]

    def omega(self, theta: ThetaKind, q: int) -> float:
        return _omega_q(theta, q, self.x_range)

    def b(self, q: int, eta, theta: ThetaKind, factor: BrownianFactor) -> float:
        return b_constant(q, eta, theta, self.x_range, factor)


def theory_constants(
    factor: BrownianFactor,
    x_range: tuple[float, float],
    delta: float = 0.25,
    c2: float = 1.0,
    beta_max: int = BETA_MAX,
) -> TheoryConstants:
    if not (0.0 < delta < 0.5):
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if not (np.isfinite(c2) and c2 > 0):
        raise ValueError(f"c2 must be finite and > 0, got {c2}")
    lam = factor.lam
    i1 = 2.0 * np.exp(2.0 * lam * lam) * normal_cdf(2.0 * lam)
    i = np.arange(len(lam))
    with np.errstate(divide="ignore"):
        i2 = 1.0 + 1.0 / (2.0 * i)
    return TheoryConstants(
        kappa=np.array([kappa_beta(b, beta_max) for b in range(beta_max + 1)]),
        lam=lam.copy(),
        i1=np.asarray(i1),
        i2=i2,
        lambda0=float(lam[0]),
        z_mean=factor.z_mean,
        delta=delta,
        c2=c2,
        x_range=(float(x_range[0]), float(x_range[1])),
    )


def riemann_zeta(s: float) -> float:
    """zeta(s) for s > 1 by direct series with an Euler-Maclaurin tail."""
    if not s > 1.0:
        raise ValueError(f"zeta requires s > 1, got {s}")
    n = 100
    k = np.arange(1, n)
    head = float(np.sum(k ** (-s)))
    tail = (
        n ** (1.0 - s) / (s - 1.0)
        + 0.5 * n**-s
        + s / 12.0 * n ** (-s - 1.0)
        - s * (s + 1) * (s + 2) / 720.0 * n ** (-s - 3.0)
        + s * (s + 1) * (s + 2) * (s + 3) * (s + 4) / 30240.0 * n ** (-s - 5.0)
    )
    return head + tail


def _log_b_order(q: int, order: int, theta: ThetaKind, constants: TheoryConstants) -> float:
    """log of the eta-independent part of the B constant at |eta| = order."""
    d = len(constants.lam) - 1
    kmax = float(constants.kappa[: order + q].max())
    lam0 = constants.lambda0
    base = (
        math.log(kmax)
        + math.log(constants.omega(theta, q))
        + (2 * order + 2 * q - 1) * math.log(2 * d + 3)
        - (order + q) * math.log(min(lam0, 1.0))
    )
    return 2.0 * base


def pod_weights(
    target: Target, constants: TheoryConstants, factor: BrownianFactor
) -> WeightSpec:
    """Optimal POD weights for the given target.

    cdf and pdf targets have exactly POD norm coefficients; the price target
    has a two-component sum, stored componentwise so that specific weights
    are evaluated exactly rather than through a majorant.  Orders above the
    kappa table (|eta| + q - 1 > beta_max) are not representable and raise on
    query.
    """
    d = factor.d
    if d < 1:
        raise ValueError("pod weights need d >= 1")
    delta = constants.delta
    p = 2.0 * (1.0 - delta) / (3.0 - 2.0 * delta)
    scale = 2.0 * constants.c2 * riemann_zeta(1.0 + delta)
    lam = constants.lam
    q = 1 if target.kind is TargetKind.PDF else 0
    theta = ThetaKind.X_MINUS_PHI if target.kind is TargetKind.PRICE else ThetaKind.ONE
    max_order = min(d, BETA_MAX + 1 - q)

    log8 = math.log(8.0)

    if target.kind is TargetKind.CDF:
        log_order = np.full((1, max_order + 1), -np.inf)
        log_order[0, 0] = 0.0  # A_0 = 1
        for ell in range(1, max_order + 1):
            log_order[0, ell] = (
                2.0 * ((ell - 1) * log8 + math.lgamma(ell))
                + _log_b_order(0, ell, theta, constants)
            )
        log_dim = 2.0 * np.log(lam[1:])[None, :]
    elif target.kind is TargetKind.PDF:
        log_order = np.empty((1, max_order + 1))
        for ell in range(max_order + 1):
            log_order[0, ell] = (
                2.0 * (ell * log8 + math.lgamma(ell + 1))
                + _log_b_order(1, ell, theta, constants)
            )
        log_dim = 2.0 * np.log(lam[1:])[None, :]
    else:
        # Price: smooth-factor component plus the boundary component.
        log_i1_all = float(np.log(constants.i1).sum())
        const = math.log(2.0) + 2.0 * math.log(constants.z_mean) + log_i1_all
        log_order = np.full((2, max_order + 1), -np.inf)
        log_order[0, :] = const
        for ell in range(1, max_order + 1):
            log_order[1, ell] = (
                math.log(2.0)
                + 2.0 * ((ell - 1) * log8 + math.lgamma(ell))
                + _log_b_order(0, ell, theta, constants)
            )
        log_dim = np.vstack([
            2.0 * np.log(lam[1:]) + np.log(constants.i2[1:]) - np.log(constants.i1[1:]),
            2.0 * np.log(lam[1:]),
        ])
    return WeightSpec(
        kind="pod", log_order=log_order, log_dim=log_dim, scale=scale, exponent=p
    )


def psi(factor: BrownianFactor, y) -> np.ndarray:
    """Exponential weight density lam_0 exp(-2 lam_0 |y|) (same for every i)."""
    lam0 = float(factor.lam[0])
    y = np.asarray(y, dtype=np.float64)
    return lam0 * np.exp(-2.0 * lam0 * np.abs(y))
