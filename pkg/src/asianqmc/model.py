"""Discretised Black-Scholes asset model with PCA path construction.

The Brownian covariance over a uniform time grid is factorised spectrally in
closed form, and the arithmetic-average price map and its mixed derivatives
are evaluated from that factor.  Everything here is precomputed once and then
treated as immutable, because the estimators evaluate the average-price map
millions of times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EXP_CLIP",
    "MarketParams",
    "BrownianFactor",
    "pca_factor",
    "phi",
    "dphi",
]

# Exponents are clipped at +-EXP_CLIP before exponentiation.  Arguments this
# large arise only during root bracketing far outside any solved quantity, so
# clipping keeps bracket expansion finite without affecting converged values.
EXP_CLIP = 700.0


def _frozen(a) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes economy and Asian-contract parameters.

    Attributes
    ----------
    s0 : float
        Initial asset price (currency), > 0.
    r : float
        Risk-free rate (1/time).
    sigma : float
        Volatility (1/sqrt(time)), > 0.
    t_expiry : float
        Expiry (time), > 0.
    strike : float
        Strike K (currency).
    m : int
        Number of timesteps, >= 1.  After preintegration d = m - 1
        coordinates remain.
    """

    s0: float = 100.0
    r: float = 0.1
    sigma: float = 0.2
    t_expiry: float = 1.0
    strike: float = 100.0
    m: int = 256

    def __post_init__(self) -> None:
        for name in ("s0", "sigma", "t_expiry"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        if not np.isfinite(self.r):
            raise ValueError(f"r must be finite, got {self.r!r}")
        if not np.isfinite(self.strike):
            raise ValueError(f"strike must be finite, got {self.strike!r}")
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise ValueError(f"m must be an integer >= 1, got {self.m!r}")

    @property
    def d(self) -> int:
        """Dimension left after preintegration."""
        return self.m - 1


@dataclass(frozen=True)
class BrownianFactor:
    """Spectral (PCA) factor of the discrete Brownian covariance.

    ``a`` satisfies a @ a.T == Sigma with Sigma[j, k] = T min(j+1, k+1) / m.
    ``sigma_a`` and ``drift`` are cached so that one evaluation of the
    average-price map costs a single pass of dot products.  Instances are
    immutable and safe to share across threads.
    """

    a: np.ndarray         # (m, m) PCA factor
    tau_d: float          # sqrt(T / ((d+1)(2d+3)))
    chi: np.ndarray       # (m,) angles, strictly inside (0, pi/2)
    lam: np.ndarray       # (m,) per-coordinate derivative bounds, decreasing
    z_mean: float         # value of the average-price map at y = 0
    sigma_a: np.ndarray   # (m, m) sigma * a
    drift: np.ndarray     # (m,) (r - sigma^2/2)(k+1)T/m

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[0] - 1


def pca_factor(params: MarketParams) -> BrownianFactor:
    """Build the PCA factor for the given market parameters.

    The factor entries are A[k, i] = tau_d sin(2(k+1)chi_i) / sin(chi_i) with
    tau_d = sqrt(T / ((d+1)(2d+3))) and chi_i = pi(2i+1) / (2(2d+3)).  Column
    0 is strictly positive, which makes the average-price map strictly
    increasing in the leading coordinate.
    """
    m = params.m
    d = m - 1
    t = params.t_expiry
    tau = math.sqrt(t / ((d + 1) * (2 * d + 3)))
    i = np.arange(m)
    chi = np.pi * (2 * i + 1) / (2 * (2 * d + 3))
    k1 = np.arange(1, m + 1, dtype=np.float64)
    a = tau * np.sin(2.0 * np.outer(k1, chi)) / np.sin(chi)
    lam = params.sigma * tau * (2 * d + 3) / (2 * i + 1)
    drift = (params.r - 0.5 * params.sigma**2) * k1 * t / m
    z = float(np.exp(drift).sum() * params.s0 / m)
    return BrownianFactor(
        a=_frozen(a),
        tau_d=tau,
        chi=_frozen(chi),
        lam=_frozen(lam),
        z_mean=z,
        sigma_a=_frozen(params.sigma * a),
        drift=_frozen(drift),
    )


def phi(factor: BrownianFactor, params: MarketParams, y) -> float | np.ndarray:
    """Time-discretised average asset price at Gaussian coordinates ``y``.

    ``y`` has length m along its last axis; leading axes are broadcast, so a
    (n, m) array evaluates n points at once.  Always strictly positive.
    """
    y = np.asarray(y, dtype=np.float64)
    e = factor.drift + y @ factor.sigma_a.T
    np.clip(e, -EXP_CLIP, EXP_CLIP, out=e)
    np.exp(e, out=e)
    vals = e.sum(axis=-1) * (params.s0 / params.m)
    return float(vals) if vals.ndim == 0 else vals


def dphi(factor: BrownianFactor, params: MarketParams, eta, y) -> float | np.ndarray:
    """Mixed derivative of the average-price map for multi-index ``eta``.

    Each summand of the map is an exponential, so the eta-derivative simply
    multiplies term k by prod_i (sigma A[k, i])^eta_i.  For eta = e_0 the
    result is strictly positive.
    """
    eta = np.asarray(eta)
    if eta.shape != (params.m,):
        raise ValueError(f"eta must have length m={params.m}")
    if np.any(eta < 0) or not np.issubdtype(eta.dtype, np.integer):
        raise ValueError("eta must be a nonnegative integer multi-index")
    coeff = np.prod(factor.sigma_a**eta, axis=1)
    y = np.asarray(y, dtype=np.float64)
    e = factor.drift + y @ factor.sigma_a.T
    np.clip(e, -EXP_CLIP, EXP_CLIP, out=e)
    np.exp(e, out=e)
    vals = (e * coeff).sum(axis=-1) * (params.s0 / params.m)
    return float(vals) if vals.ndim == 0 else vals
