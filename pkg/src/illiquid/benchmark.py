"""Closed-form references: dual supersolution upper bound and the constrained
Merton value for continuous trading.

Both are diffusion-only.  The dual density is the exponential martingale
exp(-int theta dW - 1/2 int theta^2 du) with theta = b/c, normalized so that
it has unit expectation; the resulting bounds are

    power:  f(t, x) = U(x) * exp( gamma / (2 (1-gamma)) * int_t^T theta^2 )
    log:    f(t, x) = ln x + 1/2 * int_t^T theta^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import MarketModel, integral_ratio_sq
from .utility import UtilitySpec, evaluate


class UnsupportedModelError(ValueError):
    """Raised when a closed-form reference does not cover the model."""


@dataclass(frozen=True)
class DualDensityParams:
    model: MarketModel

    def __post_init__(self):
        if self.model.jumps is not None:
            raise UnsupportedModelError("dual density is implemented for diffusion models only")
        total = self.integrated_theta_sq(0.0)
        if not math.isfinite(total):
            raise UnsupportedModelError("int (b/c)^2 must be finite (assumption NA)")

    def theta(self, t: float) -> float:
        return self.model.drift(t) / self.model.volatility(t)

    def integrated_theta_sq(self, t: float) -> float:
        """int_t^T (b/c)^2 du, exact piecewise."""
        return integral_ratio_sq(self.model.drift, self.model.volatility, t, self.model.horizon_T)


def supersolution(u: UtilitySpec, params: DualDensityParams, t: float, x: float) -> float:
    """Dual upper bound f(t, x) = inf_y { E[Utilde(y Y_{t,T})] + y x }."""
    if x <= 0:
        raise ValueError("x must be positive")
    theta_sq = params.integrated_theta_sq(t)
    if u.kind == "log":
        return math.log(x) + 0.5 * theta_sq
    g = u.gamma
    return evaluate(u, x) * math.exp(g / (2.0 * (1.0 - g)) * theta_sq)


def merton_policy(u: UtilitySpec, model: MarketModel):
    """Optimal constrained proportion t -> clamp(b / ((1-gamma) c^2), 0, 1)."""
    one_minus_gamma = 1.0 if u.kind == "log" else 1.0 - u.gamma

    def policy(t):
        c2 = model.volatility(t) ** 2
        if c2 == 0.0:
            raise UnsupportedModelError("degenerate volatility has no Merton policy")
        return float(np.clip(model.drift(t) / (one_minus_gamma * c2), 0.0, 1.0))

    return policy


def merton_value(u: UtilitySpec, model: MarketModel, t: float, x: float):
    """No-short-sale Merton value and feedback policy, (value, policy).

    The HJB Hamiltonian pi -> pi b - (1-gamma)/2 pi^2 c^2 is maximized over
    [0, 1] pointwise in time; with piecewise-constant coefficients the time
    integral of the maximized Hamiltonian is exact.
    """
    if model.jumps is not None:
        raise UnsupportedModelError("Merton reference is implemented for diffusion models only")
    if u.kind == "power" and (u.gamma >= 1 or u.gamma == 0):
        raise ValueError("CRRA utility required")
    if x <= 0:
        raise ValueError("x must be positive")
    T = model.horizon_T
    policy = merton_policy(u, model)
    one_minus_gamma = 1.0 if u.kind == "log" else 1.0 - u.gamma

    mesh = np.unique(np.concatenate([model.drift.breaks, model.volatility.breaks]))
    growth = 0.0
    for i in range(len(mesh) - 1):
        lo, hi = max(t, mesh[i]), min(T, mesh[i + 1])
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        b, c2 = model.drift(mid), model.volatility(mid) ** 2
        pi = policy(mid)
        growth += (hi - lo) * (pi * b - 0.5 * one_minus_gamma * pi**2 * c2)

    if u.kind == "log":
        return math.log(x) + growth, policy
    return evaluate(u, x) * math.exp(u.gamma * growth), policy
