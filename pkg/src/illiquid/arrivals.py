"""Arrival-time machinery for the inhomogeneous Poisson order flow.

Intensities blow up at the horizon (infinite cumulative mass at T), so the
arrival count on [0, T) is a.s. infinite while any [0, t], t < T, sees finitely
many.  The canonical family lam(t) = kappa / (T - t)^beta has closed-form
cumulative intensity and inverse, which keeps the time change and the
exponential-substitution quadrature free of root finding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IntensityProfile:
    horizon_T: float
    kappa: float = 1.0
    beta: float = 1.0
    scale: float = 1.0  # multiplicative intensity scaling (convergence sweeps)

    def __post_init__(self):
        if self.horizon_T <= 0:
            raise ValueError("horizon_T must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.beta < 1.0:
            raise ValueError("beta >= 1 is required for infinite cumulative intensity at T")
        if self.scale < 1.0:
            raise ValueError("scale must be >= 1")

    @property
    def _k(self) -> float:
        return self.kappa * self.scale

    def scaled(self, k: float) -> "IntensityProfile":
        return IntensityProfile(self.horizon_T, self.kappa, self.beta, self.scale * k)

    def intensity(self, t):
        t = np.asarray(t, dtype=float)
        out = self._k / (self.horizon_T - t) ** self.beta
        return float(out) if out.ndim == 0 else out


def cumulative_intensity(prof: IntensityProfile, t):
    """Lambda(t) = integral of the intensity over [0, t], closed form; t < T."""
    T, k, beta = prof.horizon_T, prof._k, prof.beta
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= T):
        raise ValueError("cumulative intensity requires 0 <= t < T")
    if beta == 1.0:
        out = k * np.log(T / (T - t))
    else:
        out = k / (beta - 1.0) * ((T - t) ** (1.0 - beta) - T ** (1.0 - beta))
    return float(out) if out.ndim == 0 else out


def inverse_cumulative(prof: IntensityProfile, level):
    """t with Lambda(t) = level; strictly increasing, t -> T as level -> inf."""
    T, k, beta = prof.horizon_T, prof._k, prof.beta
    level = np.asarray(level, dtype=float)
    if np.any(level < 0):
        raise ValueError("level must be nonnegative")
    if beta == 1.0:
        out = T * (-np.expm1(-level / k))
    else:
        out = T - (T ** (1.0 - beta) + (beta - 1.0) * level / k) ** (-1.0 / (beta - 1.0))
    out = np.minimum(out, np.nextafter(T, 0.0))
    return float(out) if out.ndim == 0 else out


def warp(prof: IntensityProfile, t):
    """Warped time w = 1 - exp(-Lambda(t)), mapping [0, T) onto [0, 1)."""
    return -np.expm1(-np.asarray(cumulative_intensity(prof, t)))


def warp_inverse(prof: IntensityProfile, w):
    w = np.asarray(w, dtype=float)
    return inverse_cumulative(prof, -np.log1p(-w))


def arrival_density(prof: IntensityProfile, t, s):
    """Transition density of the next arrival: lam(s) exp(-(Lambda(s)-Lambda(t)))."""
    T = prof.horizon_T
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < t) or np.any(s >= T):
        raise ValueError("need 0 <= t <= s < T")
    out = prof.intensity(s) * np.exp(
        -(np.asarray(cumulative_intensity(prof, s)) - np.asarray(cumulative_intensity(prof, t)))
    )
    return float(out) if out.ndim == 0 else out


def sample_next_arrival(prof: IntensityProfile, t: float, rng: np.random.Generator) -> float:
    """Next arrival after t via the time-changed unit Poisson representation."""
    if not 0 <= t < prof.horizon_T:
        raise ValueError("need 0 <= t < T")
    e = rng.exponential()
    return float(inverse_cumulative(prof, cumulative_intensity(prof, t) + e))


def time_quadrature(prof: IntensityProfile, t: float, n_nodes: int = 64):
    """Nodes/weights for expectations under the next-arrival density from t.

    Writing Lambda = K * h with K = kappa * scale, the substitution
    x = 1 - exp(-(h(s)-h(t))) maps [t, T) to (0, 1) with density
    K (1-x)^(K-1), a Jacobi weight handled exactly by Gauss-Jacobi nodes;
    s(x) is smooth, so the rule is spectrally accurate for every scale, and
    for K = 1 it reduces to plain Gauss-Legendre.  Weights sum to one.
    """
    if not 0 <= t < prof.horizon_T:
        raise ValueError("need 0 <= t < T")
    x, du = arrival_measure_quadrature(prof._k, n_nodes)
    lam_t = cumulative_intensity(prof, t)
    s = inverse_cumulative(prof, lam_t - prof._k * np.log1p(-x))
    return s, du


def arrival_measure_quadrature(K: float, n: int):
    """Nodes/weights on (0, 1) for the normalized density K (1-x)^(K-1)."""
    if abs(K - 1.0) < 1e-13:
        return unit_gauss_legendre(n)
    from scipy.special import roots_jacobi

    xi, w = roots_jacobi(n, K - 1.0, 0.0)
    du = K * 0.5**K * w
    if not np.all(np.isfinite(du)):  # extreme K: fall back to the flat substitution
        u, duu = unit_gauss_legendre(n)
        # here x plays the role of u = 1 - exp(-(Lambda(s)-Lambda(t)))
        return 1.0 - (1.0 - u) ** (1.0 / K), duu
    return 0.5 * (xi + 1.0), du / du.sum()


def unit_gauss_legendre(n: int):
    """Gauss-Legendre nodes/weights transplanted to (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
