"""Exponential-Levy fundamental price: return laws, moments, quadrature, sampling.

Drift and volatility are piecewise-constant on a user mesh so every integral
that parametrizes a return law (drift, variance, jump rate, compensator) is
computed exactly piecewise.  Jumps are compound Poisson; expectations under
jumps condition on the jump count, truncated where the Poisson tail mass
drops below 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .utility import UtilitySpec

GH_ORDER = 40
POISSON_TAIL = 1e-12


class PiecewiseConstant:
    """Right-open piecewise-constant function on [0, T]."""

    def __init__(self, breaks, values):
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if breaks.ndim != 1 or len(breaks) != len(values) + 1:
            raise ValueError("need len(breaks) == len(values) + 1")
        if np.any(np.diff(breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("piece values must be finite")
        self.breaks = breaks
        self.values = values

    @classmethod
    def constant(cls, value: float, T: float) -> "PiecewiseConstant":
        return cls([0.0, T], [value])

    def __call__(self, t):
        idx = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.values) - 1)
        out = self.values[idx]
        return float(out) if np.ndim(t) == 0 else out

    def overlaps(self, a: float, b: float):
        """(length, value) pairs of pieces intersected with [a, b]."""
        for i, v in enumerate(self.values):
            lo = max(a, self.breaks[i])
            hi = min(b, self.breaks[i + 1])
            if hi > lo:
                yield hi - lo, v

    def integral(self, a: float, b: float, f=None) -> float:
        """Exact integral of f(value) over [a, b] (identity when f is None)."""
        if f is None:
            f = lambda v: v
        return float(sum(dt * f(v) for dt, v in self.overlaps(a, b)))

    def antiderivative(self, f=None):
        """Vectorized t -> integral over [0, t] of f(value); piecewise linear."""
        if f is None:
            f = lambda v: v
        vals = np.array([f(v) for v in self.values])
        cum = np.concatenate([[0.0], np.cumsum(vals * np.diff(self.breaks))])
        breaks = self.breaks
        return lambda t: np.interp(t, breaks, cum)


def _merged_mesh(*funcs):
    return np.unique(np.concatenate([f.breaks for f in funcs]))


def integral_ratio_sq(b: PiecewiseConstant, c: PiecewiseConstant, lo: float, hi: float) -> float:
    """Exact integral of (b/c)^2 over [lo, hi]; +inf where c vanishes."""
    mesh = _merged_mesh(b, c)
    total = 0.0
    for i in range(len(mesh) - 1):
        a0, a1 = max(lo, mesh[i]), min(hi, mesh[i + 1])
        if a1 <= a0:
            continue
        t_mid = 0.5 * (a0 + a1)
        cv = c(t_mid)
        if cv == 0.0:
            return math.inf
        total += (a1 - a0) * (b(t_mid) / cv) ** 2
    return total


@dataclass(frozen=True)
class SizeLaw:
    """Jump-size distribution on (-1, inf).

    ``discrete``: atoms/probs.  ``lognormal``: ln(1+Y) ~ N(mu, sigma^2), which
    keeps the jump product lognormal and mergeable with the diffusion factor.
    """

    kind: str  # "discrete" | "lognormal"
    atoms: Optional[tuple] = None
    probs: Optional[tuple] = None
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind == "discrete":
            a = np.asarray(self.atoms, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            if len(a) != len(p) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("discrete size law needs matching atoms and probabilities summing to 1")
            if np.any(a <= -1.0):
                raise ValueError("jump sizes must be strictly greater than -1")
        elif self.kind == "lognormal":
            if self.sigma < 0:
                raise ValueError("sigma must be nonnegative")
        else:
            raise ValueError(f"unknown size law kind {self.kind!r}")

    def mean(self) -> float:
        if self.kind == "discrete":
            return float(np.dot(self.atoms, self.probs))
        return math.exp(self.mu + 0.5 * self.sigma**2) - 1.0

    def abs_mean(self) -> float:
        if self.kind == "discrete":
            return float(np.dot(np.abs(self.atoms), self.probs))
        # E|Y| <= E[1+Y] + 1, crude but finite; exact value not needed
        return math.exp(self.mu + 0.5 * self.sigma**2) + 1.0

    def power_moment_excess(self, l: float) -> float:
        """E[(1+Y)^l - 1 - l*Y]; may overflow to +inf for atoms near -1."""
        if self.kind == "discrete":
            a = np.asarray(self.atoms, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            with np.errstate(over="ignore", divide="ignore"):
                vals = (1.0 + a) ** l - 1.0 - l * a
            return float(np.dot(vals, p))
        return math.exp(l * self.mu + 0.5 * l**2 * self.sigma**2) - 1.0 - l * self.mean()

    def sample(self, n: int, rng: np.random.Generator):
        if self.kind == "discrete":
            return rng.choice(np.asarray(self.atoms, dtype=float), size=n, p=np.asarray(self.probs))
        return np.expm1(rng.normal(self.mu, self.sigma, size=n))


@dataclass(frozen=True)
class JumpSpec:
    rate: PiecewiseConstant
    size_law: SizeLaw
    q: float = 2.0  # integrability order, > 1
    r: Optional[float] = None  # negative order when utility is unbounded below

    def __post_init__(self):
        if self.q <= 1:
            raise ValueError("q must exceed 1")
        if self.r is not None and self.r >= 0:
            raise ValueError("r must be negative")
        if np.any(self.rate.values < 0):
            raise ValueError("jump rate must be nonnegative")


@dataclass(frozen=True)
class MarketModel:
    horizon_T: float
    drift: PiecewiseConstant
    volatility: PiecewiseConstant
    jumps: Optional[JumpSpec] = None

    def __post_init__(self):
        if self.horizon_T <= 0:
            raise ValueError("horizon_T must be positive")
        if np.any(self.volatility.values < 0):
            raise ValueError("volatility must be nonnegative")
        # |b| and c^2 integrable by construction for finite piecewise values;
        # evaluate them once so malformed meshes fail fast
        T = self.horizon_T
        self.drift.integral(0.0, T, abs)
        self.volatility.integral(0.0, T, lambda v: v * v)

    @classmethod
    def from_constants(cls, T: float, b: float, c: float, jumps: Optional[JumpSpec] = None):
        return cls(T, PiecewiseConstant.constant(b, T), PiecewiseConstant.constant(c, T), jumps)


@dataclass(frozen=True)
class JumpMixture:
    """Truncated Poisson jump-count mixture on an interval."""

    mean_count: float
    counts: tuple
    probs: tuple
    compensator: float  # integral of rate * E[Y]; subtracted from the log drift
    size_law: SizeLaw


@dataclass(frozen=True)
class ReturnLaw:
    t: float
    s: float
    log_mean: float  # mean of ln(1+Z) for the continuous part
    log_var: float
    jump_mixture: Optional[JumpMixture] = None

    @property
    def degenerate(self) -> bool:
        return self.log_var == 0.0 and self.log_mean == 0.0 and self.jump_mixture is None


def _truncated_poisson(mean: float):
    if mean == 0.0:
        return (0,), (1.0,)
    k, probs, p = 0, [], math.exp(-mean)
    cum = 0.0
    while 1.0 - cum >= POISSON_TAIL:
        probs.append(p)
        cum += p
        k += 1
        p *= mean / k
    probs = np.asarray(probs)
    probs /= probs.sum()
    return tuple(range(len(probs))), tuple(probs)


def return_law(model: MarketModel, t: float, s: float) -> ReturnLaw:
    """Law of the relative return between observation times t and s."""
    T = model.horizon_T
    if not (0 <= t <= s < T):
        raise ValueError("need 0 <= t <= s < T")
    if s == t:
        return ReturnLaw(t, s, 0.0, 0.0, None)
    log_var = model.volatility.integral(t, s, lambda v: v * v)
    log_mean = model.drift.integral(t, s) - 0.5 * log_var
    mixture = None
    if model.jumps is not None:
        rate_mass = model.jumps.rate.integral(t, s)
        mean_jump = model.jumps.size_law.mean()
        counts, probs = _truncated_poisson(rate_mass)
        mixture = JumpMixture(rate_mass, counts, probs, rate_mass * mean_jump, model.jumps.size_law)
    return ReturnLaw(t, s, log_mean, log_var, mixture)


_GH_CACHE: dict = {}


def gauss_hermite(n: int = GH_ORDER):
    """Probabilists-normalized Gauss-Hermite: E[g(N)] ~ sum w_i g(x_i)."""
    if n not in _GH_CACHE:
        x, w = np.polynomial.hermite.hermgauss(n)
        _GH_CACHE[n] = (x * math.sqrt(2.0), w / math.sqrt(math.pi))
    return _GH_CACHE[n]


def _jump_factor_terms(law: ReturnLaw):
    """(log-shift, weight) terms for the jump product, merged per count.

    For the lognormal size law each count contributes one extra lognormal
    factor; for the discrete law the product over atoms is enumerated by
    convolution, which is exact for the truncated counts.
    """
    mix = law.jump_mixture
    if mix is None:
        return [(0.0, 0.0, 1.0)]
    terms = []
    if mix.size_law.kind == "lognormal":
        for n, p in zip(mix.counts, mix.probs):
            terms.append((n * mix.size_law.mu - mix.compensator, n * mix.size_law.sigma**2, p))
    else:
        log_atoms = np.log1p(np.asarray(mix.size_law.atoms, dtype=float))
        aprobs = np.asarray(mix.size_law.probs, dtype=float)
        # products[k] maps log-product -> probability for exactly k jumps
        current = {0.0: 1.0}
        for n, p in zip(mix.counts, mix.probs):
            for lj, pj in current.items():
                terms.append((lj - mix.compensator, 0.0, p * pj))
            nxt = {}
            for lj, pj in current.items():
                for la, pa in zip(log_atoms, aprobs):
                    key = lj + la
                    nxt[key] = nxt.get(key, 0.0) + pj * pa
            current = nxt
    return terms


def _expected_return_functional(law: ReturnLaw, pi: float, integrand, zero_value: float,
                                 gamma: Optional[float] = None) -> float:
    if not 0 <= pi <= 1:
        raise ValueError("pi must lie in [0, 1]")
    if pi == 0.0 or law.degenerate:
        return zero_value
    xs, ws = gauss_hermite()
    sd = math.sqrt(law.log_var)
    total = 0.0
    for shift, extra_var, weight in _jump_factor_terms(law):
        if weight == 0.0:
            continue
        sigma = math.sqrt(law.log_var + extra_var) if extra_var else sd
        gross = np.exp(law.log_mean + shift + sigma * xs)
        lev = 1.0 - pi + pi * gross
        if np.any(lev <= 0.0):
            if gamma is not None and gamma < 0:
                return -math.inf
            return -math.inf
        total += weight * float(np.dot(ws, integrand(lev)))
    return total


def expected_power_return(law: ReturnLaw, pi: float, gamma: float) -> float:
    """E[(1 + pi Z)^gamma] by Gauss-Hermite over the lognormal factor, mixed
    over the truncated jump count; -inf on divergence (gamma < 0 only)."""
    if gamma >= 1 or gamma == 0:
        raise ValueError("gamma < 1 and gamma != 0 required")
    return _expected_return_functional(law, pi, lambda lev: lev**gamma, 1.0, gamma)


def expected_log_return(law: ReturnLaw, pi: float) -> float:
    """E[ln(1 + pi Z)], same quadrature/mixture as the power case."""
    return _expected_return_functional(law, pi, np.log, 0.0)


def return_quadrature(law: ReturnLaw, n: int = GH_ORDER):
    """Flattened nodes/weights (z_q, w_q) with sum w_q g(z_q) ~ E[g(Z)].

    Gauss-Hermite over each lognormal factor of the jump-count mixture; the
    weights sum to one up to quadrature roundoff.
    """
    if law.degenerate:
        return np.zeros(1), np.ones(1)
    xs, ws = gauss_hermite(n)
    zs, wq = [], []
    for shift, extra_var, weight in _jump_factor_terms(law):
        if weight == 0.0:
            continue
        sigma = math.sqrt(law.log_var + extra_var)
        zs.append(np.expm1(law.log_mean + shift + sigma * xs))
        wq.append(weight * ws)
    return np.concatenate(zs), np.concatenate(wq)


def sample_return(law: ReturnLaw, rng: np.random.Generator, size: Optional[int] = None):
    """Draws from the return law; scalar when size is None."""
    n = 1 if size is None else size
    if law.degenerate:
        out = np.zeros(n)
    else:
        logs = rng.normal(law.log_mean, math.sqrt(law.log_var), size=n)
        mix = law.jump_mixture
        if mix is not None:
            logs -= mix.compensator
            counts = rng.poisson(mix.mean_count, size=n)
            total = int(counts.sum())
            if total:
                jumps = np.log1p(mix.size_law.sample(total, rng))
                idx = np.repeat(np.arange(n), counts)
                logs += np.bincount(idx, weights=jumps, minlength=n)
        out = np.expm1(logs)
    return float(out[0]) if size is None else out


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class AssumptionReport:
    checks: list

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def __str__(self) -> str:
        return "\n".join(
            f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in self.checks
        )


def validate_assumptions(model: MarketModel, utility: UtilitySpec) -> AssumptionReport:
    """Pass/fail report for the model/utility assumptions; failures are data."""
    T = model.horizon_T
    checks = []

    abs_drift = model.drift.integral(0.0, T, abs)
    checks.append(AssumptionCheck("HL drift integrability", math.isfinite(abs_drift),
                                  f"int |b| = {abs_drift:.6g}"))
    var_mass = model.volatility.integral(0.0, T, lambda v: v * v)
    checks.append(AssumptionCheck("HL volatility integrability", math.isfinite(var_mass),
                                  f"int c^2 = {var_mass:.6g}"))
    if model.jumps is not None:
        jump_mean = model.jumps.rate.integral(0.0, T) * model.jumps.size_law.abs_mean()
        checks.append(AssumptionCheck("HL jump integrability", math.isfinite(jump_mean),
                                      f"int |y| nu = {jump_mean:.6g}"))

    na = integral_ratio_sq(model.drift, model.volatility, 0.0, T)
    checks.append(AssumptionCheck("NA market-price-of-risk", math.isfinite(na),
                                  f"int (b/c)^2 = {na:.6g}"))

    growth = utility.growth
    checks.append(AssumptionCheck(
        "HU(i) polynomial growth", 0.0 < growth["p"] < 1.0 and growth["C"] > 0,
        f"C = {growth['C']:.4g}, p = {growth['p']:.4g}"))
    if utility.unbounded_below:
        ok = growth.get("p_neg", 0.0) < 0.0
        checks.append(AssumptionCheck("HU(ii) lower growth", ok,
                                      f"p' = {growth.get('p_neg')}"))

    if model.jumps is not None:
        j = model.jumps
        rate_mass = j.rate.integral(0.0, T)
        mq = rate_mass * j.size_law.power_moment_excess(j.q)
        checks.append(AssumptionCheck("HI(i) q-moment", math.isfinite(mq),
                                      f"q = {j.q}, nu_q = {mq:.6g}"))
        if utility.unbounded_below:
            p_neg = utility.growth.get("p_neg", 0.0)
            if j.r is None:
                checks.append(AssumptionCheck("HI(ii) r-moment", False,
                                              "r not supplied while U is unbounded below"))
            else:
                mr = rate_mass * j.size_law.power_moment_excess(j.r)
                ok = j.r < p_neg and math.isfinite(mr)
                checks.append(AssumptionCheck("HI(ii) r-moment", ok,
                                              f"r = {j.r} (need < p' = {p_neg}), nu_r = {mr:.6g}"))
        checks.append(AssumptionCheck("HI(iii) no predictable jumps", True,
                                      "compound Poisson with atomless time law"))

    return AssumptionReport(checks)
