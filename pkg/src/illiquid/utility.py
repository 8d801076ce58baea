"""CRRA utility family: evaluation, Fenchel-Legendre conjugates, growth constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class UtilitySpec:
    """Power utility x^gamma/gamma (gamma < 1, gamma != 0) or logarithm.

    ``growth`` holds the polynomial-growth constants (C, p) for the positive
    part and, when the utility is unbounded below, (C_neg, p_neg) for the
    negative part.  They are derived at construction and feed the model
    assumption checks.
    """

    kind: str  # "power" | "log"
    gamma: float = 0.0
    growth: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("power", "log"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.kind == "power":
            if not (self.gamma < 1.0) or self.gamma == 0.0:
                raise ValueError("power utility needs gamma < 1, gamma != 0")
        g = dict(self.growth)
        if self.kind == "power" and self.gamma > 0:
            # U(x) = x^g/g <= (1/g)(1 + x^p) for any p in (g,1)
            g.setdefault("C", 1.0 / self.gamma)
            g.setdefault("p", 0.5 * (1.0 + self.gamma))
        elif self.kind == "power":
            # U < 0: positive part vanishes, negative part ~ x^gamma
            g.setdefault("C", 1.0)
            g.setdefault("p", 0.5)
            g.setdefault("C_neg", 1.0 / abs(self.gamma))
            g.setdefault("p_neg", self.gamma)
        else:
            # ln x <= x^p/p for x >= 1; ln^-(x) = -ln x <= x^{p'}/|p'| below 1
            g.setdefault("C", 2.0)
            g.setdefault("p", 0.5)
            g.setdefault("C_neg", 2.0)
            g.setdefault("p_neg", -0.5)
        object.__setattr__(self, "growth", g)

    @property
    def unbounded_below(self) -> bool:
        return self.kind == "log" or self.gamma < 0


def power_utility(gamma: float) -> UtilitySpec:
    return UtilitySpec(kind="power", gamma=gamma)


def log_utility() -> UtilitySpec:
    return UtilitySpec(kind="log")


def evaluate(u: UtilitySpec, x):
    """Utility value at wealth x > 0 (scalar or array)."""
    import numpy as np

    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("utility is defined for positive wealth only")
    if u.kind == "log":
        out = np.log(x)
    else:
        out = x**u.gamma / u.gamma
    return float(out) if out.ndim == 0 else out


def marginal(u: UtilitySpec, x: float) -> float:
    if x <= 0:
        raise ValueError("x must be positive")
    if u.kind == "log":
        return 1.0 / x
    return x ** (u.gamma - 1.0)


def conjugate(u: UtilitySpec, y: float) -> float:
    """Fenchel-Legendre transform sup_x { U(x) - x*y }."""
    if y <= 0:
        raise ValueError("conjugate is defined for y > 0")
    if u.kind == "log":
        return -math.log(y) - 1.0
    g = u.gamma
    return (1.0 - g) / g * y ** (g / (g - 1.0))
