"""Fixed-point dynamic programming core.

One operator application averages a value candidate over the next arrival
time (exponential-substitution quadrature in warped time) and the return
between arrivals (Gauss-Hermite over the lognormal factor, mixed over the
truncated jump count), then maximizes over the traded proportion in [0, 1].
Monotone value iteration from the terminal utility converges upward to the
fixed point; the per-node argmax is the optimal feedback policy.

Two interchangeable value representations:

* ``separable`` -- CRRA reduction v(t,x) = phi(t) U(x) (power) or
  U(x) + phi(t) (log); phi lives on a warped-time grid.
* ``grid`` -- a (warped-time x log-wealth) matrix for general concave
  candidates; the hot slice update runs in the compiled kernel when the
  extension built, else in the numpy fallback.

Time nodes are uniform in the warped variable w = 1 - exp(-Lambda(t)) with
the boundary pinned at w = 1; interpolation between nodes is linear in
physical time, which stays accurate for sharply scaled intensities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import gridops
from .arrivals import (IntensityProfile, arrival_measure_quadrature,
                       cumulative_intensity, inverse_cumulative, warp)
from .market import MarketModel, gauss_hermite, return_law, return_quadrature
from .utility import UtilitySpec, evaluate

from ._gridpy import INV_PHI, INV_PHI_SQ, golden_iterations

POISSON_TAIL = 1e-12
MAX_MIXTURE_TERMS = 256


@dataclass(frozen=True)
class SolverConfig:
    time_nodes: int = 200
    wealth_nodes: int = 80
    x_min: Optional[float] = None  # defaults to x0/100
    x_max: Optional[float] = None  # defaults to x0*100
    time_quad: int = 64
    return_quad: int = 40
    fixed_point_tol: float = 1e-6
    max_iterations: int = 500
    pi_tol: float = 1e-6

    def __post_init__(self):
        if min(self.time_nodes, self.wealth_nodes, self.time_quad, self.return_quad,
               self.max_iterations) <= 0:
            raise ValueError("counts must be positive")
        if min(self.fixed_point_tol, self.pi_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.x_min is not None and self.x_min <= 0:
            raise ValueError("x_min must be positive")


@dataclass
class ValueSurface:
    representation: str  # "separable" | "grid"
    utility: UtilitySpec
    model: MarketModel
    prof: IntensityProfile
    t_nodes: np.ndarray  # (Nt+1,), last entry = T
    w_nodes: np.ndarray
    phi: Optional[np.ndarray] = None       # (Nt+1,) separable
    values: Optional[np.ndarray] = None    # (Nt+1, Nx) grid
    lx: Optional[np.ndarray] = None        # log-wealth grid

    def phi_at(self, t):
        return np.interp(t, self.t_nodes, self.phi)

    def value(self, t, x):
        """v(t, x); grid mode interpolates linearly in time and log-wealth,
        extending off-grid wealth by the utility-shifted boundary value."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("wealth must be positive")
        if self.representation == "separable":
            ph = self.phi_at(t)
            if self.utility.kind == "log":
                out = np.log(x) + ph
            else:
                out = ph * x**self.utility.gamma / self.utility.gamma
            return float(out) if out.ndim == 0 else out
        j = int(np.clip(np.searchsorted(self.t_nodes, t, side="right") - 1, 0,
                        len(self.t_nodes) - 2))
        tf = (t - self.t_nodes[j]) / (self.t_nodes[j + 1] - self.t_nodes[j])
        row = (1.0 - tf) * self.values[j] + tf * self.values[j + 1]
        return _eval_row(row, self.lx, np.log(x), self.utility)

    def start_value(self, x0: float) -> float:
        return float(self.value(self.t_nodes[0], x0))


def _eval_row(row, lx, lnx, utility):
    lnx = np.asarray(lnx, dtype=float)
    n_x = len(lx)
    pos = (lnx - lx[0]) / (lx[1] - lx[0])
    cell = np.clip(np.floor(pos).astype(np.int64), 0, n_x - 2)
    fr = pos - cell
    vals = row[cell] * (1.0 - fr) + row[cell + 1] * fr
    if utility.kind == "log":
        u, u_lo, u_hi = lnx, lx[0], lx[-1]
    else:
        g = utility.gamma
        u = np.exp(g * lnx) / g
        u_lo, u_hi = math.exp(g * lx[0]) / g, math.exp(g * lx[-1]) / g
    vals = np.where(pos < 0.0, row[0] + u - u_lo, vals)
    vals = np.where(pos > n_x - 1.0, row[-1] + u - u_hi, vals)
    return float(vals) if vals.ndim == 0 else vals


@dataclass
class PolicySurface:
    representation: str
    prof: IntensityProfile
    t_nodes: np.ndarray
    w_nodes: np.ndarray
    pi: np.ndarray                      # (Nt,) separable, (Nt, Nx) grid
    lx: Optional[np.ndarray] = None


def policy_lookup(p: PolicySurface, t, x) -> float:
    """Feedback proportion at (t, x), clamped to [0, 1]; linear in time,
    and (grid mode) linear in log-wealth on the nearest time slice."""
    if p.representation == "separable":
        out = np.interp(t, p.t_nodes[:-1], p.pi)
    else:
        dt = p.t_nodes[1] - p.t_nodes[0]
        j = int(np.clip(round(float(t) / dt), 0, len(p.pi) - 1))
        out = np.interp(np.log(x), p.lx, p.pi[j])
    return float(np.clip(out, 0.0, 1.0))


@dataclass
class SolveResult:
    surface: ValueSurface
    policy: PolicySurface
    iterations: int
    residual: float
    converged: bool
    residual_history: list = field(default_factory=list)


class NonConvergenceError(RuntimeError):
    def __init__(self, result: SolveResult):
        super().__init__(
            f"value iteration stopped after {result.iterations} iterations "
            f"with residual {result.residual:.3e}")
        self.result = result


class DPSolver:
    """Workspace-holding solver; precomputes all quadrature tensors once."""

    def __init__(self, utility: UtilitySpec, model: MarketModel, prof: IntensityProfile,
                 cfg: SolverConfig = SolverConfig(), representation: str = "separable",
                 x0: float = 1.0):
        if representation not in ("separable", "grid"):
            raise ValueError(f"unknown representation {representation!r}")
        if abs(model.horizon_T - prof.horizon_T) > 1e-12:
            raise ValueError("model and intensity horizons differ")
        if model.jumps is not None and model.jumps.size_law.kind == "discrete":
            raise NotImplementedError(
                "the solver supports diffusion and lognormal-size jumps; "
                "discrete jump sizes are available in the market/Monte Carlo layer")
        self.utility = utility
        self.model = model
        self.prof = prof
        self.cfg = cfg
        self.representation = representation
        self.x0 = x0
        self._build_time_grid()
        self._build_quadrature()
        if representation == "grid":
            x_min = cfg.x_min if cfg.x_min is not None else x0 / 100.0
            x_max = cfg.x_max if cfg.x_max is not None else x0 * 100.0
            if not 0 < x_min < x_max:
                raise ValueError("need 0 < x_min < x_max")
            self.lx = np.linspace(math.log(x_min), math.log(x_max), cfg.wealth_nodes)
        else:
            self.lx = None
        if utility.kind == "log" and representation == "separable":
            self._precompute_log_sources()

    # -- workspace ---------------------------------------------------------

    def _build_time_grid(self):
        """Uniform nodes in physical time.

        The value function is Lipschitz in t up to the horizon (the intensity
        blow-up sits in the arrival density, which the per-slice quadrature
        absorbs), so uniform-in-t nodes keep the interpolation error flat in
        the intensity scale; warped coordinates are kept for serialization.
        """
        nt = self.cfg.time_nodes
        T = self.prof.horizon_T
        self.t_nodes = np.linspace(0.0, T, nt + 1)
        self.w_nodes = np.append(warp(self.prof, self.t_nodes[:-1]), 1.0)

    def _build_quadrature(self):
        """Per-slice arrays: time-interp indices/weights, gross-return nodes
        and combined quadrature weights (time x jump-mixture x Hermite)."""
        cfg, prof, model = self.cfg, self.prof, self.model
        nt = cfg.time_nodes
        u, du = arrival_measure_quadrature(prof._k, cfg.time_quad)
        xs, ws = gauss_hermite(cfg.return_quad)

        drift_cum = model.drift.antiderivative()
        var_cum = model.volatility.antiderivative(lambda v: v * v)
        jumps = model.jumps
        if jumps is not None:
            rate_cum = jumps.rate.antiderivative()
            mean_jump = jumps.size_law.mean()
            mu_j, sig_j = jumps.size_law.mu, jumps.size_law.sigma

        self.idx, self.tfrac, self.gross, self.wq = [], [], [], []
        self.du = du
        dt = self.t_nodes[1] - self.t_nodes[0]
        lam = cumulative_intensity(prof, self.t_nodes[:-1])
        for j in range(nt):
            s = inverse_cumulative(prof, lam[j] - prof._k * np.log1p(-u))
            idx = np.clip((s / dt).astype(np.int64), j, nt - 1)
            tf = np.clip((s - self.t_nodes[idx]) / dt, 0.0, 1.0)
            t_j = self.t_nodes[j]
            var = np.maximum(var_cum(s) - var_cum(t_j), 0.0)
            mu = drift_cum(s) - drift_cum(t_j) - 0.5 * var
            sd = np.sqrt(var)
            if jumps is None:
                gross = np.exp(mu[:, None] + sd[:, None] * xs[None, :])
                wq = du[:, None] * ws[None, :]
            else:
                rate = rate_cum(s) - rate_cum(t_j)
                counts, probs = _poisson_table(rate)  # (I, K)
                if counts.shape[1] * cfg.return_quad > MAX_MIXTURE_TERMS * cfg.return_quad:
                    raise ValueError("jump-count mixture too large")
                n = np.arange(counts.shape[1])
                shift = n[None, :] * mu_j - rate[:, None] * mean_jump  # (I, K)
                sig = np.sqrt(var[:, None] + n[None, :] * sig_j**2)    # (I, K)
                gross = np.exp(mu[:, None, None] + shift[:, :, None]
                               + sig[:, :, None] * xs[None, None, :])
                wq = du[:, None, None] * probs[:, :, None] * ws[None, None, :]
                gross = gross.reshape(len(u), -1)
                wq = wq.reshape(len(u), -1)
            self.idx.append(idx)
            self.tfrac.append(tf)
            self.gross.append(np.ascontiguousarray(gross))
            self.wq.append(np.ascontiguousarray(wq))

    def _precompute_log_sources(self):
        """sup_pi of the drift term of the log-utility recursion, per node;
        iteration independent, so solved once."""
        nt = self.cfg.time_nodes
        self.log_F = np.zeros(nt)
        self.log_F_pi = np.zeros(nt)
        for j in range(nt):
            gross, wq = self.gross[j], self.wq[j]

            def obj(pi):
                lev = 1.0 - pi + pi * gross
                with np.errstate(divide="ignore"):
                    return float((wq * np.log(lev)).sum())

            pi_star, val = _golden_max_scalar(obj, self.cfg.pi_tol, prev=None)
            self.log_F_pi[j] = pi_star
            self.log_F[j] = val

    # -- surfaces ----------------------------------------------------------

    def initial_surface(self) -> ValueSurface:
        """v_0 = U."""
        s = ValueSurface(self.representation, self.utility, self.model, self.prof,
                         self.t_nodes, self.w_nodes)
        if self.representation == "separable":
            base = 1.0 if self.utility.kind == "power" else 0.0
            s.phi = np.full(len(self.t_nodes), base)
        else:
            s.lx = self.lx
            row = evaluate(self.utility, np.exp(self.lx))
            s.values = np.tile(row, (len(self.t_nodes), 1))
        return s

    def _boundary(self) -> float:
        return 1.0 if self.utility.kind == "power" else 0.0

    def apply(self, surface: ValueSurface, prev_policy: Optional[PolicySurface] = None):
        """One operator application; returns (new_surface, policy).

        When ``prev_policy`` is given its per-node argmax is re-evaluated as a
        candidate, which makes the iteration exactly pointwise monotone."""
        if surface.representation != self.representation:
            raise ValueError("surface representation does not match the solver")
        nt = self.cfg.time_nodes
        out = ValueSurface(self.representation, self.utility, self.model, self.prof,
                           self.t_nodes, self.w_nodes, lx=self.lx)
        if self.representation == "separable":
            phi = surface.phi
            new_phi = np.empty(nt + 1)
            new_phi[nt] = self._boundary()
            new_pi = np.empty(nt)
            for j in range(nt):
                phh = phi[self.idx[j]] * (1.0 - self.tfrac[j]) + phi[self.idx[j] + 1] * self.tfrac[j]
                prev = None if prev_policy is None else float(prev_policy.pi[j])
                if self.utility.kind == "log":
                    new_phi[j] = float(self.du @ phh) + self.log_F[j]
                    new_pi[j] = self.log_F_pi[j]
                else:
                    g = self.utility.gamma
                    wp = self.wq[j] * phh[:, None]
                    gross = self.gross[j]
                    sign = 1.0 if g > 0 else -1.0

                    def obj(pi):
                        lev = 1.0 - pi + pi * gross
                        with np.errstate(over="ignore"):
                            m = float((wp * lev**g).sum())
                        return sign * m

                    pi_star, val = _golden_max_scalar(obj, self.cfg.pi_tol, prev)
                    new_pi[j] = pi_star
                    new_phi[j] = sign * val
            out.phi = new_phi
        else:
            vals = surface.values
            new_vals = np.empty_like(vals)
            new_vals[nt] = vals[nt]
            new_pi = np.empty((nt, len(self.lx)))
            kind = 0 if self.utility.kind == "log" else 1
            gamma = self.utility.gamma if kind else 0.0
            for j in range(nt):
                W = ((1.0 - self.tfrac[j])[:, None] * vals[self.idx[j]]
                     + self.tfrac[j][:, None] * vals[self.idx[j] + 1])
                prev = None if prev_policy is None else prev_policy.pi[j]
                v, p = gridops.apply_slice(
                    np.ascontiguousarray(W), self.gross[j], self.wq[j], self.lx,
                    kind, gamma, prev, self.cfg.pi_tol)
                new_vals[j] = v
                new_pi[j] = p
            out.values = new_vals
        policy = PolicySurface(self.representation, self.prof, self.t_nodes,
                               self.w_nodes, new_pi, self.lx)
        return out, policy

    def _residual(self, a: ValueSurface, b: ValueSurface) -> float:
        if self.representation == "separable":
            num = float(np.max(np.abs(a.phi - b.phi)))
            den = 1.0 + float(np.max(np.abs(b.phi)))
        else:
            num = float(np.max(np.abs(a.values - b.values)))
            den = 1.0 + float(np.max(np.abs(b.values)))
        return num / den

    def solve(self, raise_on_failure: bool = False) -> SolveResult:
        """Monotone value iteration v_0 = U, v_{m+1} = L v_m to the fixed point."""
        surface = self.initial_surface()
        policy = None
        history = []
        residual = math.inf
        m = 0
        while m < self.cfg.max_iterations:
            nxt, policy = self.apply(surface, policy)
            residual = self._residual(nxt, surface)
            history.append(residual)
            surface = nxt
            m += 1
            if residual < self.cfg.fixed_point_tol:
                break
        converged = residual < self.cfg.fixed_point_tol
        result = SolveResult(surface, policy, m, residual, converged, history)
        if raise_on_failure and not converged:
            raise NonConvergenceError(result)
        return result

    def finite_horizon(self, m: int) -> ValueSurface:
        """v_m: exactly m operator applications starting from U."""
        if m < 0:
            raise ValueError("m must be nonnegative")
        surface = self.initial_surface()
        policy = None
        for _ in range(m):
            surface, policy = self.apply(surface, policy)
        return surface


def _golden_max_scalar(obj, tol: float, prev: Optional[float]):
    """Golden-section max of a concave function on [0, 1]; candidates at both
    endpoints and the warm start; ties resolve to the smallest pi."""
    a, b = 0.0, 1.0
    dist = 1.0
    c = a + INV_PHI_SQ * dist
    d = a + INV_PHI * dist
    yc, yd = obj(c), obj(d)
    for _ in range(golden_iterations(tol) - 1):
        if yc >= yd:
            b, d, yd = d, c, yc
            dist *= INV_PHI
            c = a + INV_PHI_SQ * dist
            yc = obj(c)
        else:
            a, c, yc = c, d, yd
            dist *= INV_PHI
            d = a + INV_PHI * dist
            yd = obj(d)
    candidates = [0.0, 0.5 * (a + b), 1.0]
    if prev is not None:
        candidates.append(prev)
    candidates.sort()
    best_pi, best_val = None, -math.inf
    for p in candidates:
        v = obj(p)
        if v > best_val:
            best_pi, best_val = p, v
    return best_pi, best_val


def _poisson_table(rates):
    """Renormalized truncated Poisson pmf rows for an array of means; the
    common truncation keeps the tail mass below POISSON_TAIL everywhere."""
    rates = np.asarray(rates, dtype=float)
    rmax = float(rates.max())
    k, p, cum = 0, math.exp(-rmax), 0.0
    while 1.0 - cum >= POISSON_TAIL:
        cum += p
        k += 1
        p *= rmax / k
        if k > MAX_MIXTURE_TERMS:
            raise ValueError("jump-count truncation exceeds the mixture cap")
    counts = np.arange(k)
    logs = -rates[:, None] + counts[None, :] * np.log(np.maximum(rates[:, None], 1e-300)) \
        - _log_factorial(counts)[None, :]
    probs = np.exp(logs)
    probs[rates == 0.0] = 0.0
    probs[rates == 0.0, 0] = 1.0
    probs /= probs.sum(axis=1, keepdims=True)
    return np.broadcast_to(counts, probs.shape), probs


def _log_factorial(n):
    from scipy.special import gammaln

    return gammaln(np.asarray(n) + 1.0)


# -- spec-level operations -------------------------------------------------


def inner_objective(w: ValueSurface, t: float, x: float, pi: float,
                    time_nodes: int = 64, return_nodes: int = 40) -> float:
    """The double integral behind the operator at one (t, x, pi); general
    path through the return-law quadrature (handles any jump size law)."""
    from .arrivals import time_quadrature

    if not 0 <= pi <= 1:
        raise ValueError("pi must lie in [0, 1]")
    if x <= 0 or not 0 <= t < w.prof.horizon_T:
        raise ValueError("need x > 0 and 0 <= t < T")
    s_nodes, du = time_quadrature(w.prof, t, time_nodes)
    total = 0.0
    for s_i, du_i in zip(s_nodes, du):
        z, wz = return_quadrature(return_law(w.model, t, s_i), return_nodes)
        lev = 1.0 + pi * z
        if np.any(lev <= 0.0):
            return -math.inf
        total += du_i * float(wz @ w.value(s_i, x * lev))
    return total


def maximize_over_pi(w: ValueSurface, t: float, x: float, pi_tol: float = 1e-6,
                     time_nodes: int = 64, return_nodes: int = 40):
    """(argmax, max) of the inner objective over pi in [0, 1]."""
    obj = lambda p: inner_objective(w, t, x, p, time_nodes, return_nodes)
    return _golden_max_scalar(obj, pi_tol, prev=None)


def apply_operator(w: ValueSurface, cfg: SolverConfig = SolverConfig()):
    solver = DPSolver(w.utility, w.model, w.prof, cfg, w.representation)
    return solver.apply(w)


def value_iterate(u: UtilitySpec, model: MarketModel, prof: IntensityProfile,
                  cfg: SolverConfig = SolverConfig(), representation: str = "separable",
                  x0: float = 1.0) -> SolveResult:
    return DPSolver(u, model, prof, cfg, representation, x0).solve()


def finite_horizon_value(m: int, u: UtilitySpec, model: MarketModel,
                         prof: IntensityProfile, cfg: SolverConfig = SolverConfig(),
                         representation: str = "separable", x0: float = 1.0) -> ValueSurface:
    return DPSolver(u, model, prof, cfg, representation, x0).finite_horizon(m)


# -- serialization ---------------------------------------------------------


def surface_to_csv(surface: ValueSurface, path, header_comment: str = ""):
    """CSV layout: x-grid header (grid) or 'phi' (separable), one row per
    warped-time node; metadata goes to a JSON sidecar next to the file."""
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    if surface.representation == "separable":
        lines.append("w,phi")
        for w, p in zip(surface.w_nodes, surface.phi):
            lines.append(f"{w:.17g},{p:.17g}")
    else:
        lines.append("w," + ",".join(f"{math.exp(l):.17g}" for l in surface.lx))
        for w, row in zip(surface.w_nodes, surface.values):
            lines.append(f"{w:.17g}," + ",".join(f"{v:.17g}" for v in row))
    path = str(path)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {
        "representation": surface.representation,
        "utility": {"kind": surface.utility.kind, "gamma": surface.utility.gamma},
        "warp": {"kappa": surface.prof.kappa, "beta": surface.prof.beta,
                 "scale": surface.prof.scale, "horizon_T": surface.prof.horizon_T},
    }
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def policy_to_csv(policy: PolicySurface, path, header_comment: str = ""):
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    if policy.representation == "separable":
        lines.append("w,pi")
        for w, p in zip(policy.w_nodes[:-1], policy.pi):
            lines.append(f"{w:.17g},{p:.17g}")
    else:
        lines.append("w," + ",".join(f"{math.exp(l):.17g}" for l in policy.lx))
        for w, row in zip(policy.w_nodes[:-1], policy.pi):
            lines.append(f"{w:.17g}," + ",".join(f"{v:.17g}" for v in row))
    with open(str(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")
