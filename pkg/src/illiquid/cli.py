"""Experiment driver.

Subcommands: ``solve`` (value/policy surfaces + summary), ``simulate``
(policy verification by Monte Carlo), ``converge`` (intensity-scaling
sweep), ``trace`` (finite-horizon iterate values).  Configuration is an INI
file; every output CSV carries a header comment with the config hash and
artifact version so runs are attributable and byte-reproducible.

Exit codes: 0 success, 2 config error, 3 assumption violation,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .arrivals import IntensityProfile
from .benchmark import UnsupportedModelError, DualDensityParams, merton_value, supersolution
from .dp import (DPSolver, PolicySurface, SolverConfig, policy_to_csv, surface_to_csv)
from .market import JumpSpec, MarketModel, PiecewiseConstant, SizeLaw, validate_assumptions
from .montecarlo import (SimConfig, convergence_sweep, estimate_expected_utility,
                         sweep_to_csv)
from .utility import UtilitySpec, log_utility, power_utility

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTIONS = 3
EXIT_NONCONVERGENCE = 4


class ConfigError(Exception):
    """Raised with a message naming the offending section/field."""


@dataclass
class ExperimentConfig:
    utility: UtilitySpec
    model: MarketModel
    prof: IntensityProfile
    solver: SolverConfig
    representation: str
    sim: SimConfig
    out_dir: Path
    k_list: list
    config_hash: str


def _get(parser, section, key, conv, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"[{section}] missing required field '{key}'")
        return default
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"[{section}] field '{key}': cannot parse {raw!r}")


def _float_list(raw: str):
    return [float(tok) for tok in raw.replace(",", " ").split()]


def _piecewise(parser, section, key, T) -> PiecewiseConstant:
    """Either a single constant (`key = 0.05`) or explicit pieces via
    `key_breaks = 0, 0.5, 1` and `key_values = 0.05, 0.03`."""
    if parser.has_option(section, key + "_breaks") or parser.has_option(section, key + "_values"):
        breaks = _get(parser, section, key + "_breaks", _float_list, required=True)
        values = _get(parser, section, key + "_values", _float_list, required=True)
        try:
            return PiecewiseConstant(breaks, values)
        except ValueError as exc:
            raise ConfigError(f"[{section}] field '{key}_breaks/_values': {exc}")
    value = _get(parser, section, key, float, required=True)
    return PiecewiseConstant.constant(value, T)


def load_config(path: str, seed_override: Optional[int] = None,
                out_override: Optional[str] = None,
                k_list_override: Optional[str] = None,
                paths_override: Optional[int] = None) -> ExperimentConfig:
    raw = Path(path).read_bytes()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(raw.decode())
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"config parse failure: {exc}")

    for section in ("model", "utility"):
        if not parser.has_section(section):
            raise ConfigError(f"missing required section [{section}]")

    T = _get(parser, "model", "horizon_years", float, required=True)
    if T <= 0:
        raise ConfigError("[model] field 'horizon_years': must be positive")
    drift = _piecewise(parser, "model", "drift", T)
    vol = _piecewise(parser, "model", "volatility", T)
    jumps = None
    rate_given = (parser.has_option("model", "jump_rate")
                  or parser.has_option("model", "jump_rate_breaks"))
    if rate_given:
        rate = _piecewise(parser, "model", "jump_rate", T)
        if np.any(rate.values != 0.0):
            kind = _get(parser, "model", "jump_size_kind", str, default="lognormal")
            if kind == "lognormal":
                law = SizeLaw("lognormal",
                              mu=_get(parser, "model", "jump_size_mu", float, required=True),
                              sigma=_get(parser, "model", "jump_size_sigma", float, required=True))
            elif kind == "discrete":
                law = SizeLaw("discrete",
                              atoms=_get(parser, "model", "jump_size_atoms", _float_list, required=True),
                              probs=_get(parser, "model", "jump_size_probs", _float_list, required=True))
            else:
                raise ConfigError(f"[model] field 'jump_size_kind': unknown kind {kind!r}")
            q = _get(parser, "model", "jump_moment_order", float, default=2.0)
            r = _get(parser, "model", "jump_neg_moment_order", float, default=None)
            jumps = JumpSpec(rate, law, q=q, r=r)

    ukind = _get(parser, "utility", "kind", str, required=True)
    if ukind == "power":
        gamma = _get(parser, "utility", "gamma", float, required=True)
        try:
            utility = power_utility(gamma)
        except ValueError as exc:
            raise ConfigError(f"[utility] field 'gamma': {exc}")
    elif ukind == "log":
        utility = log_utility()
    else:
        raise ConfigError(f"[utility] field 'kind': unknown kind {ukind!r}")

    try:
        model = MarketModel(T, drift, vol, jumps)
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}")

    kind = _get(parser, "intensity", "kind", str, default="power")
    if kind != "power":
        raise ConfigError(f"[intensity] field 'kind': unknown kind {kind!r}")
    try:
        prof = IntensityProfile(
            T,
            kappa=_get(parser, "intensity", "kappa", float, default=1.0),
            beta=_get(parser, "intensity", "beta", float, default=1.0),
            scale=_get(parser, "intensity", "scale", float, default=1.0))
    except ValueError as exc:
        raise ConfigError(f"[intensity]: {exc}")

    try:
        solver = SolverConfig(
            time_nodes=_get(parser, "solver", "time_nodes", int, default=200),
            wealth_nodes=_get(parser, "solver", "wealth_nodes", int, default=80),
            x_min=_get(parser, "solver", "x_min", float, default=None),
            x_max=_get(parser, "solver", "x_max", float, default=None),
            time_quad=_get(parser, "solver", "time_quad", int, default=64),
            return_quad=_get(parser, "solver", "return_quad", int, default=40),
            fixed_point_tol=_get(parser, "solver", "fixed_point_tol", float, default=1e-6),
            max_iterations=_get(parser, "solver", "max_iterations", int, default=500),
            pi_tol=_get(parser, "solver", "pi_tol", float, default=1e-6))
    except ValueError as exc:
        raise ConfigError(f"[solver]: {exc}")
    representation = _get(parser, "solver", "representation", str, default="separable")
    if representation not in ("separable", "grid"):
        raise ConfigError(f"[solver] field 'representation': unknown value {representation!r}")

    seed = _get(parser, "simulation", "seed", int, default=0)
    if seed_override is not None:
        seed = seed_override
    n_paths = _get(parser, "simulation", "n_paths", int, default=100_000)
    if paths_override is not None:
        n_paths = paths_override
    try:
        sim = SimConfig(
            n_paths=n_paths,
            seed=_subsystem_seed(seed, "montecarlo"),
            initial_wealth=_get(parser, "simulation", "initial_wealth", float, default=1.0),
            horizon_cutoff=_get(parser, "simulation", "horizon_cutoff", float, default=1e-9),
            max_arrivals=_get(parser, "simulation", "max_arrivals", int, default=1_000_000))
    except ValueError as exc:
        raise ConfigError(f"[simulation]: {exc}")

    out_dir = Path(out_override if out_override is not None
                   else _get(parser, "output", "directory", str, default="."))
    k_raw = (k_list_override if k_list_override is not None
             else _get(parser, "simulation", "k_list", str, default="1,2,4,8,16,32,64"))
    try:
        k_list = _float_list(k_raw)
    except ValueError:
        raise ConfigError(f"k_list: cannot parse {k_raw!r}")

    digest = hashlib.sha256(raw + f"|seed={seed}".encode()).hexdigest()[:16]
    return ExperimentConfig(utility, model, prof, solver, representation, sim,
                            out_dir, k_list, digest)


def _subsystem_seed(seed: int, name: str) -> int:
    h = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(h[:8], "big") >> 1


def _header(cfg: ExperimentConfig) -> str:
    return f"config_sha256={cfg.config_hash} artifact_version={__version__}"


def _check_assumptions(cfg: ExperimentConfig) -> Optional[int]:
    report = validate_assumptions(cfg.model, cfg.utility)
    if not report.all_passed:
        print("assumption validation failed:", file=sys.stderr)
        for check in report.failures:
            print(f"  {check.name}: {check.detail}", file=sys.stderr)
        return EXIT_ASSUMPTIONS
    return None


def _solve(cfg: ExperimentConfig):
    solver = DPSolver(cfg.utility, cfg.model, cfg.prof, cfg.solver,
                      cfg.representation, cfg.sim.initial_wealth)
    return solver, solver.solve()


def _reference_bounds(cfg: ExperimentConfig):
    """(supersolution, merton) at (0, X0); NaN when the model is unsupported."""
    x0 = cfg.sim.initial_wealth
    try:
        f0 = supersolution(cfg.utility, DualDensityParams(cfg.model), 0.0, x0)
    except UnsupportedModelError:
        f0 = math.nan
    try:
        vm, _ = merton_value(cfg.utility, cfg.model, 0.0, x0)
    except (UnsupportedModelError, ValueError):
        vm = math.nan
    return f0, vm


def run_solve(cfg: ExperimentConfig) -> int:
    code = _check_assumptions(cfg)
    if code is not None:
        return code
    _, res = _solve(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    surface_to_csv(res.surface, cfg.out_dir / "value_surface.csv", _header(cfg))
    policy_to_csv(res.policy, cfg.out_dir / "policy_surface.csv", _header(cfg))
    f0, vm = _reference_bounds(cfg)
    v0 = res.surface.start_value(cfg.sim.initial_wealth)
    with open(cfg.out_dir / "solve_summary.csv", "w") as fh:
        fh.write(f"# {_header(cfg)}\n")
        fh.write("value,iterations,residual,supersolution,merton\n")
        fh.write(f"{v0:.17g},{res.iterations},{res.residual:.17g},{f0:.17g},{vm:.17g}\n")
    print(f"value {v0:.12g}  iterations {res.iterations}  residual {res.residual:.3e}")
    if not res.converged:
        print(f"did not converge: residual {res.residual:.3e} above tolerance "
              f"{cfg.solver.fixed_point_tol:.1e} after {res.iterations} iterations",
              file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _constant_policy(cfg: ExperimentConfig, pi: float) -> PolicySurface:
    solver = DPSolver(cfg.utility, cfg.model, cfg.prof, cfg.solver,
                      "separable", cfg.sim.initial_wealth)
    return PolicySurface("separable", cfg.prof, solver.t_nodes, solver.w_nodes,
                         np.full(cfg.solver.time_nodes, pi))


def run_simulate(cfg: ExperimentConfig, pi_override: Optional[float] = None) -> int:
    code = _check_assumptions(cfg)
    if code is not None:
        return code
    if pi_override is not None:
        if not 0.0 <= pi_override <= 1.0:
            print(f"--pi must lie in [0, 1], got {pi_override}", file=sys.stderr)
            return EXIT_CONFIG
        policy = _constant_policy(cfg, pi_override)
        v0 = math.nan
        converged = True
    else:
        _, res = _solve(cfg)
        if not res.converged:
            print("solver did not converge; refusing to simulate its policy",
                  file=sys.stderr)
            return EXIT_NONCONVERGENCE
        policy = res.policy
        v0 = res.surface.start_value(cfg.sim.initial_wealth)
        converged = res.converged
    sim = estimate_expected_utility(policy, cfg.utility, cfg.model, cfg.prof, cfg.sim)
    verdict = ""
    if not math.isnan(v0):
        ok = abs(sim.mean_utility - v0) <= 3.0 * sim.std_error or sim.std_error == 0.0
        verdict = "PASS" if ok else "FAIL"
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.out_dir / "simulation.csv", "w") as fh:
        fh.write(f"# {_header(cfg)}\n")
        fh.write("mean_utility,std_error,solver_value,verdict,"
                 "n_arrivals_mean,n_arrivals_max,n_clamped\n")
        fh.write(f"{sim.mean_utility:.17g},{sim.std_error:.17g},{v0:.17g},{verdict},"
                 f"{sim.n_arrivals_mean:.17g},{sim.n_arrivals_max},{sim.n_clamped}\n")
    print(f"mean utility {sim.mean_utility:.12g} +- {sim.std_error:.3g}"
          + (f"  vs solver {v0:.12g}  [{verdict}]" if verdict else ""))
    return EXIT_OK if converged else EXIT_NONCONVERGENCE


def run_converge(cfg: ExperimentConfig) -> int:
    code = _check_assumptions(cfg)
    if code is not None:
        return code
    try:
        rows = convergence_sweep(cfg.utility, cfg.model, cfg.prof, cfg.k_list,
                                 cfg.sim, cfg.solver)
    except UnsupportedModelError as exc:
        print(f"sweep unsupported for this model: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    sweep_to_csv(rows, cfg.out_dir / "convergence.csv", _header(cfg))
    for r in rows:
        print(f"k={r.k:g}  V={r.V_lambda:.12g}  gap={r.abs_gap:.3e}  "
              f"iters={r.dp_iterations}")
    if any(r.dp_residual >= cfg.solver.fixed_point_tol for r in rows):
        print("at least one solve did not converge", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def run_trace(cfg: ExperimentConfig, m_max: int) -> int:
    if m_max < 0:
        print(f"--m-max must be nonnegative, got {m_max}", file=sys.stderr)
        return EXIT_CONFIG
    code = _check_assumptions(cfg)
    if code is not None:
        return code
    solver = DPSolver(cfg.utility, cfg.model, cfg.prof, cfg.solver,
                      cfg.representation, cfg.sim.initial_wealth)
    x0 = cfg.sim.initial_wealth
    f0, _ = _reference_bounds(cfg)
    surface = solver.initial_surface()
    policy = None
    values = [surface.start_value(x0)]
    for _ in range(m_max):
        surface, policy = solver.apply(surface, policy)
        values.append(surface.start_value(x0))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.out_dir / "iterate_trace.csv", "w") as fh:
        fh.write(f"# {_header(cfg)}\n")
        fh.write("m,v_m,upper_bound\n")
        for m, v in enumerate(values):
            fh.write(f"{m},{v:.17g},{f0:.17g}\n")
    print(f"v_0 {values[0]:.12g} ... v_{m_max} {values[-1]:.12g}  bound {f0:.12g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="illiquid",
        description="solver and experiment driver for portfolio selection "
                    "with Poisson-timed trading")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="INI experiment config")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")

    p_solve = sub.add_parser("solve", help="solve the fixed point, write surfaces")
    common(p_solve)
    p_sim = sub.add_parser("simulate", help="Monte Carlo check of the solved policy")
    common(p_sim)
    p_sim.add_argument("--paths", type=int, default=None, help="path-count override")
    p_sim.add_argument("--pi", type=float, default=None,
                       help="simulate a constant proportion instead of the solved policy")
    p_conv = sub.add_parser("converge", help="intensity-scaling convergence sweep")
    common(p_conv)
    p_conv.add_argument("--k-list", default=None, help="comma-separated scales")
    p_trace = sub.add_parser("trace", help="finite-horizon iterate values")
    common(p_trace)
    p_trace.add_argument("--m-max", type=int, default=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config,
                          seed_override=args.seed,
                          out_override=args.out,
                          k_list_override=getattr(args, "k_list", None),
                          paths_override=getattr(args, "paths", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "solve":
        return run_solve(cfg)
    if args.command == "simulate":
        return run_simulate(cfg, pi_override=args.pi)
    if args.command == "converge":
        return run_converge(cfg)
    if args.command == "trace":
        return run_trace(cfg, args.m_max)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
