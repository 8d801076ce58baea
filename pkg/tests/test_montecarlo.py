import math

import numpy as np
import pytest
from scipy import stats

from illiquid.dp import DPSolver, PolicySurface, SolverConfig
from illiquid.market import JumpSpec, MarketModel, PiecewiseConstant, SizeLaw
from illiquid.montecarlo import (SimConfig, SweepRow, convergence_sweep,
                                 estimate_expected_utility, path_generator,
                                 simulate_path, sweep_to_csv)
from illiquid.utility import evaluate, power_utility


def constant_policy(solver: DPSolver, pi: float) -> PolicySurface:
    return PolicySurface("separable", solver.prof, solver.t_nodes, solver.w_nodes,
                         np.full(solver.cfg.time_nodes, pi))


@pytest.fixture(scope="module")
def base_solver(std_utility, std_model, std_prof):
    cfg = SolverConfig(time_nodes=80, time_quad=32, return_quad=16)
    return DPSolver(std_utility, std_model, std_prof, cfg)


class TestSimulation:
    def test_all_cash_policy_is_exact(self, base_solver, std_utility, std_model, std_prof):
        cfg = SimConfig(n_paths=500, seed=3)
        res = estimate_expected_utility(constant_policy(base_solver, 0.0), std_utility,
                                        std_model, std_prof, cfg)
        assert res.mean_utility == evaluate(std_utility, 1.0)
        assert res.std_error == 0.0
        assert res.wealth_quantiles[0.5] == 1.0

    def test_full_position_terminal_law(self, base_solver, std_utility, std_model, std_prof):
        # pi = 1 telescopes into one lognormal over the covered horizon
        cfg = SimConfig(n_paths=10_000, seed=5)
        policy = constant_policy(base_solver, 1.0)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
        from illiquid.montecarlo import _simulate_batch
        X, n_arr = _simulate_batch(policy, std_model, std_prof, cfg, rng)
        assert np.all(X > 0.0)
        assert np.all(n_arr >= 1)
        res = stats.kstest(np.log(X), "norm", args=(0.03, 0.2))
        assert res.pvalue > 0.01

    def test_martingale_budget(self, base_solver, std_prof):
        model = MarketModel.from_constants(1.0, 0.0, 0.2)
        cfg = SimConfig(n_paths=100_000, seed=9)
        policy = constant_policy(base_solver, 0.7)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
        from illiquid.montecarlo import _simulate_batch
        X, _ = _simulate_batch(policy, model, std_prof, cfg, rng)
        se = X.std() / math.sqrt(len(X))
        assert abs(X.mean() - 1.0) <= 3.0 * se

    def test_reproducibility(self, base_solver, std_utility, std_model, std_prof):
        cfg = SimConfig(n_paths=2000, seed=17)
        policy = constant_policy(base_solver, 0.5)
        a = estimate_expected_utility(policy, std_utility, std_model, std_prof, cfg)
        b = estimate_expected_utility(policy, std_utility, std_model, std_prof, cfg)
        assert a == b

    def test_truncation_insensitivity(self, base_solver, std_utility, std_model, std_prof):
        policy = constant_policy(base_solver, 1.0)
        means = []
        for cutoff in (1e-9, 2e-9):
            cfg = SimConfig(n_paths=20_000, seed=23, horizon_cutoff=cutoff)
            means.append(estimate_expected_utility(policy, std_utility, std_model,
                                                   std_prof, cfg))
        assert abs(means[0].mean_utility - means[1].mean_utility) < means[0].std_error

    def test_verification_against_solver(self, base_solver, std_utility, std_model, std_prof):
        res = base_solver.solve()
        cfg = SimConfig(n_paths=50_000, seed=31)
        sim = estimate_expected_utility(res.policy, std_utility, std_model, std_prof, cfg)
        v0 = res.surface.start_value(1.0)
        assert abs(sim.mean_utility - v0) <= 3.0 * sim.std_error

    def test_optimal_policy_beats_constant(self, std_prof):
        # interior optimum: log utility with b = 0.02, c = 0.2 -> pi* = 0.5
        from illiquid.utility import log_utility
        u = log_utility()
        model = MarketModel.from_constants(1.0, 0.02, 0.2)
        cfg_s = SolverConfig(time_nodes=80, time_quad=32, return_quad=16)
        solver = DPSolver(u, model, std_prof, cfg_s)
        res = solver.solve()
        cfg = SimConfig(n_paths=50_000, seed=37)
        opt = estimate_expected_utility(res.policy, u, model, std_prof, cfg)
        rough = estimate_expected_utility(constant_policy(solver, 1.0), u, model,
                                          std_prof, cfg)
        combined = math.hypot(opt.std_error, rough.std_error)
        assert opt.mean_utility >= rough.mean_utility - 3.0 * combined

    def test_single_path_recursion(self, base_solver, std_utility, std_model, std_prof):
        cfg = SimConfig(n_paths=1, seed=41)
        policy = constant_policy(base_solver, 1.0)
        x, n = simulate_path(policy, std_model, std_prof, cfg, path_generator(41, 0))
        assert x > 0.0 and n >= 1
        # same substream, same path
        x2, n2 = simulate_path(policy, std_model, std_prof, cfg, path_generator(41, 0))
        assert (x, n) == (x2, n2)

    def test_jump_model_simulation(self, std_utility, std_prof):
        jumps = JumpSpec(PiecewiseConstant.constant(1.0, 1.0),
                         SizeLaw("lognormal", mu=-0.02, sigma=0.1))
        model = MarketModel.from_constants(1.0, 0.05, 0.2, jumps)
        cfg_s = SolverConfig(time_nodes=60, time_quad=32, return_quad=16)
        solver = DPSolver(std_utility, model, std_prof, cfg_s)
        res = solver.solve()
        sim = estimate_expected_utility(res.policy, std_utility, model, std_prof,
                                        SimConfig(n_paths=50_000, seed=43))
        v0 = res.surface.start_value(1.0)
        assert abs(sim.mean_utility - v0) <= 3.0 * sim.std_error

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(n_paths=0)
        with pytest.raises(ValueError):
            SimConfig(initial_wealth=0.0)
        with pytest.raises(ValueError):
            SimConfig(horizon_cutoff=0.0)


class TestConvergenceSweep:
    def test_martingale_gaps_vanish(self, std_prof):
        model = MarketModel.from_constants(1.0, 0.0, 0.2)
        cfg_s = SolverConfig(time_nodes=40, time_quad=24, return_quad=16)
        rows = convergence_sweep(power_utility(0.5), model, std_prof, [1, 4],
                                 solver_cfg=cfg_s)
        for r in rows:
            assert r.V_merton == pytest.approx(2.0, rel=1e-12)
            assert abs(r.abs_gap) < 1e-12

    def test_rows_are_ordered_and_bounded(self, std_utility, std_model, std_prof):
        cfg_s = SolverConfig(time_nodes=60, time_quad=32, return_quad=16,
                             fixed_point_tol=1e-9, max_iterations=1000)
        rows = convergence_sweep(std_utility, std_model, std_prof, [1, 2, 4],
                                 solver_cfg=cfg_s)
        assert [r.k for r in rows] == [1.0, 2.0, 4.0]
        for r in rows:
            assert r.V_lambda <= r.V_merton + 1e-4
            assert r.dp_residual < 1e-9
            assert r.wall_seconds > 0.0

    def test_k_list_must_increase(self, std_utility, std_model, std_prof):
        with pytest.raises(ValueError):
            convergence_sweep(std_utility, std_model, std_prof, [4, 2])

    def test_csv_layout(self, tmp_path):
        rows = [SweepRow(1.0, 2.04, 2.0404, 0.0004, 0.0002, 14, 1e-7, 0.5)]
        path = tmp_path / "sweep.csv"
        sweep_to_csv(rows, path, "hash=xyz")
        lines = path.read_text().splitlines()
        assert lines[0] == "# hash=xyz"
        assert lines[1] == "k,V_lambda,V_merton,abs_gap,rel_gap,dp_iterations,dp_residual"
        assert len(lines) == 3
        timing = (tmp_path / "sweep.csv.timing.csv").read_text().splitlines()
        assert timing[0] == "k,wall_seconds"
