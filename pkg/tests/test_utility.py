import math

import numpy as np
import pytest

from illiquid.utility import (UtilitySpec, conjugate, evaluate, log_utility,
                              marginal, power_utility)


def test_power_evaluation():
    u = power_utility(0.5)
    assert evaluate(u, 1.0) == 2.0
    assert evaluate(u, 4.0) == 4.0
    np.testing.assert_allclose(evaluate(u, np.array([1.0, 4.0])), [2.0, 4.0])


def test_log_evaluation():
    u = log_utility()
    assert evaluate(u, 1.0) == 0.0
    assert evaluate(u, math.e) == pytest.approx(1.0)


def test_negative_gamma_is_negative():
    u = power_utility(-1.0)
    assert evaluate(u, 2.0) == -0.5
    assert u.unbounded_below


def test_rejects_nonpositive_wealth():
    for u in (power_utility(0.5), log_utility()):
        with pytest.raises(ValueError):
            evaluate(u, 0.0)
        with pytest.raises(ValueError):
            evaluate(u, np.array([1.0, -2.0]))


def test_invalid_parameters():
    with pytest.raises(ValueError):
        power_utility(1.0)
    with pytest.raises(ValueError):
        power_utility(0.0)
    with pytest.raises(ValueError):
        power_utility(2.0)
    with pytest.raises(ValueError):
        UtilitySpec(kind="exotic")


def test_unbounded_below_flags():
    assert not power_utility(0.5).unbounded_below
    assert power_utility(-0.5).unbounded_below
    assert log_utility().unbounded_below


def test_growth_constants_bound_the_positive_part():
    # U+(x) <= C (1 + x^p) with p in (0, 1)
    xs = np.geomspace(1e-4, 1e6, 200)
    for u in (power_utility(0.5), power_utility(-1.0), log_utility()):
        g = u.growth
        assert 0.0 < g["p"] < 1.0
        pos = np.maximum(evaluate(u, xs), 0.0)
        assert np.all(pos <= g["C"] * (1.0 + xs ** g["p"]) + 1e-12)


def test_growth_constants_bound_the_negative_part():
    # U-(x) <= C' x^{p'} with p' < 0 near zero wealth
    xs = np.geomspace(1e-8, 1.0, 100)
    for u in (power_utility(-1.0), log_utility()):
        g = u.growth
        assert g["p_neg"] < 0.0
        neg = np.maximum(-evaluate(u, xs), 0.0)
        assert np.all(neg <= g["C_neg"] * xs ** g["p_neg"] + 1e-12)


def test_marginal():
    assert marginal(power_utility(0.5), 4.0) == pytest.approx(0.5)
    assert marginal(log_utility(), 4.0) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        marginal(log_utility(), 0.0)


@pytest.mark.parametrize("u", [power_utility(0.5), power_utility(-1.0), log_utility()])
def test_conjugate_is_the_legendre_transform(u):
    # conj(y) = sup_x {U(x) - x y}, so conj(y) >= U(x) - x y with equality
    # at x solving U'(x) = y
    xs = np.geomspace(1e-3, 1e3, 400)
    for y in (0.25, 1.0, 3.0):
        vals = evaluate(u, xs) - xs * y
        cj = conjugate(u, y)
        assert cj >= vals.max() - 1e-9
        assert cj == pytest.approx(vals.max(), rel=1e-3)


def test_conjugate_rejects_nonpositive_slope():
    with pytest.raises(ValueError):
        conjugate(power_utility(0.5), 0.0)
