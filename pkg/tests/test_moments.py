import math
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amcmc_diffusion.diffusion import SdeConfig, simulate_sde
from amcmc_diffusion.moments import (batch_means, bootstrap_even_moments, check_eta_second_moment,
                                     check_limiting_moments, check_martingale_zero_mean,
                                     check_pathwise_timeaverage, check_theta_growth,
                                     check_timeaverage_theta_power, check_uniform_second_moment,
                                     ergodic_moments, estimate_moments, even_recursion,
                                     limiting_moment, odd_recursion, recursion_table,
                                     running_time_average, timeaverage_sides)
from amcmc_diffusion.rng import RandomSource


def double_factorial(n):
    return math.prod(range(n, 0, -2))


@pytest.mark.parametrize("r,expected", [(0, 1), (2, 1), (4, 3), (6, 15), (7, 0), (1, 0)])
def test_limiting_moment(r, expected):
    assert limiting_moment(r) == expected
    assert isinstance(limiting_moment(r), Fraction)


def test_even_recursion_examples():
    assert recursion_table(1).even_values == (1,)
    assert recursion_table(1).even_moment == 1
    t3 = recursion_table(3)
    assert t3.even_values[2] == 3 and t3.even_moment == 15
    t5 = recursion_table(5)
    assert t5.even_values[4] == 105 and t5.even_moment == 945
    assert t5.even_moment == Fraction(math.factorial(10), 2 ** 5 * math.factorial(5))


@given(st.integers(1, 25))
@settings(max_examples=25)
def test_even_values_are_double_factorials(k):
    vals = even_recursion(k)
    assert list(vals) == [double_factorial(2 * m - 1) for m in range(k)]


def test_odd_recursion():
    assert odd_recursion(1) == (0,)
    assert odd_recursion(4) == (0, 0, 0, 0)
    assert all(recursion_table(k).odd_moment == 0 for k in range(1, 21))


def test_bootstrap_from_one():
    boot = bootstrap_even_moments(6)
    assert [boot[k] for k in range(1, 7)] == [1, 3, 15, 105, 945, 10395]


def test_malformed_inputs():
    with pytest.raises(ValueError):
        even_recursion(3, {0: 1, 1: 1})
    with pytest.raises(ValueError):
        even_recursion(0)
    with pytest.raises(ValueError):
        limiting_moment(-1)


def test_recursion_is_not_tautological():
    # wrong inputs propagate to a wrong output
    assert recursion_table(3, {0: 1, 1: 2, 2: 3}).even_moment != 15


def test_estimate_trivial_ensembles():
    rep = estimate_moments(np.full((5, 2), 1.5), [1, 2, 3], [0.0, 1.0])
    assert rep.estimate(3, 1) == (1.5 ** 3, 0.0)
    pm = np.array([[1.0], [-1.0]] * 10)
    rep = estimate_moments(pm, [1, 2], [0.0])
    assert rep.estimate(1, 0)[0] == 0.0 and rep.estimate(2, 0)[0] == 1.0


def test_estimate_requires_two_replicas():
    with pytest.raises(ValueError):
        estimate_moments(np.zeros((1, 3)), [2], [0, 1, 2])
    with pytest.raises(ValueError):
        estimate_moments(np.zeros((0, 3)), [2], [0, 1, 2])


def test_synthetic_normal_fourth_moment():
    z = RandomSource(2024, 0, 9).normals(10 ** 5)
    rep = estimate_moments(z[:, None], [4], [0.0])
    est, se = rep.estimate(4, 0)
    assert se == pytest.approx(math.sqrt(96 / 1e5), rel=0.1)
    assert abs(est - 3) <= 3 * se


def test_estimates_independent_of_replica_order():
    z = RandomSource(3).normals(4001).reshape(-1, 1) * 1e3 + 1e8
    a = estimate_moments(z, [1, 2], [0.0])
    b = estimate_moments(z[::-1], [1, 2], [0.0])
    assert a.estimate(1, 0) == b.estimate(1, 0) and a.estimate(2, 0) == b.estimate(2, 0)


@given(st.integers(0, 1000))
@settings(max_examples=10, deadline=None)
def test_standard_errors_positive(seed):
    z = RandomSource(seed).normals(40).reshape(20, 2)
    rep = estimate_moments(z, [1, 2, 3, 4], [0.0, 1.0])
    assert all(np.all(rep.std_errors[r] > 0) for r in rep.orders)


def test_batch_means_iid():
    z = RandomSource(1).normals(30000)
    mean, se = batch_means(z, 30)
    assert abs(mean) <= 3 * se
    assert se == pytest.approx(1 / math.sqrt(30000), rel=0.5)
    m = ergodic_moments(z, [2], burn_in=1000)
    assert abs(m[2][0] - 1) <= 4 * m[2][1]
    with pytest.raises(ValueError):
        batch_means(z[:10], 30)


def test_uniform_second_moment_trivial_grid():
    rep = estimate_moments(np.full((3, 1), 0.5), [2], [0.0])
    flag = check_uniform_second_moment(rep, 0.25)
    assert flag.passed and flag.margin == pytest.approx(1.0)


def test_uniform_second_moment_detects_excess():
    rep = estimate_moments(np.full((3, 1), 2.0), [2], [1.0])
    assert not check_uniform_second_moment(rep, 0.0).passed


def _pinned(theta0=1.0, p=1.0):
    cfg = SdeConfig(p=p, dt=1e-3, horizon=3.0, theta0=theta0)
    return simulate_sde(cfg, 4, 0, np.linspace(0, 3, 4), pin_x=True)


def test_theta_growth_tight_when_pinned():
    ens = _pinned(2.0, 0.5)
    flag = check_theta_growth(ens, 2.0, 0.5)
    assert flag.passed and flag.margin == 0.0


def test_theta_growth_flags_violation():
    ens = _pinned()
    ens.log_theta = ens.log_theta.copy()
    ens.log_theta[0, -1] += 1e-9
    assert not check_theta_growth(ens, 1.0, 1.0).passed


def test_timeaverage_trivial_and_errors():
    lhs, rhs = timeaverage_sides(0.0, 0.0, 2.0, 1.0, 1.0)
    assert lhs == 0 and rhs == pytest.approx(math.sqrt(2 * math.pi) * (1 + math.log(2) / 2))
    with pytest.raises(ValueError):
        timeaverage_sides(0.0, 0.0, 0.0, 1.0, 1.0)
    ens = _pinned()
    assert check_pathwise_timeaverage(ens, 1.0, 1.0, 1e-3).passed
    state = SimpleNamespace(t=1.0, path_int_abs_x=0.0, path_int_abs_x_theta=50.0)
    assert not check_pathwise_timeaverage(state, 1.0, 1.0, 1e-3).passed


def test_martingale_check():
    assert check_martingale_zero_mean(np.zeros((3, 1)), [0.0]).passed
    biased = RandomSource(0).normals(400).reshape(200, 2) + 1.0
    assert not check_martingale_zero_mean(biased, [1.0, 2.0]).passed


def test_running_time_average_constant():
    avg = running_time_average([0.0, 1.0, 2.0, 4.0], [3.0, 3.0, 3.0, 3.0])
    assert math.isnan(avg[0]) and np.allclose(avg[1:], 3.0)


def test_theta_power_proxy():
    times = np.linspace(0, 10, 11)
    flat = np.ones((2, 11))
    assert check_timeaverage_theta_power(flat, times, 2).passed
    growing = np.exp(times)[None, :].repeat(2, 0)
    assert not check_timeaverage_theta_power(growing, times, 2).passed


def test_eta_second_moment():
    eta = np.full((4, 2), 1.0)
    assert check_eta_second_moment(eta, 1.0, 1.0, 1.0).passed
    assert not check_eta_second_moment(eta * 10, 1.0, 1.0, 1.0).passed


def test_limit_check_tolerances():
    z = RandomSource(7).normals(20000).reshape(-1, 1)
    rep = estimate_moments(z, [1, 2, 3, 4], [5.0])
    flags = check_limiting_moments(rep)
    assert all(f.passed for f in flags.values())
    rep = estimate_moments(z * 1.15, [2], [5.0])
    assert not check_limiting_moments(rep)["limit_moment_r2"].passed
