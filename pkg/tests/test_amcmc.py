import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amcmc_diffusion.amcmc import (ChainState, DiscreteAdaptParams, ScaledChainParams,
                                   run_chain, simulate_chain_ensemble, step_discrete,
                                   step_scaled)
from amcmc_diffusion.rng import RandomSource


def test_discrete_forced_accept_at_mode(normal):
    s = step_discrete(ChainState.start(0.0, 1.0), DiscreteAdaptParams(0.5), normal, None,
                      eps=0.0, u=0.5)
    assert s.xi == 1 and s.n == 1 and s.x == 0.0
    assert s.theta == pytest.approx(math.exp(0.5), rel=1e-15)
    assert round(s.theta, 6) == 1.648721


def test_discrete_p_acc_near_one_leaves_theta(normal):
    p = DiscreteAdaptParams(1 - 1e-15)
    s = step_discrete(ChainState.start(0.0, 2.0), p, normal, None, eps=0.0, u=0.0)
    assert s.theta == pytest.approx(2.0, rel=1e-14)


def test_discrete_uses_post_increment_index(normal):
    p = DiscreteAdaptParams(0.5)
    s = ChainState(0.0, 0.0, 0, 3)
    out = step_discrete(s, p, normal, None, eps=0.0, u=0.0)
    assert out.log_theta == pytest.approx(0.5 / 2.0)


def test_scaled_zero_proposal(normal):
    params = ScaledChainParams(100, 1.0)
    s = step_scaled(ChainState.start(0.7, 1.5), params, normal, None, eps=0.0, u=0.999)
    assert s.x == 0.7 and s.xi == 1
    assert s.log_theta == pytest.approx(math.log(1.5) + (1 - params.p_n) / 10)


def test_p_n_example():
    assert ScaledChainParams(4, 1.0).p_n == 0.5


def test_scaled_rejection_keeps_x(normal):
    params = ScaledChainParams(100, 1.0)
    s = step_scaled(ChainState.start(0.0, 1.0), params, normal, None, eps=5.0, u=0.9999)
    assert s.xi == 0 and s.x == 0.0
    assert s.log_theta == pytest.approx(-params.p_n / 10)


@pytest.mark.parametrize("n_scale,p", [(0, 1.0), (10**9, 1.0), (4, 2.0), (100, -1.0)])
def test_scaled_params_rejected(n_scale, p):
    with pytest.raises(ValueError):
        ScaledChainParams(n_scale, p)


def test_discrete_params_rejected():
    with pytest.raises(ValueError):
        DiscreteAdaptParams(1.0)


def test_run_chain_zero_steps(normal):
    init = ChainState.start(0.3, 2.0)
    tr = run_chain(init, DiscreteAdaptParams(), normal, 0, RandomSource(1))
    assert len(tr) == 1 and tr.x[0] == 0.3 and tr.theta[0] == 2.0


def test_run_chain_stride_records(normal):
    tr = run_chain(ChainState.start(), DiscreteAdaptParams(), normal, 100, RandomSource(1),
                   stride=10)
    assert len(tr) == 11 and tr.t[0] == 0.0 and tr.t[-1] == 100.0


def test_run_chain_deterministic(normal):
    params = ScaledChainParams(1000)
    a = run_chain(ChainState.start(), params, normal, 500, RandomSource(9))
    b = run_chain(ChainState.start(), params, normal, 500, RandomSource(9))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.log_theta, b.log_theta)


@given(st.integers(0, 2**32), st.sampled_from(["discrete", "scaled"]))
@settings(max_examples=15, deadline=None)
def test_invariants_per_step(seed, kind):
    from amcmc_diffusion.targets import standard_normal
    target = standard_normal()
    params = DiscreteAdaptParams(0.44) if kind == "discrete" else ScaledChainParams(400, 1.0)
    scale = None if kind == "discrete" else 20.0
    rng = RandomSource(seed)
    s = ChainState.start(0.5, 1.0)
    total = 0.0
    for i in range(300):
        new = (step_discrete if kind == "discrete" else step_scaled)(s, params, target, rng)
        assert new.theta > 0
        if new.xi == 0:
            assert new.x == s.x
        root = math.sqrt(new.n) if scale is None else scale
        pbar = params.p_acc if kind == "discrete" else params.p_n
        total += (new.xi - pbar) / root
        s = new
    assert s.log_theta == pytest.approx(total, abs=1e-12)


@pytest.mark.parametrize("params", [DiscreteAdaptParams(0.44), ScaledChainParams(2500, 1.0)])
def test_ensemble_matches_scalar_chain(normal, params):
    rec = [0, 100, 1500, 2100]
    ens = simulate_chain_ensemble(params, normal, 4, 21, rec, x0=0.2, theta0=1.3)
    for r in range(4):
        tr = run_chain(ChainState.start(0.2, 1.3), params, normal, 2100,
                       RandomSource(21, r), stride=1)
        assert np.array_equal(ens.x[r], tr.x[rec])
        assert np.array_equal(ens.log_theta[r], tr.log_theta[rec])
        assert np.array_equal(ens.xi[r, 1:], tr.xi[rec][1:])
        assert ens.accepted[r, -1] == tr.xi[1:].sum()


def test_trajectory_csv(tmp_path, normal):
    tr = run_chain(ChainState.start(), ScaledChainParams(100), normal, 20, RandomSource(2))
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,theta,xi" and len(lines) == 22
    assert float(lines[5].split(",")[1]) == tr.x[4]
