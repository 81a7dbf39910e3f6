import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from nashdelay import game as gm
from nashdelay import seeking as sk
from nashdelay import stability as st
from nashdelay import topology as tp

from .conftest import random_instance


def stacked_recursion(game, graph, xi, tau, strategies, estimations, stages):
    """Matrix-form reference: est(0) from the compact estimation update, then
    x(t+1) = H1 x(t) + H2 x(t+1-tau) + c_bar on x = (1 kron s, est)."""
    n = game.n
    sys_ = st.build_augmented(game, graph, xi, tau)
    est = tp.build_estimation_matrices(graph)
    ones = np.ones(n)
    hist = [np.concatenate([np.kron(ones, s), e.reshape(-1)])
            for s, e in zip(strategies[:-1], estimations)]  # k = -tau..-1
    e0 = (estimations[-1].reshape(-1) + xi * est.P @ estimations[0].reshape(-1)
          + xi * est.B @ np.kron(ones, strategies[0]))
    hist.append(np.concatenate([np.kron(ones, strategies[-1]), e0]))  # k = 0
    for _ in range(stages):
        hist.append(sys_.H1 @ hist[-1] + sys_.H2 @ hist[-tau] + sys_.c_bar)
    return np.array(hist[tau:])  # k = 0..stages


def agent_level(game, graph, cfg, strategies, estimations, stages):
    n = game.n
    state = sk.init_state_from_history(game, graph, strategies, estimations)
    out = []
    s_t = state.current
    for _ in range(stages + 1):
        state = sk.step(game, graph, cfg, state)
        out.append(np.concatenate([np.kron(np.ones(n), s_t), state.stacked_estimation()]))
        s_t = state.current
    return np.array(out)


def test_window_lengths(ex1, wheel5):
    cfg = sk.SeekingConfig(xi=0.1, tau=1)
    state = sk.init_state(ex1, wheel5, cfg, np.zeros(5), np.zeros(25))
    assert len(state.strategies) == 2 and len(state.estimations) == 1
    cfg3 = sk.SeekingConfig(xi=0.08, tau=3)
    s0, e0 = sk.split_initial(5)
    state = sk.init_state(ex1, wheel5, cfg3, s0, list(e0))
    assert len(state.strategies) == 4 and len(state.estimations) == 3
    assert_array_equal(state.current, [-1, -1, -1, 1, 1])
    state = sk.step(ex1, wheel5, cfg3, state)
    assert len(state.strategies) == 4 and len(state.estimations) == 3 and state.t == 1


def test_split_initial_estimates():
    s0, e0 = sk.split_initial(5)
    assert_array_equal(s0, [-1, -1, -1, 1, 1])
    assert_array_equal(e0[:3], -np.ones((3, 5)))
    assert_array_equal(e0[3:], np.ones((2, 5)))


def test_init_rejects_bad_inputs(ex1, wheel5):
    cfg = sk.SeekingConfig(xi=0.1, tau=2)
    with pytest.raises(sk.SeekingError):
        sk.init_state(ex1, wheel5, cfg, np.zeros(4), np.zeros(25))
    with pytest.raises(sk.SeekingError):
        sk.init_state(ex1, wheel5, cfg, np.zeros(5), np.zeros(24))
    split = tp.Graph.from_edges(5, [(0, 1), (2, 3), (3, 4)])
    with pytest.raises(sk.SeekingError, match="connected"):
        sk.init_state(ex1, split, cfg, np.zeros(5), np.zeros(25))
    with pytest.raises(sk.SeekingError):
        sk.SeekingConfig(xi=0.1, tau=0)


def test_zero_learning_rate_freezes_estimates(ex1, wheel5, ex1_init):
    cfg = sk.SeekingConfig(xi=0.0, tau=2, max_stages=20, termination_delta=0.0)
    traj = sk.simulate(ex1, wheel5, cfg, *ex1_init)
    assert_allclose(traj.strategies[2:], np.tile(traj.strategies[1], (19, 1)))
    mats = gm.build_matrices(ex1)
    assert_allclose(traj.strategies[1], (mats.M * ex1_init[1]).sum(axis=1) + mats.c)


@pytest.mark.parametrize("tau", [1, 2, 4])
@pytest.mark.parametrize("xi", [0.05, 0.3])
def test_equilibrium_is_stationary(ex1, wheel5, tau, xi):
    s_star = gm.nash_equilibrium(ex1)
    cfg = sk.SeekingConfig(xi=xi, tau=tau)
    state = sk.init_state(ex1, wheel5, cfg, s_star, np.tile(s_star, (5, 1)))
    nxt = sk.step(ex1, wheel5, cfg, state)
    assert_allclose(nxt.current, s_star, atol=1e-14)
    assert_allclose(nxt.latest_estimation, np.tile(s_star, (5, 1)), atol=1e-14)


def test_one_step_matches_compact_update(ex1, wheel5, ex1_init):
    xi = 0.18
    cfg = sk.SeekingConfig(xi=xi, tau=1)
    state = sk.init_state(ex1, wheel5, cfg, *ex1_init)
    nxt = sk.step(ex1, wheel5, cfg, state)
    est = tp.build_estimation_matrices(wheel5)
    e_prev = ex1_init[1].reshape(-1)
    expected = (np.eye(25) + xi * est.P) @ e_prev + xi * est.B @ np.kron(np.ones(5), ex1_init[0])
    assert np.max(np.abs(nxt.stacked_estimation() - expected)) <= 1e-12


def test_self_estimates_follow_consensus_only(ex1, wheel5):
    rng = np.random.default_rng(3)
    cfg = sk.SeekingConfig(xi=0.1, tau=1)
    s0, e0 = rng.normal(size=5), rng.normal(size=(5, 5))
    nxt = sk.step(ex1, wheel5, cfg, sk.init_state(ex1, wheel5, cfg, s0, e0))
    for i in range(5):
        cons = sum(e0[k, i] - e0[i, i] for k in wheel5.neighbors(i))
        assert nxt.latest_estimation[i, i] == pytest.approx(e0[i, i] + 0.1 * cons, abs=1e-14)


@pytest.mark.parametrize("tau", [1, 2, 3])
def test_compact_form_equivalence(tau):
    rng = np.random.default_rng(100 + tau)
    for _ in range(8):
        game, graph = random_instance(rng, (2, 6))
        xi = float(rng.uniform(0.01, 0.9)) * st.delta1(graph)
        n = game.n
        strategies = [rng.normal(size=n) for _ in range(tau + 1)]
        estimations = [rng.normal(size=(n, n)) for _ in range(tau)]
        cfg = sk.SeekingConfig(xi=xi, tau=tau)
        ref = stacked_recursion(game, graph, xi, tau, strategies, estimations, 60)
        got = agent_level(game, graph, cfg, strategies, estimations, 60)
        assert np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))) <= 1e-10


def test_run_example1_tau3_converges_tau4_diverges(ex1, wheel5, ex1_init):
    ok = sk.simulate(ex1, wheel5, sk.SeekingConfig(xi=0.08, tau=3), *ex1_init)
    assert ok.status == sk.CONVERGED
    assert ok.profile_errors[-1] <= 1e-4
    assert np.all(ok.agent_errors[-1] <= 1e-4)
    bad = sk.simulate(ex1, wheel5, sk.SeekingConfig(xi=0.08, tau=4), *ex1_init)
    assert bad.status == sk.DIVERGED
    assert bad.profile_errors[-1] > 1e6
    assert bad.terminal_stage is None


def test_run_example2_exponential_decay(ex1, wheel5, ex1_init):
    traj = sk.simulate(ex1, wheel5, sk.SeekingConfig(xi=0.18, tau=1, termination_delta=1e-4), *ex1_init)
    assert traj.converged
    T = traj.terminal_stage
    assert T == traj.stages[-1]
    assert np.all(traj.profile_errors[:T] > 1e-4)
    assert traj.log_error_slope() < 0


def test_consensus_at_convergence(ex1, wheel5, ex1_init):
    cfg = sk.SeekingConfig(xi=0.15, tau=2, termination_delta=1e-6, record_estimations=True)
    traj = sk.simulate(ex1, wheel5, cfg, *ex1_init)
    assert traj.converged
    est = traj.estimations[-1]
    assert np.max(np.abs(est - traj.equilibrium[None, :])) <= 100 * 1e-6  # estimates lag the strategies by a bounded factor


def test_metrics(ex1, wheel5, ex1_init):
    traj = sk.simulate(ex1, wheel5, sk.SeekingConfig(xi=0.1, tau=1, max_stages=30), *ex1_init)
    k = 7
    s = traj.strategies[k]
    assert_allclose(traj.agent_errors[k], np.abs(s - traj.equilibrium))
    assert traj.profile_errors[k] == pytest.approx(np.linalg.norm(s - traj.equilibrium))
    util = sum(gm.payoff(ex1, s, i) - gm.payoff(ex1, traj.equilibrium, i) for i in range(5))
    assert traj.utility_errors[k] == pytest.approx(abs(util), rel=1e-9, abs=1e-12)
    assert np.all(traj.utility_errors >= 0)


def test_determinism(ex1, wheel5, ex1_init):
    cfg = sk.SeekingConfig(xi=0.2, tau=2, max_stages=300, record_estimations=True)
    a = sk.simulate(ex1, wheel5, cfg, *ex1_init)
    b = sk.simulate(ex1, wheel5, cfg, *ex1_init)
    assert_array_equal(a.strategies, b.strategies)
    assert_array_equal(a.estimations, b.estimations)


def test_trajectory_csv(tmp_path, ex1, wheel5, ex1_init):
    cfg = sk.SeekingConfig(xi=0.1, tau=1, max_stages=5, record_estimations=True)
    traj = sk.simulate(ex1, wheel5, cfg, *ex1_init)
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    rows = list(csv.reader(path.open()))
    header = rows[0]
    assert header[:7] == ["stage", "s_1", "s_2", "s_3", "s_4", "s_5", "err_1"]
    assert header[11:13] == ["profile_err", "utility_err"]
    assert header[13] == "est_1_1" and header[-1] == "est_5_5"
    assert len(rows) == 7
    assert float(rows[3][1]) == traj.strategies[2, 0]


def test_xi_max_by_simulation_example1(ex1, wheel5):
    xi = sk.xi_max_by_simulation(ex1, wheel5, 1)
    assert abs(xi - st.xi_max_by_spectrum(ex1, wheel5, 1)) <= 1e-2
    assert abs(xi - 1 / 3) <= 5e-3


def test_xi_max_by_simulation_bracket_error(ex1, wheel5):
    with pytest.raises(sk.BracketError):
        sk.xi_max_by_simulation(ex1, wheel5, 1, cap=0.1, max_stages=2000)
