import numpy as np
import pytest

from reinverify.metrics import traceback
from reinverify.mdp import (TIE, FiniteMdp, greedy_policy, policies_agree, random_mdp,
                            shape_mdp, value_iteration)


def test_single_state_geometric_series():
    mdp = FiniteMdp(np.ones((1, 1, 1)), np.ones((1, 1, 1)), 0.5)
    assert value_iteration(mdp)[0, 0] == pytest.approx(2.0, abs=1e-10)


def test_zero_reward():
    rng = np.random.default_rng(3)
    mdp = random_mdp(rng, 4, 3, 0.9)
    mdp.R[:] = 0.0
    assert np.all(value_iteration(mdp) == 0.0)


def test_two_state_chain():
    # state 0: action 0 stays (r=0), action 1 moves to 1 (r=0); state 1 absorbs with r=1
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[0, 1, 1] = P[1, :, 1] = 1.0
    R = np.zeros((2, 2, 2))
    R[1, :, 1] = 1.0
    gamma = 0.9
    Q = value_iteration(FiniteMdp(P, R, gamma))
    v1 = 1 / (1 - gamma)
    assert Q[1] == pytest.approx([v1, v1], abs=1e-9)
    assert Q[0, 1] == pytest.approx(gamma * v1, abs=1e-9)
    assert Q[0, 0] == pytest.approx(gamma * gamma * v1, abs=1e-9)
    assert greedy_policy(Q)[0] == 1


def test_gamma_zero_is_expected_reward():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, 3, 2, 0.0)
    assert np.allclose(value_iteration(mdp), (mdp.P * mdp.R).sum(axis=2))


def test_zero_potential_is_identity():
    mdp = random_mdp(np.random.default_rng(5), 3, 2, 0.8)
    shaped = shape_mdp(mdp, np.zeros(3))
    assert np.array_equal(shaped.R, mdp.R)


def test_constant_potential_shifts_uniformly():
    mdp = random_mdp(np.random.default_rng(6), 3, 2, 0.8)
    shaped = shape_mdp(mdp, np.full(3, 2.5))
    assert np.allclose(shaped.R - mdp.R, (0.8 - 1) * 2.5)
    assert greedy_policy(value_iteration(shaped)) == greedy_policy(value_iteration(mdp))


def test_q_shift_identity():
    rng = np.random.default_rng(7)
    for _ in range(10):
        mdp = random_mdp(rng, 5, 3, float(rng.uniform(0.5, 0.95)))
        psi = rng.uniform(-5, 5, 5)
        Q = value_iteration(mdp)
        Qs = value_iteration(shape_mdp(mdp, psi))
        assert np.abs(Qs - (Q - psi[:, None])).max() < 10 * 1e-10
        assert policies_agree(greedy_policy(Q), greedy_policy(Qs))


def test_greedy_policy_examples():
    assert greedy_policy([[1.0, 3.0, 2.0]], 0.1) == [1]
    assert greedy_policy([[1.0, 1.00001]], 0.1) == [TIE]
    assert greedy_policy([[4.0]]) == [0]
    with pytest.raises(ValueError):
        greedy_policy([[1.0, 2.0]], 0.0)
    assert repr(TIE) == "AmbiguousTie"


def test_ties_are_ignored_when_comparing():
    assert policies_agree([0, TIE, 2], [0, 1, 2])
    assert not policies_agree([0, 1], [0, 2])


def test_traceback_along_a_trajectory_is_the_shaping_term():
    rng = np.random.default_rng(8)
    psi = rng.uniform(-5, 5, 6)
    gamma = 0.9
    states = rng.integers(0, 6, 25)
    F = psi[states]
    traced = traceback(F, "reach", gamma, 0.0)
    for t in range(len(states) - 1):
        assert traced[t] == gamma * psi[states[t + 1]] - psi[states[t]]


def test_json_round_trip():
    mdp = random_mdp(np.random.default_rng(9), 3, 2, 0.7)
    back = FiniteMdp.from_json(mdp.to_json())
    assert np.array_equal(back.P, mdp.P) and np.array_equal(back.R, mdp.R)
    assert back.gamma == mdp.gamma


@pytest.mark.parametrize("kwargs", [
    dict(P=np.ones((2, 1, 2)), R=np.zeros((2, 1, 2)), gamma=0.5),
    dict(P=np.ones((1, 1, 1)), R=np.zeros((1, 1, 1)), gamma=1.0),
    dict(P=np.ones((1, 1, 1)), R=np.zeros((2, 1, 1)), gamma=0.5),
    dict(P=np.ones((1, 1)), R=np.zeros((1, 1)), gamma=0.5),
])
def test_mdp_validation(kwargs):
    with pytest.raises(ValueError):
        FiniteMdp(**kwargs)


def test_value_iteration_rejects_bad_tolerance():
    mdp = FiniteMdp(np.ones((1, 1, 1)), np.ones((1, 1, 1)), 0.5)
    with pytest.raises(ValueError):
        value_iteration(mdp, tol=0.0)
    with pytest.raises(ValueError):
        shape_mdp(mdp, [1.0, 2.0])
