import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regretrl import oracle
from regretrl.errors import ArgumentError, CapacityError
from regretrl.fixtures import (FAST, LEFT, RIGHT, S0, SA, SB, SLOW, TERM, build_cliff_grid,
                               build_random_mdp, singleton_neighborhoods)

VALUE_GREEDY = np.array([RIGHT, SLOW, FAST, 0])
REGRET_GREEDY = np.array([LEFT, SLOW, SLOW, 0])


def path_value(mdp, act_at, step_reward=None, s0=None):
    """Expected return by summing over every trajectory (no dynamic programming).

    ``act_at(t, s)`` gives the action at true state ``s`` on step ``t``.
    """
    R = mdp.reward if step_reward is None else step_reward
    s0 = mdp.start if s0 is None else s0
    total = 0.0
    for nexts in itertools.product(range(mdp.n_states), repeat=mdp.horizon):
        prob, ret, s, disc = 1.0, 0.0, s0, 1.0
        for t, nxt in enumerate(nexts):
            if s in mdp.terminal:
                break
            a = act_at(t, s)
            ret += disc * R[s, a]
            prob *= mdp.transition[s, a, nxt]
            disc *= mdp.gamma
            s = nxt
            if prob == 0.0:
                break
        total += prob * ret
    return total


def test_twolane_values(twolane):
    assert oracle.exact_v_pi(twolane, VALUE_GREEDY)[S0] == 2
    assert oracle.exact_v_pi(twolane, REGRET_GREEDY)[S0] == 0.5


def test_gamma_zero_values_are_immediate_rewards():
    mdp = build_random_mdp(4)
    pi = np.zeros(mdp.n_states, dtype=int)
    flat = dataclasses.replace(mdp, gamma=1e-300)
    np.testing.assert_allclose(oracle.exact_v_pi(flat, pi), mdp.reward[:, 0], atol=1e-12)


def test_twolane_v_pi_mu_swap(twolane):
    mu = np.array([S0, SB, SA, TERM])
    assert oracle.exact_v_pi_mu(twolane, VALUE_GREEDY, mu)[S0] == 1


def test_twolane_regret_greedy_immune(twolane):
    for mu in oracle.enumerate_adversaries(twolane):
        assert oracle.exact_v_pi_mu(twolane, REGRET_GREEDY, mu)[S0] == 0.5


def test_v_pi_mu_rejects_off_neighborhood(twolane):
    with pytest.raises(ArgumentError):
        oracle.exact_v_pi_mu(twolane, VALUE_GREEDY, np.array([SA, SA, SB, TERM]))


def test_adversary_enumeration_exhaustive(twolane, cliff):
    mus = [tuple(m) for m in oracle.enumerate_adversaries(twolane)]
    assert len(mus) == len(set(mus)) == oracle.adversary_count(twolane) == 4
    # cliff cells and the goal are terminal singletons
    assert oracle.adversary_count(cliff) == 3 * 4 * 5 * 5 * 4 * 3 * 4 * 4 * 3


def test_max_regret(twolane):
    val, mu = oracle.exact_max_regret(twolane, VALUE_GREEDY)
    assert val == 1.0 and mu[SB] == SA
    assert oracle.exact_max_regret(twolane, REGRET_GREEDY)[0] == 0.0
    single = singleton_neighborhoods(twolane)
    assert oracle.exact_max_regret(single, VALUE_GREEDY)[0] == 0.0


def test_max_regret_capacity():
    big = build_cliff_grid(6, 4)
    with pytest.raises(CapacityError):
        oracle.exact_max_regret(big, np.zeros(big.n_states, dtype=int))


def test_v_check(twolane):
    vc = oracle.exact_v_check(twolane, VALUE_GREEDY)
    assert vc[SB] == -10
    assert np.all(vc <= oracle.exact_v_pi(twolane, VALUE_GREEDY))
    single = singleton_neighborhoods(twolane)
    np.testing.assert_array_equal(oracle.exact_v_check(single, VALUE_GREEDY),
                                  oracle.exact_v_pi(single, VALUE_GREEDY))


def test_ccer_tables(twolane):
    q = oracle.optimal_ccer_q(twolane)
    np.testing.assert_array_equal(q, [[0, 0.5], [0, 0], [0.5, 12], [0, 0]])
    assert oracle.exact_ccer(twolane, VALUE_GREEDY)[S0] == 12
    assert np.all(oracle.exact_ccer(singleton_neighborhoods(twolane), VALUE_GREEDY) == 0)


def test_optimal_policies(twolane):
    np.testing.assert_array_equal(oracle.value_optimal_policy(twolane)[:3], VALUE_GREEDY[:3])
    np.testing.assert_array_equal(oracle.regret_optimal_policy(twolane)[:3], REGRET_GREEDY[:3])
    q = oracle.optimal_q(twolane)
    assert (q[S0, RIGHT], q[SA, SLOW], q[SA, FAST], q[SB, FAST]) == (2, 0.5, -10, 2)


def test_regret_bound_twolane(twolane):
    res = oracle.check_prop1(twolane, VALUE_GREEDY)
    assert res.margin == 11 and res.holds
    single = oracle.check_prop1(singleton_neighborhoods(twolane), VALUE_GREEDY)
    assert single.margin == 0 and single.holds


def test_regret_bound_flags_corruption(twolane):
    ccer = oracle.exact_ccer(twolane, VALUE_GREEDY) - 20
    assert not oracle.check_prop1(twolane, VALUE_GREEDY, ccer_values=ccer).holds


def test_optimal_substructure(twolane):
    assert oracle.check_prop2(twolane)
    assert oracle.check_prop2(twolane, horizon=1)
    for seed in range(5):
        assert oracle.check_prop2(build_random_mdp(seed, 3, 2, horizon=3))


def test_optimal_substructure_capacity():
    with pytest.raises(CapacityError):
        oracle.check_prop2(build_random_mdp(0, 6, 3, horizon=5))


def test_exact_tables_bundle(twolane):
    t = oracle.exact_tables(twolane, VALUE_GREEDY, mu=np.arange(4))
    np.testing.assert_array_equal(t.v_pi_mu, t.v_pi)
    assert t.v_pi[TERM] == t.v_check[TERM] == t.ccer[TERM] == 0


def test_scheduled_evaluation(twolane):
    mu = np.array([S0, SB, SA, TERM])
    # firing only on step 1 is the same as every step here (s0 is a singleton)
    assert oracle.exact_v_pi_mu(twolane, VALUE_GREEDY, mu, schedule=(2, 1))[S0] == 1
    # firing only on step 0 leaves the second decision clean
    assert oracle.exact_v_pi_mu(twolane, VALUE_GREEDY, mu, schedule=(2, 0))[S0] == 2
    np.testing.assert_array_equal(oracle.fire_schedule(5, (2, 0)), [1, 0, 1, 0, 1])


# -- independent cross-checks on random MDPs --------------------------------

small_mdps = st.builds(lambda seed, n, a: build_random_mdp(seed, n, a, horizon=3),
                       st.integers(0, 5000), st.integers(2, 4), st.integers(2, 3))


@given(small_mdps, st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_dp_matches_path_enumeration(mdp, pseed):
    rng = np.random.default_rng(pseed)
    pi = rng.integers(mdp.n_actions, size=mdp.n_states)
    mu = np.array([rng.choice(m) for m in mdp.neighborhoods])
    assert oracle.exact_v_pi(mdp, pi)[0] == pytest.approx(path_value(mdp, lambda t, s: pi[s]), abs=1e-12)
    assert oracle.exact_v_pi_mu(mdp, pi, mu)[0] == pytest.approx(
        path_value(mdp, lambda t, s: pi[mu[s]]), abs=1e-12)
    assert oracle.exact_ccer(mdp, pi)[0] == pytest.approx(
        path_value(mdp, lambda t, s: pi[s], step_reward=mdp.gap_table()), abs=1e-12)


@given(small_mdps, st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_value_invariants(mdp, pseed):
    pi = np.random.default_rng(pseed).integers(mdp.n_actions, size=mdp.n_states)
    v = oracle.exact_v_pi(mdp, pi)
    np.testing.assert_allclose(oracle.exact_v_pi_mu(mdp, pi, np.arange(mdp.n_states)), v, atol=1e-12)
    assert np.all(oracle.exact_v_check(mdp, pi) <= v + 1e-12)
    assert np.all(oracle.exact_ccer(mdp, pi) >= -1e-12)


@given(small_mdps)
@settings(max_examples=30, deadline=None)
def test_optimal_ccer_bellman_residual(mdp):
    tables = oracle.optimal_ccer_tables(mdp)
    gap = mdp.gap_table()
    for h in range(1, mdp.horizon + 1):
        rhs = gap + mdp.gamma * mdp.transition @ tables[h - 1].min(axis=1)
        assert np.max(np.abs(tables[h] - rhs)) < 1e-12


@given(small_mdps)
@settings(max_examples=30, deadline=None)
def test_optimal_ccer_is_minimum_over_policies(mdp):
    best = oracle.optimal_ccer_tables(mdp)[-1].min(axis=1)
    for pi in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        assert np.all(oracle.exact_ccer(mdp, np.array(pi)) >= best - 1e-12)


@given(small_mdps, st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_max_regret_matches_loop(mdp, pseed):
    pi = np.random.default_rng(pseed).integers(mdp.n_actions, size=mdp.n_states)
    v = oracle.exact_v_pi(mdp, pi)
    brute = max(v[mu[0]] - oracle.exact_v_pi_mu(mdp, pi, mu)[0]
                for mu in oracle.enumerate_adversaries(mdp))
    assert oracle.exact_max_regret(mdp, pi)[0] == pytest.approx(brute, abs=1e-12)
