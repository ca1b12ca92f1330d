import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regretrl import oracle
from regretrl.adversary import (AdversarySpec, actor_choice, actor_train, attack_table, fgsm_attack,
                                myopic_attack, schedule_perturbation)
from regretrl.approx import FeatureMap, MlpStore, TabularStore
from regretrl.errors import ConfigurationError, UsageError
from regretrl.fixtures import (FAST, LEFT, RIGHT, S0, SA, SB, SLOW, TERM, build_cliff_grid,
                               build_random_mdp, build_twolane, singleton_neighborhoods)
from regretrl.harness import ExperimentConfig, evaluate
from regretrl.learning import LearnerConfig, PolicyHandle, train
from regretrl.mdp import NeighborhoodSample, TabularMdp, attack_neighborhoods, neighborhood_of

VALUE_GREEDY = PolicyHandle("fixed_table", fixed=np.array([RIGHT, SLOW, FAST, 0]))
REGRET_GREEDY = PolicyHandle("fixed_table", fixed=np.array([LEFT, SLOW, SLOW, 0]))


def attacked_return(mdp, victim, spec, shown):
    return evaluate(mdp, victim, spec, ExperimentConfig(eval_seeds=1, episodes=spec.t_adv), shown).mean


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        AdversarySpec("pgd")
    with pytest.raises(ConfigurationError):
        AdversarySpec("myopic", t_adv=0)
    with pytest.raises(ConfigurationError):
        AdversarySpec("myopic", t_adv=2, window_offset=2)
    with pytest.raises(ConfigurationError):
        AdversarySpec("actor")
    with pytest.raises(ConfigurationError):
        AdversarySpec("myopic", inflation=-1)


def test_schedule_window():
    spec = AdversarySpec("myopic", t_adv=2, window_offset=0)
    fired = [schedule_perturbation(spec, t, 1, shown=[0, 2, 2]).fired for t in range(6)]
    assert fired == [True, False, True, False, True, False]
    obs = schedule_perturbation(spec, 0, 1, shown=[0, 2, 2])
    assert (obs.true_state, obs.shown_state) == (1, 2)
    every = AdversarySpec("myopic", t_adv=1)
    assert all(schedule_perturbation(every, t, 0, shown=lambda s: s).fired for t in range(5))
    none = AdversarySpec("none")
    obs = schedule_perturbation(none, 0, 1)
    assert not obs.fired and obs.shown_state == 1
    with pytest.raises(UsageError):
        schedule_perturbation(spec, 0, 1)


def test_myopic_examples(twolane):
    qstar = oracle.optimal_q(twolane)
    assert myopic_attack(qstar, VALUE_GREEDY, SA, NeighborhoodSample(SA, (SA, SB))) == SB
    nb = NeighborhoodSample(SB, (SB, SA))
    shown = myopic_attack(qstar, REGRET_GREEDY, SB, nb)
    assert REGRET_GREEDY.act(shown) == SLOW
    assert myopic_attack(qstar, VALUE_GREEDY, S0, NeighborhoodSample(S0, (S0,))) == S0


def test_myopic_regret_greedy_attack_impotent(twolane):
    qstar = oracle.optimal_q(twolane)
    spec = AdversarySpec("myopic", t_adv=1, inflation=0.0)
    shown = attack_table(spec, twolane, REGRET_GREEDY, qstar)
    assert attacked_return(twolane, REGRET_GREEDY, spec, shown) == 0.5


def test_myopic_uniform_victim_keeps_state(twolane):
    qstar = oracle.optimal_q(twolane)
    uni = PolicyHandle("uniform", n_actions=2)
    assert myopic_attack(qstar, uni, SA, NeighborhoodSample(SA, (SA, SB))) == SA


def test_actor_vs_value_greedy(twolane):
    spec = actor_train(twolane, VALUE_GREEDY, LearnerConfig(episodes=2000, seed=1))
    shown = attack_table(spec, twolane, VALUE_GREEDY)
    assert shown[SA] == SB and shown[SB] == SA
    assert attacked_return(twolane, VALUE_GREEDY, spec, shown) == -10
    # the myopic attack induces the same victim actions (it may pick a different
    # neighbor that maps to the same action)
    qstar = oracle.optimal_q(twolane)
    myo = AdversarySpec("myopic", 1, 0, 0.2)
    pi = VALUE_GREEDY.action_table(4)
    np.testing.assert_array_equal(pi[attack_table(myo, twolane, VALUE_GREEDY, qstar)], pi[shown])


def test_actor_vs_regret_greedy_all_tie(twolane):
    spec = actor_train(twolane, REGRET_GREEDY, LearnerConfig(episodes=2000, seed=1))
    shown = attack_table(spec, twolane, REGRET_GREEDY)
    assert attacked_return(twolane, REGRET_GREEDY, spec, shown) == 0.5
    for mu in oracle.enumerate_adversaries(twolane):
        assert oracle.exact_v_pi_mu(twolane, REGRET_GREEDY.action_table(4), mu)[S0] == 0.5


def test_actor_indifferent_to_uniform_victim():
    # a chain where every action pays the same and moves forward
    n = 4
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2))
    for s in range(n - 1):
        P[s, :, s + 1] = 1.0
        R[s] = 1.0
    P[n - 1, :, n - 1] = 1.0
    nb = ((0, 1), (1, 0, 2), (2, 1), (3,))
    mdp = TabularMdp(P, R, nb, frozenset({n - 1}), 0.9, n)
    spec = actor_train(mdp, PolicyHandle("uniform", n_actions=2), LearnerConfig(episodes=3000, seed=4),
                       inflation=0.0)
    for s in range(n - 1):
        row = spec.actor.predict(s)[: len(nb[s])]
        assert np.ptp(row) < 1e-3


def test_actor_choice_stays_in_neighborhood(cliff):
    victim = PolicyHandle("fixed_table", fixed=oracle.value_optimal_policy(cliff))
    spec = actor_train(cliff, victim, LearnerConfig(episodes=300, seed=2))
    nbhds = attack_neighborhoods(cliff, spec.inflation)
    for s in range(cliff.n_states):
        assert actor_choice(spec, cliff, s) in nbhds[s]


def test_fgsm_trivial_cases(cliff):
    feats = FeatureMap.grid_xy(cliff)
    net = MlpStore.create(feats, 4, seed=0)
    nb = neighborhood_of(cliff, 5, 0.2)
    assert fgsm_attack(net, feats, 5, 0.0, nb) == 5
    zero = MlpStore(feats, 4, params=np.zeros(net.n_params))
    assert fgsm_attack(zero, feats, 5, 1.0, nb) == 5
    with pytest.raises(ConfigurationError):
        fgsm_attack(TabularStore(12, 4), feats, 5, 1.0, nb)


def test_fgsm_moves_most_states_on_cliff():
    mdp = build_cliff_grid(4, 3)
    cfg = LearnerConfig(episodes=1500, seed=1, value_store="mlp", features="grid_xy", alpha_q=0.01)
    res = train(mdp, cfg, "dqn")
    victim = res.policy.freeze(mdp.n_states)
    shown = attack_table(AdversarySpec("fgsm", 1, 0, 0.2, 1.0), mdp, victim, victim_net=res.stores["q"])
    live = [s for s in range(mdp.n_states) if s not in mdp.terminal]
    assert np.mean([shown[s] != s for s in live]) >= 0.5


def test_attack_table_needs_inputs(twolane):
    with pytest.raises(ConfigurationError):
        attack_table(AdversarySpec("myopic"), twolane, VALUE_GREEDY)
    with pytest.raises(ConfigurationError):
        attack_table(AdversarySpec("fgsm"), twolane, VALUE_GREEDY)
    np.testing.assert_array_equal(attack_table(AdversarySpec("none"), twolane, VALUE_GREEDY), np.arange(4))


@given(st.integers(0, 2000), st.integers(0, 2000), st.sampled_from([0.0, 0.2, 0.5]))
@settings(max_examples=40, deadline=None)
def test_myopic_shown_states_in_attack_neighborhood(seed, pseed, inflation):
    mdp = build_random_mdp(seed)
    pi = np.random.default_rng(pseed).integers(mdp.n_actions, size=mdp.n_states)
    victim = PolicyHandle("fixed_table", fixed=pi)
    shown = attack_table(AdversarySpec("myopic", inflation=inflation), mdp, victim, oracle.optimal_q(mdp))
    nbhds = attack_neighborhoods(mdp, inflation)
    assert all(shown[s] in nbhds[s] for s in range(mdp.n_states))


def test_singleton_neighborhood_attack_is_identity(twolane):
    single = singleton_neighborhoods(twolane)
    shown = attack_table(AdversarySpec("myopic", inflation=0.0), single, VALUE_GREEDY,
                         oracle.optimal_q(single))
    np.testing.assert_array_equal(shown, np.arange(4))


@pytest.mark.parametrize("mdp", [build_twolane(), build_cliff_grid(4, 3), build_cliff_grid(5, 3)],
                         ids=["twolane", "cliff4x3", "cliff5x3"])
def test_lower_t_adv_never_helps_victim(mdp):
    qstar = oracle.optimal_q(mdp)
    for pi in (oracle.value_optimal_policy(mdp), oracle.regret_optimal_policy(mdp)):
        victim = PolicyHandle("fixed_table", fixed=pi)
        shown = attack_table(AdversarySpec("myopic", inflation=0.0), mdp, victim, qstar)
        mean = {}
        for t_adv in (1, 2, 3):
            vals = [oracle.exact_v_pi_mu(mdp, pi, shown, schedule=(t_adv, off))[mdp.start]
                    for off in range(t_adv)]
            mean[t_adv] = float(np.mean(vals))
        assert mean[1] <= mean[2] + 1e-12 and mean[1] <= mean[3] + 1e-12
