"""The numba kernels and the pure-Python fallback must agree."""
import json
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from regretrl import kernels
from regretrl.fixtures import build_cliff_grid, build_random_mdp

PROBE = textwrap.dedent("""
    import json
    import numpy as np
    from regretrl import NUMBA_ENABLED, oracle
    from regretrl.adversary import AdversarySpec, actor_train, attack_table
    from regretrl.fixtures import build_cliff_grid
    from regretrl.harness import ExperimentConfig, evaluate
    from regretrl.learning import LearnerConfig, train

    mdp = build_cliff_grid(5, 3, slip=0.1)
    out = {"numba": NUMBA_ENABLED}
    for kind in ("dqn", "drn", "drn_plus"):
        res = train(mdp, LearnerConfig(episodes=600, selector_episodes=300, seed=3), kind)
        out[kind] = {k: s.table.tolist() for k, s in res.stores.items()}
        out[kind + "_policy"] = res.policy.action_table(mdp.n_states).tolist()
    victim = train(mdp, LearnerConfig(episodes=600, seed=3), "dqn").policy.freeze(mdp.n_states)
    actor = actor_train(mdp, victim, LearnerConfig(episodes=400, seed=5))
    out["actor"] = actor.actor.table.tolist()
    spec = AdversarySpec("myopic", t_adv=2)
    shown = attack_table(spec, mdp, victim, oracle.optimal_q(mdp))
    cell = evaluate(mdp, victim, spec, ExperimentConfig(eval_seeds=3, episodes=8), shown)
    out["returns"] = cell.returns.tolist()
    out["fires"] = cell.fire_counts.tolist()
    print(json.dumps(out))
""")


def run_probe(disable: bool) -> dict:
    env = dict(os.environ, REGRETRL_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True,
                          timeout=600)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


@pytest.mark.slow
def test_numba_and_fallback_agree():
    fast, slow = run_probe(False), run_probe(True)
    if not fast["numba"]:
        pytest.skip("numba unavailable")
    assert not slow["numba"]
    for key in fast:
        if key == "numba":
            continue
        a, b = fast[key], slow[key]
        if isinstance(a, dict):
            for k in a:
                np.testing.assert_allclose(a[k], b[k], atol=1e-9, err_msg=f"{key}/{k}")
        else:
            np.testing.assert_allclose(a, b, atol=1e-9, err_msg=key)


@pytest.mark.parametrize("seed", range(5))
def test_perturbed_values_numpy_matches_loops(seed):
    mdp = build_random_mdp(seed)
    rng = np.random.default_rng(seed)
    act = rng.integers(mdp.n_actions, size=(7, mdp.n_states))
    clean = rng.integers(mdp.n_actions, size=mdp.n_states)
    fire = rng.random(mdp.horizon) < 0.5
    a = kernels._perturbed_values_loops(mdp.transition, mdp.reward, act, clean, fire, mdp.gamma)
    b = kernels._perturbed_values_numpy(mdp.transition, mdp.reward, act, clean, fire, mdp.gamma)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_rollout_follows_deterministic_path():
    mdp = build_cliff_grid(4, 3)
    policy = np.full(mdp.n_states, 0, dtype=np.int64)      # up along column 0
    u = np.random.default_rng(0).random((2, mdp.horizon, 2))
    ret, lengths, fired = kernels.rollout(
        mdp.cumulative_transition, mdp.reward, mdp.terminal_mask, mdp.start, policy,
        np.arange(mdp.n_states, dtype=np.int64), 0, np.zeros(2, dtype=np.int64), mdp.horizon, u)
    assert ret[0] == ret[1] and not fired.any()
    assert np.all(lengths == mdp.horizon)


def test_sample_index_respects_cumulative_row():
    row = np.array([0.2, 0.2, 0.7, 1.0])
    assert [kernels.sample_index(row, u) for u in (0.0, 0.19, 0.2, 0.5, 0.99)] == [0, 0, 2, 2, 3]
