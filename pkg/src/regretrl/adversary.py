"""Observation-perturbing adversaries and the every-t_adv-steps firing schedule.

Every attacker here is deterministic given a frozen victim, so it reduces to
an observation table ``shown[s]`` over true states; evaluation kernels only
ever see that table.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .approx import FeatureMap, MlpStore, TabularStore
from .errors import ArgumentError, ConfigurationError, DivergenceError, UsageError
from .learning import LearnerConfig, PolicyHandle
from .mdp import NeighborhoodSample, TabularMdp, attack_neighborhoods, padded_neighborhoods

KINDS = ("none", "myopic", "actor", "fgsm")


@dataclass(frozen=True)
class AdversarySpec:
    kind: str = "none"
    t_adv: int = 2
    window_offset: int = 0
    inflation: float = 0.2
    epsilon: float = 1.0
    actor: TabularStore | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown adversary kind {self.kind!r}; choose from {KINDS}")
        if self.t_adv < 1:
            raise ConfigurationError("t_adv must be >= 1")
        if not 0 <= self.window_offset < self.t_adv:
            raise ConfigurationError("window_offset must lie in [0, t_adv)")
        if self.inflation < 0:
            raise ConfigurationError("inflation must be >= 0")
        if self.kind == "fgsm" and self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0")
        if self.kind == "actor" and self.actor is None:
            raise ConfigurationError("actor adversary needs a trained store")

    @property
    def name(self) -> str:
        return self.label or self.kind

    def fires(self, step_index: int) -> bool:
        return self.kind != "none" and step_index % self.t_adv == self.window_offset


@dataclass(frozen=True)
class PerturbedObservation:
    true_state: int
    shown_state: int
    fired: bool


def myopic_attack(victim_q, victim_policy: PolicyHandle, s: int, nbhd: NeighborhoodSample) -> int:
    """Neighbor whose induced victim action is worst for the true state.

    ``victim_q`` is a value table (array or store) scoring actions at the true
    state.  Ties go to the lowest state id.
    """
    if nbhd.center != s:
        raise ArgumentError("neighborhood is not centered on the attacked state")
    q = victim_q.predict(s) if hasattr(victim_q, "predict") else np.asarray(victim_q)[s]
    best, best_val = s, np.inf
    for m in nbhd.members:
        if victim_policy.kind == "uniform":
            val = float(np.mean(q))
        else:
            val = float(q[victim_policy.act(m)])
        if val < best_val or (val == best_val and m < best):
            best, best_val = m, val
    return best


def fgsm_attack(victim: MlpStore, features: FeatureMap, s: int, epsilon: float,
                nbhd: NeighborhoodSample, action: int | None = None) -> int:
    """One signed-gradient step against the victim's chosen-action value.

    The perturbed feature vector is projected back to the nearest (Euclidean)
    neighborhood member; ties go to the lowest state id.
    """
    if getattr(victim, "kind", None) != "mlp":
        raise ConfigurationError("FGSM needs a differentiable (mlp) victim")
    x = features(s)
    if action is None:
        action = int(np.argmax(victim.forward(x)[0]))
    grad = victim.input_gradient(x, action)
    x_adv = x - epsilon * np.sign(grad)
    best, best_d = s, np.inf
    for m in nbhd.members:
        d = float(np.sum((features(m) - x_adv) ** 2))
        if d < best_d or (d == best_d and m < best):
            best, best_d = m, d
    return best


def actor_train(mdp: TabularMdp, victim: PolicyHandle, cfg: LearnerConfig | None = None,
                inflation: float = 0.2, label: str = "") -> AdversarySpec:
    """Q-learning adversary that picks which neighbor the frozen victim sees.

    Its reward is the negated victim reward and it perturbs every step while
    training.
    """
    cfg = cfg or LearnerConfig()
    nbhds = attack_neighborhoods(mdp, inflation)
    nb, sizes = padded_neighborhoods(nbhds)
    store = TabularStore(mdp.n_states, nb.shape[1], cfg.alpha_q)
    if cfg.episodes:
        rng = np.random.default_rng(cfg.seed + 15485863)
        u = rng.random((cfg.episodes, mdp.horizon, 4))
        _, ok = kernels.actor_learning(
            mdp.cumulative_transition, mdp.reward, mdp.terminal_mask, mdp.start,
            victim.action_table(mdp.n_states), nb, sizes, store.table, store.alpha,
            mdp.gamma, mdp.horizon, cfg.epsilons(), u)
        if not ok:
            raise DivergenceError("actor adversary training diverged")
    return AdversarySpec("actor", t_adv=1, inflation=inflation, actor=store, label=label or "actor")


def actor_choice(spec: AdversarySpec, mdp: TabularMdp, s: int) -> int:
    members = attack_neighborhoods(mdp, spec.inflation)[s]
    row = spec.actor.predict(s)[: len(members)]
    return members[kernels.greedy_max(row, len(members), 0.0)]


def attack_table(spec: AdversarySpec, mdp: TabularMdp, victim: PolicyHandle,
                 victim_q=None, victim_net: MlpStore | None = None) -> np.ndarray:
    """Observation shown at each true state whenever the adversary fires.

    ``victim_q`` (table of true-state action values) is required for myopic
    attacks; ``victim_net`` for FGSM.
    """
    n = mdp.n_states
    if spec.kind == "none":
        return np.arange(n, dtype=np.int64)
    nbhds = attack_neighborhoods(mdp, spec.inflation)
    out = np.arange(n, dtype=np.int64)
    for s in range(n):
        if mdp.is_terminal(s):
            continue
        nb = NeighborhoodSample(s, nbhds[s], spec.inflation)
        if spec.kind == "myopic":
            if victim_q is None:
                raise ConfigurationError("myopic attack needs a value table for the true state")
            out[s] = myopic_attack(victim_q, victim, s, nb)
        elif spec.kind == "actor":
            out[s] = actor_choice(spec, mdp, s)
        else:
            if victim_net is None:
                raise ConfigurationError("FGSM attack needs an mlp victim network")
            out[s] = fgsm_attack(victim_net, victim_net.features, s, spec.epsilon, nb,
                                 None if victim.kind == "uniform" else victim.act(s))
    for s in range(n):
        if int(out[s]) not in nbhds[s]:
            raise UsageError(f"attack at {s} left its neighborhood")
    return out


def schedule_perturbation(spec: AdversarySpec, step_index: int, true_state: int,
                          shown=None) -> PerturbedObservation:
    """Apply the firing rule; ``shown`` maps a true state to the attack's choice."""
    if spec.kind == "none" or not spec.fires(step_index):
        return PerturbedObservation(true_state, true_state, False)
    if shown is None:
        raise UsageError("firing adversary needs an attack map")
    target = shown(true_state) if callable(shown) else int(np.asarray(shown)[true_state])
    return PerturbedObservation(true_state, int(target), True)
