"""Exact finite-horizon DP and brute-force enumeration on small MDPs.

All values are finite-horizon: ``mdp.horizon`` steps from step 0, zero
bootstrap at the end.  A policy is either a stationary action array of shape
(S,) or a non-stationary plan of shape (H, S) whose row ``t`` is used at step
``t``.  Anything with a ``table(mdp)`` method (a ``PolicyHandle``) is
accepted where a stationary policy is expected.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ArgumentError, CapacityError
from .mdp import TabularMdp

MAX_ENUMERATION = 10**6
TOL = 1e-9
_BATCH = 1 << 15


def as_actions(mdp: TabularMdp, policy) -> np.ndarray:
    if hasattr(policy, "table"):
        policy = policy.table(mdp)
    a = np.asarray(policy, dtype=np.int64)
    if a.shape != (mdp.n_states,):
        raise ArgumentError(f"stationary policy must have shape ({mdp.n_states},), got {a.shape}")
    if np.any(a < 0) or np.any(a >= mdp.n_actions):
        raise ArgumentError("policy actions out of range")
    return a


def as_plan(mdp: TabularMdp, policy, horizon: int | None = None) -> np.ndarray:
    H = mdp.horizon if horizon is None else horizon
    if hasattr(policy, "table"):
        policy = policy.table(mdp)
    a = np.asarray(policy, dtype=np.int64)
    if a.ndim == 1:
        a = np.broadcast_to(as_actions(mdp, a), (H, mdp.n_states))
    if a.shape != (H, mdp.n_states):
        raise ArgumentError(f"plan must have shape ({H}, {mdp.n_states}), got {a.shape}")
    if np.any(a < 0) or np.any(a >= mdp.n_actions):
        raise ArgumentError("plan actions out of range")
    return a


def _zero_terminal(mdp: TabularMdp, v: np.ndarray) -> np.ndarray:
    if mdp.terminal:
        v[list(mdp.terminal)] = 0.0
    return v


def _evaluate(mdp: TabularMdp, plan: np.ndarray, step_reward: np.ndarray) -> np.ndarray:
    """Backward DP of ``step_reward[s, a]`` under ``plan``; value at step 0."""
    P = mdp.transition
    rows = np.arange(mdp.n_states)
    v = np.zeros(mdp.n_states)
    for t in range(plan.shape[0] - 1, -1, -1):
        a = plan[t]
        v = step_reward[rows, a] + mdp.gamma * (P[rows, a] @ v)
        _zero_terminal(mdp, v)
    return v


def exact_v_pi(mdp: TabularMdp, policy, horizon: int | None = None) -> np.ndarray:
    """Adversary-free value of ``policy`` at every state."""
    return _evaluate(mdp, as_plan(mdp, policy, horizon), mdp.reward)


def fire_schedule(horizon: int, schedule: tuple[int, int] | None) -> np.ndarray:
    """Boolean mask of perturbed steps; None means every step."""
    if schedule is None:
        return np.ones(horizon, dtype=np.bool_)
    t_adv, offset = schedule
    if t_adv < 1 or not 0 <= offset < t_adv:
        raise ArgumentError("schedule needs t_adv >= 1 and 0 <= offset < t_adv")
    return np.arange(horizon) % t_adv == offset


def check_adversary(mdp: TabularMdp, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.int64)
    if mu.shape != (mdp.n_states,):
        raise ArgumentError(f"adversary map must have shape ({mdp.n_states},)")
    for s in range(mdp.n_states):
        if int(mu[s]) not in mdp.neighborhoods[s]:
            raise ArgumentError(f"adversary shows {int(mu[s])} at {s}, outside its neighborhood")
    return mu


def exact_v_pi_mu(mdp: TabularMdp, policy, mu, schedule: tuple[int, int] | None = None) -> np.ndarray:
    """Value at each true state when the policy acts on ``mu``'s observations.

    Reward accrues at the true state; at perturbed steps the action is the
    policy's choice for the shown state ``mu[s]``.
    """
    mu = check_adversary(mdp, mu)
    plan = as_plan(mdp, policy)
    fire = fire_schedule(mdp.horizon, schedule)
    acted = np.where(fire[:, None], plan[:, mu], plan)
    return _evaluate(mdp, acted, mdp.reward)


def adversary_count(mdp: TabularMdp) -> int:
    return math.prod(len(m) for m in mdp.neighborhoods)


def enumerate_adversaries(mdp: TabularMdp):
    """Every deterministic stationary map with ``mu[s]`` in ``S_s``, once each."""
    for combo in itertools.product(*mdp.neighborhoods):
        yield np.array(combo, dtype=np.int64)


def _adversary_batches(mdp: TabularMdp):
    it = itertools.product(*mdp.neighborhoods)
    while True:
        chunk = list(itertools.islice(it, _BATCH))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.int64)


def _require_tractable(count: int, what: str) -> None:
    if count > MAX_ENUMERATION:
        raise CapacityError(f"{what} enumeration has {count} cases (> {MAX_ENUMERATION}); use a smaller MDP")


@dataclass
class RegretProfile:
    """Regret of one stationary policy against every adversary."""

    mus: np.ndarray        # (M, S)
    regret: np.ndarray     # (M,) V(mu(s0)) - V^{pi,mu}(s0)
    shown: np.ndarray      # (M,) mu(s0)


def regret_profile(mdp: TabularMdp, policy, s0: int | None = None,
                   schedule: tuple[int, int] | None = None) -> RegretProfile:
    s0 = mdp.start if s0 is None else mdp.check_state(s0)
    _require_tractable(adversary_count(mdp), "adversary")
    pi = as_actions(mdp, policy)
    v = exact_v_pi(mdp, pi)
    fire = fire_schedule(mdp.horizon, schedule)
    mus, regs, shown = [], [], []
    for batch in _adversary_batches(mdp):
        w = kernels.perturbed_values(mdp.transition, mdp.reward, pi[batch], pi, fire, mdp.gamma)
        first = batch[:, s0] if fire[0] else np.full(len(batch), s0)
        mus.append(batch)
        regs.append(v[first] - w[:, s0])
        shown.append(first)
    return RegretProfile(np.concatenate(mus), np.concatenate(regs), np.concatenate(shown))


def exact_max_regret(mdp: TabularMdp, policy, s0: int | None = None,
                     schedule: tuple[int, int] | None = None) -> tuple[float, np.ndarray]:
    """Maximum regret over all adversaries and the first adversary attaining it."""
    prof = regret_profile(mdp, policy, s0, schedule)
    i = int(np.argmax(prof.regret))
    return float(prof.regret[i]), prof.mus[i]


def exact_v_check(mdp: TabularMdp, policy) -> np.ndarray:
    """Worst-neighbor value: min over true states consistent with each observation.

    The min binds the reward and the continuation to the same neighbor; the
    continuation follows that neighbor's transition row.
    """
    plan = as_plan(mdp, policy)
    P, R = mdp.transition, mdp.reward
    v = np.zeros(mdp.n_states)
    for t in range(plan.shape[0] - 1, -1, -1):
        new = np.empty(mdp.n_states)
        for x in range(mdp.n_states):
            a = plan[t, x]
            members = list(mdp.neighborhoods[x])
            new[x] = np.min(R[members, a] + mdp.gamma * (P[members, a] @ v))
        v = _zero_terminal(mdp, new)
    return v


def exact_ccer(mdp: TabularMdp, policy, horizon: int | None = None) -> np.ndarray:
    """Cumulative neighbor reward gap along the policy's own trajectory."""
    return _evaluate(mdp, as_plan(mdp, policy, horizon), mdp.gap_table())


def optimal_ccer_tables(mdp: TabularMdp, horizon: int | None = None) -> np.ndarray:
    """Optimal regret action-values indexed by steps remaining: shape (H+1, S, A)."""
    H = mdp.horizon if horizon is None else horizon
    gap = mdp.gap_table()
    P = mdp.transition
    out = np.zeros((H + 1, mdp.n_states, mdp.n_actions))
    v = np.zeros(mdp.n_states)
    for h in range(1, H + 1):
        out[h] = gap + mdp.gamma * (P @ v)
        out[h][list(mdp.terminal)] = 0.0
        v = out[h].min(axis=1)
    return out


def optimal_ccer_q(mdp: TabularMdp) -> np.ndarray:
    return optimal_ccer_tables(mdp)[-1]


def optimal_q(mdp: TabularMdp, horizon: int | None = None) -> np.ndarray:
    """Optimal expected-return action-values with ``horizon`` steps remaining."""
    H = mdp.horizon if horizon is None else horizon
    P, R = mdp.transition, mdp.reward
    v = np.zeros(mdp.n_states)
    q = np.zeros_like(R)
    for _ in range(H):
        q = R + mdp.gamma * (P @ v)
        q[list(mdp.terminal)] = 0.0
        v = q.max(axis=1)
    return q


def value_optimal_policy(mdp: TabularMdp, tie_tol: float = TOL) -> np.ndarray:
    q = optimal_q(mdp)
    return np.array([kernels.greedy_max(q[s], mdp.n_actions, tie_tol) for s in range(mdp.n_states)])


def regret_optimal_policy(mdp: TabularMdp, tie_tol: float = TOL) -> np.ndarray:
    """Arg-min of optimal regret values, ties by higher Q* then lower index."""
    r = optimal_ccer_q(mdp)
    q = optimal_q(mdp)
    return np.array([kernels.greedy_regret(r[s], q[s], tie_tol) for s in range(mdp.n_states)])


@dataclass
class ExactTables:
    v_pi: np.ndarray
    v_check: np.ndarray
    ccer: np.ndarray
    ccer_q: np.ndarray
    q_star: np.ndarray
    v_pi_mu: np.ndarray | None = None


def exact_tables(mdp: TabularMdp, policy, mu=None) -> ExactTables:
    pi = as_actions(mdp, policy)
    return ExactTables(
        v_pi=exact_v_pi(mdp, pi),
        v_check=exact_v_check(mdp, pi),
        ccer=exact_ccer(mdp, pi),
        ccer_q=optimal_ccer_q(mdp),
        q_star=optimal_q(mdp),
        v_pi_mu=None if mu is None else exact_v_pi_mu(mdp, pi, mu),
    )


# -- executable checks -------------------------------------------------------

@dataclass
class BoundCheck:
    """Outcome of comparing the regret bound with exact max regret."""

    margin: float
    holds: bool
    max_regret: float
    ccer_at_shown: float
    mu: list[int] = field(default_factory=list)


def check_prop1(mdp: TabularMdp, policy, s0: int | None = None, ccer_values=None) -> BoundCheck:
    """Does the cumulative regret gap bound the exact maximum regret?

    The margin is the smallest ``ccer(mu(s0)) - regret(mu)`` over all
    adversaries, i.e. taken at the worst perturbed initial observation.
    ``ccer_values`` overrides the DP table (used for negative tests).
    """
    pi = as_actions(mdp, policy)
    c = exact_ccer(mdp, pi) if ccer_values is None else np.asarray(ccer_values, dtype=float)
    prof = regret_profile(mdp, pi, s0)
    margins = c[prof.shown] - prof.regret
    i = int(np.argmin(margins))
    return BoundCheck(
        margin=float(margins[i]),
        holds=bool(margins[i] >= -TOL),
        max_regret=float(prof.regret.max()),
        ccer_at_shown=float(c[prof.shown[i]]),
        mu=prof.mus[i].tolist(),
    )


@dataclass
class ChainCheck:
    """Links max-regret <= V - Vcheck <= ccer at the perturbed start."""

    regret_vs_gap: float   # min over mu of (V - Vcheck)(mu(s0)) - regret(mu)
    gap_vs_ccer: float     # min over shown s0 of ccer - (V - Vcheck)
    holds: bool


def check_bound_chain(mdp: TabularMdp, policy, s0: int | None = None) -> ChainCheck:
    pi = as_actions(mdp, policy)
    s0 = mdp.start if s0 is None else s0
    v = exact_v_pi(mdp, pi)
    vc = exact_v_check(mdp, pi)
    c = exact_ccer(mdp, pi)
    prof = regret_profile(mdp, pi, s0)
    gap = v - vc
    link1 = float(np.min(gap[prof.shown] - prof.regret))
    shown = list(mdp.neighborhoods[s0])
    link2 = float(np.min(c[shown] - gap[shown]))
    return ChainCheck(link1, link2, link1 >= -TOL and link2 >= -TOL)


def _plan_ccer_all(mdp: TabularMdp, plans: np.ndarray) -> np.ndarray:
    """Regret of every plan from every step: shape (N, H+1, S), row H is zero."""
    n, H, n_s = plans.shape
    gap = mdp.gap_table()
    P = mdp.transition
    rows = np.arange(n_s)
    out = np.zeros((n, H + 1, n_s))
    for t in range(H - 1, -1, -1):
        a = plans[:, t, :]
        out[:, t] = gap[rows, a] + mdp.gamma * np.einsum("nsj,nj->ns", P[rows, a], out[:, t + 1])
        if mdp.terminal:
            out[:, t, list(mdp.terminal)] = 0.0
    return out


def check_prop2(mdp: TabularMdp, horizon: int | None = None) -> bool:
    """Brute-force optimal substructure check over all non-stationary plans.

    For every plan ``p2`` and step ``t``, the plan that copies ``p2`` at ``t``
    and then follows a tail that is optimal (found by enumeration, not by the
    DP) must have regret no larger than ``p2`` at every state.
    """
    H = mdp.horizon if horizon is None else horizon
    n_s, n_a = mdp.n_states, mdp.n_actions
    _require_tractable(n_a ** (n_s * H), "policy")
    if H <= 1:
        return True
    plans = np.array(list(itertools.product(range(n_a), repeat=n_s * H)), dtype=np.int64)
    plans = plans.reshape(-1, H, n_s)
    values = _plan_ccer_all(mdp, plans)
    gap = mdp.gap_table()
    rows = np.arange(n_s)
    P = mdp.transition
    for t in range(H - 1):
        best_tail = values[:, t + 1].min(axis=0)
        optimal = np.all(values[:, t + 1] <= best_tail + TOL, axis=1)
        if not optimal.any():
            return False
        tail_value = values[np.argmax(optimal), t + 1]
        a = plans[:, t, :]
        v1 = gap[rows, a] + mdp.gamma * (P[rows, a] @ tail_value)
        if mdp.terminal:
            v1[:, list(mdp.terminal)] = 0.0
        if np.any(v1 > values[:, t] + TOL):
            return False
    return True
