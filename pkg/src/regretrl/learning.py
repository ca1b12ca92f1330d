"""Q-learning baseline, regret (DRN) learner, and the DRN+ dispatcher."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .approx import FeatureMap, MlpStore, TabularStore
from .errors import ArgumentError, ConfigurationError, DivergenceError
from .mdp import (NeighborhoodSample, TabularMdp, TransitionRecord, attack_neighborhoods,
                  neighborhood_of, padded_neighborhoods, reward_query, sample_next)

log = logging.getLogger(__name__)

# selector store column order; argmax ties fall to the regret sub-policy
USE_CCER, USE_Q = 0, 1
LEARNERS = ("dqn", "drn", "drn_plus")


@dataclass
class LearnerConfig:
    episodes: int = 3000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay: float = 0.8          # fraction of episodes over which epsilon decays linearly
    alpha_q: float = 0.5
    alpha_r: float = 0.5
    alpha_selector: float = 0.2
    nbhd_size: int = 10
    seed: int = 1
    tie_tol: float = 1e-9
    value_store: str = "tabular"    # or "mlp"
    features: str = "one_hot"       # or "grid_xy"
    hidden: int = 32
    selector_mode: str = "learned"  # or "threshold"
    tau: float = 1.0
    p_adv: float = 0.5
    selector_episodes: int = 3000
    adv_inflation: float = 0.2

    def __post_init__(self):
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.episodes < 0 or self.selector_episodes < 0:
            raise ConfigurationError("episode counts must be >= 0")
        if not 0.0 < self.eps_decay <= 1.0:
            raise ConfigurationError("eps_decay must lie in (0, 1]")
        if not 0.0 <= self.p_adv <= 1.0:
            raise ConfigurationError("p_adv must lie in [0, 1]")
        if self.value_store not in ("tabular", "mlp"):
            raise ConfigurationError(f"unknown value store {self.value_store!r}")
        if self.selector_mode not in ("learned", "threshold"):
            raise ConfigurationError(f"unknown selector mode {self.selector_mode!r}")
        if self.nbhd_size < 1:
            raise ConfigurationError("nbhd_size must be >= 1")

    def epsilons(self, n: int | None = None) -> np.ndarray:
        n = self.episodes if n is None else n
        span = max(int(round(self.eps_decay * n)), 1)
        frac = np.minimum(np.arange(n) / span, 1.0)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


# -- policies ----------------------------------------------------------------

@dataclass
class SelectorState:
    mode: str = "learned"
    tau: float = 1.0
    store: TabularStore | None = None
    p_adv: float = 0.5


def _greedy_value(q: np.ndarray, tol: float) -> int:
    return kernels.greedy_max(q, q.shape[0], tol)


def _greedy_regret(r: np.ndarray, q: np.ndarray | None, tol: float) -> int:
    if q is None:
        q = np.zeros_like(r)
    return kernels.greedy_regret(r, q, tol)


@dataclass
class PolicyHandle:
    """Deterministic state -> action map (``uniform`` samples instead)."""

    kind: str
    q: object = None
    r: object = None
    selector: SelectorState | None = None
    tie_tol: float = 1e-9
    fixed: np.ndarray | None = None
    n_actions: int = 0

    def act(self, s: int, rng=None) -> int:
        if self.kind == "uniform":
            if rng is None:
                raise ArgumentError("a uniform policy needs an rng")
            return int(rng.integers(self.n_actions))
        if self.kind == "fixed_table":
            return int(self.fixed[s])
        if self.kind == "value_greedy":
            return _greedy_value(self.q.predict(s), self.tie_tol)
        if self.kind == "regret_greedy":
            return _greedy_regret(self.r.predict(s), None if self.q is None else self.q.predict(s),
                                  self.tie_tol)
        if self.kind == "selector":
            if selector_decide(self.selector, s, self.q, self.r) == USE_CCER:
                return _greedy_regret(self.r.predict(s), self.q.predict(s), self.tie_tol)
            return _greedy_value(self.q.predict(s), self.tie_tol)
        raise ConfigurationError(f"unknown policy kind {self.kind!r}")

    def action_table(self, n_states: int) -> np.ndarray:
        """Actions for every state; -1 marks uniformly random choice."""
        if self.kind == "uniform":
            return np.full(n_states, -1, dtype=np.int64)
        return np.array([self.act(s) for s in range(n_states)], dtype=np.int64)

    def table(self, mdp: TabularMdp) -> np.ndarray:
        return self.action_table(mdp.n_states)

    def freeze(self, n_states: int) -> "PolicyHandle":
        if self.kind == "uniform":
            return self
        return PolicyHandle("fixed_table", fixed=self.action_table(n_states),
                            tie_tol=self.tie_tol, n_actions=self.n_actions)


def extract_policy(stores: dict, kind: str, tie_tol: float = 1e-9,
                   selector: SelectorState | None = None) -> PolicyHandle:
    """Greedy policy over the given stores (keys ``q``, ``regret``)."""
    q, r = stores.get("q"), stores.get("regret")
    ref = q if q is not None else r
    n_a = ref.n_actions if ref is not None else 0
    if kind == "value_greedy":
        if q is None:
            raise ConfigurationError("value-greedy extraction needs a q store")
        return PolicyHandle(kind, q=q, tie_tol=tie_tol, n_actions=n_a)
    if kind == "regret_greedy":
        if r is None:
            raise ConfigurationError("regret-greedy extraction needs a regret store")
        if q is None:
            raise ConfigurationError("regret tie-break by value needs a q store")
        return PolicyHandle(kind, q=q, r=r, tie_tol=tie_tol, n_actions=n_a)
    if kind == "selector":
        if q is None or r is None or selector is None:
            raise ConfigurationError("selector policy needs q, regret stores and a selector")
        return PolicyHandle(kind, q=q, r=r, selector=selector, tie_tol=tie_tol, n_actions=n_a)
    raise ConfigurationError(f"unknown policy kind {kind!r}")


def selector_decide(sel: SelectorState, s: int, q_store, r_store) -> int:
    if sel.mode == "threshold":
        q = q_store.predict(s)
        a = _greedy_value(q, 0.0)
        return USE_CCER if r_store.predict(s)[a] > sel.tau else USE_Q
    if sel.store is None:
        raise ConfigurationError("learned selector has no store")
    return _greedy_value(sel.store.predict(s), 0.0)


# -- single-step updates -----------------------------------------------------

def q_update(store, tr: TransitionRecord, gamma: float) -> float:
    target = tr.reward
    if not tr.done:
        target += gamma * float(np.max(store.predict(tr.next_state)))
    return store.fit_target(tr.state, tr.action, target)


def drn_update(store, tr: TransitionRecord, nbhd: NeighborhoodSample, mdp: TabularMdp,
               gamma: float | None = None) -> float:
    """Fit toward (r - worst neighbor reward for the same action) + gamma * min next regret."""
    if nbhd.center != tr.state:
        raise ArgumentError("neighborhood is not centered on the transition's state")
    gamma = mdp.gamma if gamma is None else gamma
    r_min = min(reward_query(mdp, m, tr.action) for m in nbhd.members)
    target = tr.reward - r_min
    if not tr.done:
        target += gamma * float(np.min(store.predict(tr.next_state)))
    return store.fit_target(tr.state, tr.action, target)


# -- training ----------------------------------------------------------------

@dataclass
class TrainResult:
    kind: str
    stores: dict
    policy: PolicyHandle
    curve: list = field(default_factory=list)  # (episode, return, mean loss)
    replay: np.ndarray | None = None             # rows: s, a, r, s', done

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "return", "mean_loss"])
        for ep, ret, loss in self.curve:
            w.writerow([ep, repr(float(ret)), repr(float(loss))])
        return buf.getvalue()


def _new_store(mdp: TabularMdp, cfg: LearnerConfig, alpha: float, seed: int):
    if cfg.value_store == "tabular":
        return TabularStore(mdp.n_states, mdp.n_actions, alpha)
    feats = FeatureMap.grid_xy(mdp) if cfg.features == "grid_xy" else FeatureMap.one_hot(mdp.n_states)
    return MlpStore.create(feats, mdp.n_actions, seed, cfg.hidden, alpha)


def training_neighborhoods(mdp: TabularMdp, k: int) -> list[NeighborhoodSample]:
    return [NeighborhoodSample(s, mdp.neighborhoods[s][:k]) for s in range(mdp.n_states)]


def _gap(mdp: TabularMdp, nbhds) -> np.ndarray:
    gap = np.empty_like(mdp.reward)
    for s, nb in enumerate(nbhds):
        gap[s] = mdp.reward[s] - mdp.reward[list(nb.members)].min(axis=0)
    gap[list(mdp.terminal)] = 0.0
    return gap


def _check_finite(stores: dict) -> None:
    for name, st in stores.items():
        vals = st.table if st.kind == "tabular" else st.params
        if not np.all(np.isfinite(vals)):
            raise DivergenceError(f"{name} store diverged (non-finite values)")


def _run_python(mdp, cfg, stores, learn_regret, eps, u, nbhds):
    """Reference per-step loop; works for any store kind."""
    q, r = stores["q"], stores.get("regret")
    n_a = mdp.n_actions
    curve, replay = [], []
    for e in range(len(eps)):
        s = mdp.start
        total, loss_sum, t = 0.0, 0.0, 0
        while t < mdp.horizon:
            if u[e, t, 0] < eps[e]:
                a = kernels.uniform_index(u[e, t, 1], n_a)
            elif learn_regret:
                a = _greedy_regret(r.predict(s), q.predict(s), cfg.tie_tol)
            else:
                a = _greedy_value(q.predict(s), cfg.tie_tol)
            nxt = sample_next(mdp.cumulative_transition[s, a], u[e, t, 2])
            tr = TransitionRecord(s, a, float(mdp.reward[s, a]), nxt, bool(mdp.terminal_mask[nxt]), t)
            q_loss = q_update(q, tr, mdp.gamma)
            if learn_regret:
                loss_sum += drn_update(r, tr, nbhds[s], mdp)
            else:
                loss_sum += q_loss
            replay.append((s, a, tr.reward, nxt, float(tr.done)))
            total += tr.reward
            s = nxt
            t += 1
            if tr.done:
                break
        _check_finite(stores)
        curve.append((e, total, loss_sum / max(t, 1)))
    return curve, np.array(replay, dtype=np.float64).reshape(-1, 5)


def _draws(rng: np.random.Generator, n_ep: int, horizon: int, width: int) -> np.ndarray:
    return rng.random((n_ep, horizon, width))


def train(mdp: TabularMdp, cfg: LearnerConfig, learner_kind: str, engine: str = "auto") -> TrainResult:
    """Train one learner with epsilon-greedy episodes and per-step updates.

    ``engine`` is ``auto`` (compiled kernel for tabular stores), ``kernel`` or
    ``python`` (reference per-step loop).
    """
    if learner_kind not in LEARNERS:
        raise ConfigurationError(f"unknown learner {learner_kind!r}; choose from {LEARNERS}")
    rng = np.random.default_rng(cfg.seed)
    learn_regret = learner_kind in ("drn", "drn_plus")
    stores = {"q": _new_store(mdp, cfg, cfg.alpha_q, cfg.seed)}
    if learn_regret:
        stores["regret"] = _new_store(mdp, cfg, cfg.alpha_r, cfg.seed + 7919)
    if cfg.episodes == 0:
        return TrainResult(learner_kind, stores, PolicyHandle("uniform", n_actions=mdp.n_actions))

    eps = cfg.epsilons()
    u = _draws(rng, cfg.episodes, mdp.horizon, 3)
    nbhds = training_neighborhoods(mdp, cfg.nbhd_size)
    use_kernel = engine == "kernel" or (engine == "auto" and cfg.value_store == "tabular")
    if use_kernel:
        if cfg.value_store != "tabular":
            raise ConfigurationError("the compiled learning kernel needs tabular stores")
        q = stores["q"].table
        r = stores["regret"].table if learn_regret else np.zeros_like(q)
        logbuf = np.zeros((cfg.episodes * mdp.horizon, 5))
        rets, losses, n_log, ok = kernels.value_learning(
            mdp.cumulative_transition, mdp.reward, _gap(mdp, nbhds), mdp.terminal_mask,
            mdp.start, q, r, learn_regret, stores["q"].alpha,
            stores["regret"].alpha if learn_regret else 1.0, mdp.gamma, mdp.horizon,
            eps, u, cfg.tie_tol, logbuf)
        if not ok:
            raise DivergenceError(f"{learner_kind} training diverged (non-finite values)")
        curve = [(e, rets[e], losses[e]) for e in range(cfg.episodes)]
        replay = logbuf[:n_log]
    else:
        curve, replay = _run_python(mdp, cfg, stores, learn_regret, eps, u, nbhds)
    _check_finite(stores)

    if learner_kind == "dqn":
        policy = extract_policy(stores, "value_greedy", cfg.tie_tol)
    elif learner_kind == "drn":
        policy = extract_policy(stores, "regret_greedy", cfg.tie_tol)
    else:
        sel = SelectorState(cfg.selector_mode, cfg.tau, p_adv=cfg.p_adv)
        sel = train_selector(sel, mdp, stores["q"], stores["regret"], cfg, cfg.p_adv)
        if sel.store is not None:
            stores["selector"] = sel.store
        policy = extract_policy(stores, "selector", cfg.tie_tol, sel)
    return TrainResult(learner_kind, stores, policy, curve, replay)


def train_selector(sel: SelectorState, mdp: TabularMdp, q_store, r_store, cfg: LearnerConfig,
                   p_adv: float | None = None) -> SelectorState:
    """Learn which sub-policy to follow at each observed state.

    Q-learning over {value-greedy, regret-greedy} on environment reward; in a
    ``p_adv`` fraction of episodes a myopic adversary perturbs every
    observation against the current dispatcher.  Episodes start at a uniformly
    drawn non-terminal state so that off-path observations, which an attacker
    can steer the agent towards, get trained too.
    """
    if sel.mode == "threshold":
        return sel
    p_adv = sel.p_adv if p_adv is None else p_adv
    rng = np.random.default_rng(cfg.seed + 104729)
    qv = extract_policy({"q": q_store}, "value_greedy", cfg.tie_tol)
    rv = extract_policy({"q": q_store, "regret": r_store}, "regret_greedy", cfg.tie_tol)
    sub = np.empty((mdp.n_states, 2), dtype=np.int64)
    sub[:, USE_Q] = qv.action_table(mdp.n_states)
    sub[:, USE_CCER] = rv.action_table(mdp.n_states)
    store = TabularStore(mdp.n_states, 2, cfg.alpha_selector)
    n_ep = cfg.selector_episodes
    if n_ep:
        adv_on = rng.random(n_ep) < p_adv
        live = np.flatnonzero(~mdp.terminal_mask)
        starts = live[rng.integers(live.shape[0], size=n_ep)]
        u = _draws(rng, n_ep, mdp.horizon, 3)
        nb, sizes = padded_neighborhoods(attack_neighborhoods(mdp, cfg.adv_inflation))
        qstar = np.array([q_store.predict(s) for s in range(mdp.n_states)])
        _, ok = kernels.selector_learning(
            mdp.cumulative_transition, mdp.reward, mdp.terminal_mask, starts, sub,
            store.table, nb, sizes, qstar, adv_on, store.alpha, mdp.gamma, mdp.horizon,
            cfg.epsilons(n_ep), u)
        if not ok:
            raise DivergenceError("selector training diverged")
    return replace(sel, store=store, p_adv=p_adv)
