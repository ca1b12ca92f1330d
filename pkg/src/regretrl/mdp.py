"""Finite MDP model with explicit state neighborhoods.

States and actions are integer ids.  A neighborhood ``neighborhoods[s]`` is the
ordered set of states an observation of ``s`` may be confused with; it always
contains ``s`` itself.  Terminal states self-loop with zero reward.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArgumentError, UsageError

ROW_TOL = 1e-12


@dataclass(frozen=True)
class TransitionRecord:
    state: int
    action: int
    reward: float
    next_state: int
    done: bool
    step_index: int = 0


@dataclass(frozen=True)
class NeighborhoodSample:
    center: int
    members: tuple[int, ...]
    inflation: float = 0.0

    def __post_init__(self):
        if self.center not in self.members:
            raise ArgumentError("a neighborhood must contain its center")
        if self.inflation < 0:
            raise ArgumentError("inflation must be >= 0")

    @property
    def k(self) -> int:
        return len(self.members)


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Immutable finite MDP.

    ``transition`` has shape (S, A, S), ``reward`` shape (S, A).  ``positions``
    optionally gives integer grid coordinates per state; when present the
    neighborhood inflation metric is Manhattan distance, otherwise the
    undirected transition-graph distance.
    """

    transition: np.ndarray
    reward: np.ndarray
    neighborhoods: tuple[tuple[int, ...], ...]
    terminal: frozenset[int]
    gamma: float
    horizon: int
    start: int = 0
    positions: np.ndarray | None = None
    name: str = "mdp"
    state_names: tuple[str, ...] | None = None
    _cum: np.ndarray = field(init=False, repr=False)
    _term_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        P.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        nbhd = tuple(tuple(int(x) for x in members) for members in self.neighborhoods)
        object.__setattr__(self, "neighborhoods", nbhd)
        object.__setattr__(self, "terminal", frozenset(int(t) for t in self.terminal))
        if self.positions is not None:
            pos = np.array(self.positions, dtype=np.int64)
            pos.setflags(write=False)
            object.__setattr__(self, "positions", pos)
        self.validate()
        cum = np.cumsum(P, axis=-1)
        cum[..., -1] = 1.0
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)
        mask = np.zeros(self.n_states, dtype=np.bool_)
        mask[list(self.terminal)] = True
        mask.setflags(write=False)
        object.__setattr__(self, "_term_mask", mask)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def cumulative_transition(self) -> np.ndarray:
        return self._cum

    @property
    def terminal_mask(self) -> np.ndarray:
        return self._term_mask

    def validate(self) -> None:
        P, R = self.transition, self.reward
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ArgumentError(f"transition must have shape (S, A, S), got {P.shape}")
        n_s, n_a = P.shape[:2]
        if R.shape != (n_s, n_a):
            raise ArgumentError(f"reward must have shape {(n_s, n_a)}, got {R.shape}")
        if not np.all(np.isfinite(P)) or not np.all(np.isfinite(R)):
            raise ArgumentError("transition and reward must be finite")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=-1) - 1.0)) > ROW_TOL:
            raise ArgumentError("every transition row must be a probability vector")
        if len(self.neighborhoods) != n_s:
            raise ArgumentError("one neighborhood per state is required")
        for s, members in enumerate(self.neighborhoods):
            if s not in members:
                raise ArgumentError(f"state {s} is missing from its own neighborhood")
            if len(set(members)) != len(members):
                raise ArgumentError(f"neighborhood of {s} has duplicates")
            if any(m < 0 or m >= n_s for m in members):
                raise ArgumentError(f"neighborhood of {s} has out-of-range members")
        for t in self.terminal:
            if not 0 <= t < n_s:
                raise ArgumentError(f"terminal state {t} out of range")
            if np.any(P[t, :, t] != 1.0) or np.any(R[t] != 0.0):
                raise ArgumentError(f"terminal state {t} must self-loop with reward 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ArgumentError("gamma must lie in (0, 1]")
        if self.horizon < 1:
            raise ArgumentError("horizon must be positive")
        if not 0 <= self.start < n_s:
            raise ArgumentError("start state out of range")
        if self.positions is not None and self.positions.shape != (n_s, 2):
            raise ArgumentError("positions must have shape (S, 2)")

    def check_state(self, s: int) -> int:
        if not 0 <= s < self.n_states:
            raise ArgumentError(f"state {s} out of range [0, {self.n_states})")
        return int(s)

    def check_action(self, a: int) -> int:
        if not 0 <= a < self.n_actions:
            raise ArgumentError(f"action {a} out of range [0, {self.n_actions})")
        return int(a)

    def is_terminal(self, s: int) -> bool:
        return s in self.terminal

    def gap_table(self) -> np.ndarray:
        """R(s, a) - min over neighbors n of R(n, a); zero at terminal states."""
        gap = np.empty_like(self.reward)
        for s, members in enumerate(self.neighborhoods):
            gap[s] = self.reward[s] - self.reward[list(members)].min(axis=0)
        gap[list(self.terminal)] = 0.0
        return gap

    def state_distances(self, s: int) -> np.ndarray:
        """Distance from ``s`` to every state under the fixture metric."""
        if self.positions is not None:
            return np.abs(self.positions - self.positions[s]).sum(axis=1)
        adj = (self.transition.max(axis=1) > 0)
        adj = adj | adj.T
        np.fill_diagonal(adj, False)
        dist = np.full(self.n_states, np.iinfo(np.int64).max, dtype=np.int64)
        dist[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(adj[u]):
                if dist[v] > dist[u] + 1:
                    dist[v] = dist[u] + 1
                    queue.append(int(v))
        return dist


def step(mdp: TabularMdp, s: int, a: int, rng: np.random.Generator, step_index: int = 0) -> TransitionRecord:
    """Sample one transition from ``(s, a)``.

    ``done`` reports arrival in a terminal state; horizon truncation is the
    caller's business.
    """
    s = mdp.check_state(s)
    a = mdp.check_action(a)
    if mdp.is_terminal(s):
        raise UsageError(f"cannot step from terminal state {s}")
    nxt = sample_next(mdp.cumulative_transition[s, a], rng.random())
    return TransitionRecord(s, a, float(mdp.reward[s, a]), nxt, nxt in mdp.terminal, step_index)


def sample_next(cum_row: np.ndarray, u: float) -> int:
    # same inversion rule as the compiled kernels
    for j in range(cum_row.shape[0]):
        if u < cum_row[j]:
            return j
    return cum_row.shape[0] - 1


def reward_query(mdp: TabularMdp, s: int, a: int) -> float:
    return float(mdp.reward[mdp.check_state(s), mdp.check_action(a)])


def neighborhood_of(mdp: TabularMdp, s: int, inflation: float = 0.0, rng=None) -> NeighborhoodSample:
    """Neighborhood of ``s`` enlarged by ``ceil(inflation * |S_s|)`` nearest states.

    Extra states are ordered by (distance, state id) so the result does not
    depend on ``rng``; the argument is accepted for interface symmetry.
    """
    s = mdp.check_state(s)
    if inflation < 0 or not math.isfinite(inflation):
        raise ArgumentError("inflation must be finite and >= 0")
    base = mdp.neighborhoods[s]
    if inflation == 0:
        return NeighborhoodSample(s, base, 0.0)
    extra = math.ceil(inflation * len(base) - 1e-12)
    dist = mdp.state_distances(s)
    taken = set(base)
    candidates = sorted((int(dist[x]), x) for x in range(mdp.n_states)
                        if x not in taken and dist[x] < np.iinfo(np.int64).max)
    added = tuple(x for _, x in candidates[:extra])
    return NeighborhoodSample(s, base + added, float(inflation))


def attack_neighborhoods(mdp: TabularMdp, inflation: float) -> list[tuple[int, ...]]:
    """Inflated neighborhoods of every state; terminal states stay singletons."""
    out = []
    for s in range(mdp.n_states):
        if mdp.is_terminal(s):
            out.append((s,))
        else:
            out.append(neighborhood_of(mdp, s, inflation).members)
    return out


def padded_neighborhoods(nbhds: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Pack ragged neighborhoods into an (S, K) array plus per-row sizes."""
    k = max(len(m) for m in nbhds)
    table = np.zeros((len(nbhds), k), dtype=np.int64)
    sizes = np.zeros(len(nbhds), dtype=np.int64)
    for s, members in enumerate(nbhds):
        table[s, : len(members)] = members
        table[s, len(members):] = members[0]
        sizes[s] = len(members)
    return table, sizes


# -- serialization -----------------------------------------------------------

def to_dict(mdp: TabularMdp) -> dict:
    doc = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "transition": mdp.transition.reshape(-1).tolist(),
        "reward": mdp.reward.reshape(-1).tolist(),
        "neighborhoods": [list(m) for m in mdp.neighborhoods],
        "terminal": sorted(mdp.terminal),
        "gamma": mdp.gamma,
        "horizon": mdp.horizon,
        "start": mdp.start,
        "name": mdp.name,
    }
    if mdp.positions is not None:
        doc["positions"] = mdp.positions.tolist()
    if mdp.state_names is not None:
        doc["state_names"] = list(mdp.state_names)
    return doc


def from_dict(doc: dict) -> TabularMdp:
    n_s, n_a = int(doc["n_states"]), int(doc["n_actions"])
    try:
        P = np.asarray(doc["transition"], dtype=np.float64).reshape(n_s, n_a, n_s)
        R = np.asarray(doc["reward"], dtype=np.float64).reshape(n_s, n_a)
    except ValueError as exc:
        raise ArgumentError(f"malformed MDP document: {exc}") from None
    names = doc.get("state_names")
    return TabularMdp(
        transition=P,
        reward=R,
        neighborhoods=tuple(tuple(m) for m in doc["neighborhoods"]),
        terminal=frozenset(doc.get("terminal", ())),
        gamma=float(doc["gamma"]),
        horizon=int(doc["horizon"]),
        start=int(doc.get("start", 0)),
        positions=None if doc.get("positions") is None else np.asarray(doc["positions"]),
        name=doc.get("name", "mdp"),
        state_names=None if names is None else tuple(names),
    )


def dumps(mdp: TabularMdp) -> str:
    return json.dumps(to_dict(mdp))


def loads(text: str) -> TabularMdp:
    return from_dict(json.loads(text))
