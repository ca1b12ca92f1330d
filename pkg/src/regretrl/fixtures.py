"""Canonical MDP fixtures: the two-lane decision, a cliff gridworld, random MDPs."""
from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .mdp import TabularMdp

# two-lane state ids
S0, SA, SB, TERM = 0, 1, 2, 3
# action ids: L/slow = 0, R/fast = 1
SLOW, FAST = 0, 1
LEFT, RIGHT = 0, 1

# grid action ids
UP, EAST, DOWN, WEST = 0, 1, 2, 3
_MOVES = {UP: (0, 1), EAST: (1, 0), DOWN: (0, -1), WEST: (-1, 0)}


def build_twolane() -> TabularMdp:
    """Choose a lane at s0, then a speed in that lane.

    sA and sB look alike: fast is catastrophic in sA (-10) but best in sB (2).
    """
    P = np.zeros((4, 2, 4))
    P[S0, LEFT, SA] = 1.0
    P[S0, RIGHT, SB] = 1.0
    P[SA, :, TERM] = 1.0
    P[SB, :, TERM] = 1.0
    P[TERM, :, TERM] = 1.0
    R = np.zeros((4, 2))
    R[SA, SLOW], R[SA, FAST] = 0.5, -10.0
    R[SB, SLOW], R[SB, FAST] = 1.0, 2.0
    return TabularMdp(
        transition=P,
        reward=R,
        neighborhoods=((S0,), (SA, SB), (SB, SA), (TERM,)),
        terminal=frozenset({TERM}),
        gamma=1.0,
        horizon=2,
        start=S0,
        name="twolane",
        state_names=("s0", "sA", "sB", "T"),
    )


def build_cliff_grid(width: int = 4, height: int = 3, cliff_penalty: float = -100.0,
                     goal_reward: float = 0.0, slip: float = 0.0, *,
                     step_reward: float = -1.0, gamma: float = 0.95,
                     horizon: int | None = None) -> TabularMdp:
    """Cliff-walk grid.

    Row y=0 holds the start (x=0), the goal (x=width-1) and cliff cells in
    between.  Entering a cliff cell pays ``cliff_penalty`` and ends the
    episode; entering the goal pays ``goal_reward`` and ends it.  With
    probability ``slip`` a move is replaced by one of the two perpendicular
    moves.  ``reward[s, a]`` is the expected immediate reward.
    State id is ``y * width + x``.
    """
    if width < 3 or height < 2:
        raise ArgumentError("cliff grid needs width >= 3 and height >= 2")
    if not 0.0 <= slip <= 0.2:
        raise ArgumentError("slip must lie in [0, 0.2]")
    n = width * height
    pos = np.array([(i % width, i // width) for i in range(n)], dtype=np.int64)
    goal = width - 1
    cliff = set(range(1, width - 1))
    terminal = cliff | {goal}

    def outcome(s, a):
        x, y = pos[s]
        dx, dy = _MOVES[a]
        nx, ny = x + dx, y + dy
        if not (0 <= nx < width and 0 <= ny < height):
            nx, ny = x, y
        nxt = ny * width + nx
        if nxt in cliff:
            return nxt, cliff_penalty
        if nxt == goal:
            return nxt, goal_reward
        return nxt, step_reward

    P = np.zeros((n, 4, n))
    R = np.zeros((n, 4))
    for s in range(n):
        if s in terminal:
            P[s, :, s] = 1.0
            continue
        for a in range(4):
            perp = (a + 1) % 4, (a + 3) % 4
            for move, prob in ((a, 1.0 - slip), (perp[0], slip / 2), (perp[1], slip / 2)):
                if prob == 0.0:
                    continue
                nxt, r = outcome(s, move)
                P[s, a, nxt] += prob
                R[s, a] += prob * r
    nbhd = []
    for s in range(n):
        if s in terminal:
            nbhd.append((s,))
            continue
        dist = np.abs(pos - pos[s]).sum(axis=1)
        others = [int(x) for x in np.flatnonzero(dist == 1)]
        nbhd.append((s, *others))
    return TabularMdp(
        transition=P,
        reward=R,
        neighborhoods=tuple(nbhd),
        terminal=frozenset(terminal),
        gamma=gamma,
        horizon=horizon if horizon is not None else 2 * n,
        start=0,
        positions=pos,
        name=f"cliff{width}x{height}",
    )


def build_random_mdp(seed: int, n_states: int | None = None, n_actions: int | None = None,
                     nbhd_size: int | None = None, *, gamma: float = 0.9,
                     horizon: int = 5) -> TabularMdp:
    """Random dense MDP, reproducible from ``seed``.

    Sizes left as None are drawn from the seed: 2-6 states, 2-3 actions,
    neighborhoods of 1-3 states.
    """
    rng = np.random.default_rng(seed)
    n_s = int(rng.integers(2, 7)) if n_states is None else n_states
    n_a = int(rng.integers(2, 4)) if n_actions is None else n_actions
    k = int(rng.integers(1, 4)) if nbhd_size is None else nbhd_size
    if not (1 <= n_s <= 8 and 1 <= n_a <= 3 and 1 <= k <= 3):
        raise ArgumentError("random MDPs are limited to 8 states, 3 actions, neighborhoods of 3")
    if not 0.0 < gamma < 1.0:
        raise ArgumentError("random MDPs require gamma < 1")
    P = rng.random((n_s, n_a, n_s))
    P /= P.sum(axis=-1, keepdims=True)
    R = rng.uniform(-1.0, 1.0, size=(n_s, n_a))
    nbhd = []
    for s in range(n_s):
        others = [x for x in range(n_s) if x != s]
        picked = rng.choice(others, size=min(k - 1, len(others)), replace=False) if others else []
        nbhd.append((s, *sorted(int(x) for x in picked)))
    return TabularMdp(
        transition=P,
        reward=R,
        neighborhoods=tuple(nbhd),
        terminal=frozenset(),
        gamma=gamma,
        horizon=horizon,
        start=0,
        name=f"random{seed}",
    )


def singleton_neighborhoods(mdp: TabularMdp) -> TabularMdp:
    """Copy of ``mdp`` where every neighborhood is just the state itself."""
    return TabularMdp(
        transition=mdp.transition,
        reward=mdp.reward,
        neighborhoods=tuple((s,) for s in range(mdp.n_states)),
        terminal=mdp.terminal,
        gamma=mdp.gamma,
        horizon=mdp.horizon,
        start=mdp.start,
        positions=mdp.positions,
        name=mdp.name + "-singleton",
        state_names=mdp.state_names,
    )


def build_environment(name: str, **params) -> TabularMdp:
    builders = {"twolane": build_twolane, "cliff": build_cliff_grid, "random": build_random_mdp}
    if name not in builders:
        raise ArgumentError(f"unknown environment {name!r}; choose from {sorted(builders)}")
    return builders[name](**params)
