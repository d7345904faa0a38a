"""Step-wise Stackelberg bimatrix games and tabular Q-updates.

The prosocial agent P is the leader and owns a Q-matrix over joint actions
(rows: its own action, columns: the introspective agent's action). The
introspective agent I is the follower and owns a Q-vector over its actions.
Action selection at one decision step works in three stages:

1. P finds the joint action maximizing its own matrix (the *expected* pair).
2. I's greedy action is its best response; P picks the row whose value in
   that column is closest to the expected value.
3. I plays its best response.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, NamedTuple

import numpy as np

from .errors import DimensionError, InputError


class ActionPair(NamedTuple):
    leader_action: int
    follower_action: int


@dataclass(frozen=True)
class PayoffBimatrix:
    leader: np.ndarray
    follower: np.ndarray

    def __post_init__(self):
        leader = np.asarray(self.leader, dtype=float)
        follower = np.asarray(self.follower, dtype=float)
        if leader.ndim != 2 or follower.ndim != 1:
            raise DimensionError(
                f"leader must be 2-D and follower 1-D, got {leader.shape} and {follower.shape}"
            )
        if leader.size == 0 or follower.size == 0:
            raise DimensionError("empty payoff")
        if leader.shape[1] != follower.shape[0]:
            raise DimensionError(
                f"leader has {leader.shape[1]} columns but follower has {follower.shape[0]} actions"
            )
        if not (np.all(np.isfinite(leader)) and np.all(np.isfinite(follower))):
            raise InputError("payoffs must be finite")
        object.__setattr__(self, "leader", leader)
        object.__setattr__(self, "follower", follower)

    @property
    def shape(self) -> tuple[int, int]:
        return self.leader.shape


def follower_best_response(follower) -> int:
    """Greedy follower action; ties go to the lowest index."""
    q = np.asarray(follower, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise DimensionError(f"follower payoff must be a non-empty vector, got shape {q.shape}")
    return int(np.argmax(q))


def expected_action_pair(leader) -> ActionPair:
    """Global maximizer of the leader matrix, row-major tie-break."""
    q = np.asarray(leader, dtype=float)
    if q.ndim != 2 or q.size == 0:
        raise DimensionError(f"leader payoff must be a non-empty matrix, got shape {q.shape}")
    row, col = divmod(int(np.argmax(q)), q.shape[1])
    return ActionPair(row, col)


def leader_action(leader, follower_br: int, expected: ActionPair) -> int:
    """Leader row whose payoff against ``follower_br`` is closest to the expected payoff.

    The expected leader action wins any tie it takes part in; other ties go
    to the lowest row.
    """
    q = np.asarray(leader, dtype=float)
    if q.ndim != 2 or q.size == 0:
        raise DimensionError(f"leader payoff must be a non-empty matrix, got shape {q.shape}")
    n_p, n_i = q.shape
    e_row, e_col = expected
    if not (0 <= follower_br < n_i and 0 <= e_row < n_p and 0 <= e_col < n_i):
        raise DimensionError(
            f"indices out of bounds for {n_p}x{n_i} game: br={follower_br}, expected={tuple(expected)}"
        )
    gap = np.abs(q[:, follower_br] - q[e_row, e_col])
    best = gap.min()
    if gap[e_row] == best:
        return int(e_row)
    return int(np.argmax(gap == best))


def stackelberg_step(game: PayoffBimatrix) -> ActionPair:
    expected = expected_action_pair(game.leader)
    br = follower_best_response(game.follower)
    return ActionPair(leader_action(game.leader, br, expected), br)


def solve(game: PayoffBimatrix) -> tuple[ActionPair, ActionPair]:
    """Return (played pair, expected pair)."""
    expected = expected_action_pair(game.leader)
    br = follower_best_response(game.follower)
    return ActionPair(leader_action(game.leader, br, expected), br), expected


# -- tabular Q-learning ------------------------------------------------------


def discretize(obs, bin_widths) -> tuple[int, ...]:
    """Fixed-width binning of each observation component."""
    obs = np.asarray(obs, dtype=float)
    widths = np.broadcast_to(np.asarray(bin_widths, dtype=float), obs.shape)
    if np.any(widths <= 0):
        raise InputError("bin widths must be positive")
    return tuple(int(k) for k in np.floor(obs / widths))


@dataclass
class TabularQ:
    """Dictionary-backed Q-tables for both agents.

    Unseen keys read as zeros; only the updated entry's table is ever created.
    Updates mutate in place and return the same object.
    """

    n_p: int = 9
    n_i: int = 9
    alpha: float = 0.5
    gamma: float = 0.95
    prosocial: dict[Hashable, np.ndarray] = field(default_factory=dict)
    introspective: dict[Hashable, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        # alpha = 0 is allowed as a degenerate no-op
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise InputError(f"gamma must lie in [0, 1), got {self.gamma}")

    def q_p(self, key) -> np.ndarray:
        table = self.prosocial.get(key)
        if table is None:
            table = self.prosocial[key] = np.zeros((self.n_p, self.n_i))
        return table

    def q_i(self, key) -> np.ndarray:
        vec = self.introspective.get(key)
        if vec is None:
            vec = self.introspective[key] = np.zeros(self.n_i)
        return vec

    def peek_p(self, key) -> np.ndarray:
        table = self.prosocial.get(key)
        return np.zeros((self.n_p, self.n_i)) if table is None else table

    def peek_i(self, key) -> np.ndarray:
        vec = self.introspective.get(key)
        return np.zeros(self.n_i) if vec is None else vec

    def game(self, o_p, o_i) -> PayoffBimatrix:
        return PayoffBimatrix(self.peek_p(o_p), self.peek_i(o_i))


def _check_reward(r: float):
    if not math.isfinite(r):
        raise InputError(f"reward must be finite, got {r}")


def tabular_update_prosocial(q: TabularQ, o, a: ActionPair, r: float, o_next, o_i_next,
                             terminal: bool) -> TabularQ:
    _check_reward(r)
    if terminal:
        target = r
    else:
        col = follower_best_response(q.peek_i(o_i_next))
        target = r + q.gamma * float(np.max(q.peek_p(o_next)[:, col]))
    table = q.q_p(o)
    row, col = a
    table[row, col] = (1.0 - q.alpha) * table[row, col] + q.alpha * target
    return q


def tabular_update_introspective(q: TabularQ, o, a: int, r: float, o_next,
                                 terminal: bool) -> TabularQ:
    _check_reward(r)
    target = r if terminal else r + q.gamma * float(np.max(q.peek_i(o_next)))
    vec = q.q_i(o)
    vec[a] = (1.0 - q.alpha) * vec[a] + q.alpha * target
    return q
