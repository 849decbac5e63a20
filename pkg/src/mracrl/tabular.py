"""Tabular MDPs: value iteration and Watkins Q-learning.

Costs are minimized; Q tables store the negated-cost convention
Q(x,u) = -c(x,u) + gamma * E[max_u' Q(x',u')].
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

Array = np.ndarray


@dataclass(eq=False)
class TabularMdp:
    """transitions[s, a, s'] = p(s'|s, a); costs[s, a]; discount in (0, 1)."""

    transitions: Array
    costs: Array
    discount: float

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.costs = np.asarray(self.costs, dtype=float)
        S, A, S2 = self.transitions.shape
        if S != S2 or self.costs.shape != (S, A):
            raise ValueError("transitions must be (S, A, S) and costs (S, A)")
        row_sums = self.transitions.sum(axis=2)
        if np.max(np.abs(row_sums - 1.0)) > 1e-12:
            raise ValueError("each (state, action) transition row must sum to 1")
        if not np.all(np.isfinite(self.costs)):
            raise ValueError("costs must be finite")
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, max_iter: int = 1_000_000) -> Array:
    """Iterate Q <- -c + gamma * P max_u' Q to a sup-norm fixed point."""
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        v = Q.max(axis=1)
        Q_new = -mdp.costs + mdp.discount * (mdp.transitions @ v)
        if np.max(np.abs(Q_new - Q)) < tol:
            return Q_new
        Q = Q_new
    raise RuntimeError("value iteration did not converge")


def greedy_policy(Q: Array) -> Array:
    return np.argmax(Q, axis=1)


def q_learning(
    mdp: TabularMdp,
    eta: Union[float, Callable[[int], float]],
    steps: int,
    rng: np.random.Generator,
    explore: Optional[Callable[[Array, int, np.random.Generator], int]] = None,
    start_state: int = 0,
) -> Array:
    """Single-trajectory Q-learning with the temporal-difference update.

    eta is either a constant rate in (0, 1] or a callable of the per-pair visit
    count (pre-increment), e.g. lambda n: 1 / (1 + n) for Robbins-Monro.
    explore(Q, state, rng) picks the action; default is uniform random, which
    visits every pair with positive probability on ergodic chains.
    """
    if explore is None:
        explore = lambda Q, s, r: int(r.integers(mdp.n_actions))
    n_states, n_actions = mdp.n_states, mdp.n_actions
    Q = np.zeros((n_states, n_actions))
    # python-list mirrors keep the per-step work off numpy's call overhead
    q_rows = [[0.0] * n_actions for _ in range(n_states)]
    costs = mdp.costs.tolist()
    cdf = [[row.tolist() for row in np.cumsum(mdp.transitions[s], axis=1)]
           for s in range(n_states)]
    visits = [[0] * n_actions for _ in range(n_states)]
    gamma = mdp.discount
    const_rate = None if callable(eta) else float(eta)
    if const_rate is not None and not 0 < const_rate <= 1:
        raise ValueError("learning rate must lie in (0, 1]")
    s = start_state
    for _ in range(steps):
        a = explore(Q, s, rng)
        if const_rate is None:
            rate = eta(visits[s][a])
            if not 0 < rate <= 1:
                raise ValueError("learning rate must lie in (0, 1]")
        else:
            rate = const_rate
        visits[s][a] += 1
        s_next = bisect.bisect_right(cdf[s][a], rng.random())
        row = q_rows[s]
        td = -costs[s][a] + gamma * max(q_rows[s_next]) - row[a]
        val = row[a] + rate * td
        row[a] = val
        Q[s, a] = val
        s = s_next
    return Q


def make_gridworld(size: int = 5, goal: tuple[int, int] = (4, 4), discount: float = 0.8) -> TabularMdp:
    """Deterministic gridworld: moves N/S/E/W with wall-stay, unit step cost.

    The goal state teleports back to (0, 0) at zero cost, keeping the chain
    ergodic so a single exploring trajectory visits every pair.
    """
    S = size * size
    A = 4
    moves = [(-1, 0), (1, 0), (0, 1), (0, -1)]
    transitions = np.zeros((S, A, S))
    costs = np.ones((S, A))
    goal_idx = goal[0] * size + goal[1]
    for r in range(size):
        for c in range(size):
            s = r * size + c
            for a, (dr, dc) in enumerate(moves):
                if s == goal_idx:
                    transitions[s, a, 0] = 1.0
                    costs[s, a] = 0.0
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < size and 0 <= nc < size):
                    nr, nc = r, c
                transitions[s, a, nr * size + nc] = 1.0
    return TabularMdp(transitions=transitions, costs=costs, discount=discount)
