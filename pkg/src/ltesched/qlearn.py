"""Tabular Q-learning over finite state/action grids.

The one-step update is

    Q(s,a) <- Q(s,a) + alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))

with epsilon-greedy action selection.  ``value_iteration`` solves small
deterministic decision processes exactly and serves as the test oracle for
the learned policies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters of one learning agent."""

    alpha: float = 0.2      # learning rate, (0, 1]
    gamma: float = 0.75     # discount factor, [0, 1)
    epsilon: float = 0.1    # exploration probability, [0, 1]
    initial_q: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not math.isfinite(self.initial_q):
            raise ValueError("initial_q must be finite")


class QTable:
    """Dense action-value table; rows are states, columns are actions.

    Dimensions are fixed at creation.  Entries stay finite as long as every
    applied reward is finite, which ``update`` enforces.
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        self.values = values

    @property
    def num_states(self) -> int:
        return self.values.shape[0]

    @property
    def num_actions(self) -> int:
        return self.values.shape[1]


def new_qtable(num_states: int, num_actions: int, initial_q: float = 0.0) -> QTable:
    """Create a table with every entry set to ``initial_q``."""
    if num_states < 1 or num_actions < 1:
        raise ValueError(f"table dimensions must be >= 1, got {num_states}x{num_actions}")
    if not math.isfinite(initial_q):
        raise ValueError("initial_q must be finite")
    return QTable(np.full((num_states, num_actions), float(initial_q)))


def select_action(q: QTable, state: int, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy pick from one table row.

    Draws one uniform real, then (only when exploring) one uniform integer;
    the fixed draw order keeps seeded runs reproducible.  Greedy ties break
    toward the lowest action index.
    """
    values = q.values
    if not 0 <= state < values.shape[0]:
        raise IndexError(f"state {state} out of range [0, {values.shape[0]})")
    if rng.random() < epsilon:
        return int(rng.random() * values.shape[1])
    return int(values[state].argmax())


def update(q: QTable, state: int, action: int, reward: float, next_state: int,
           cfg: LearnerConfig) -> float:
    """Apply the one-step update to entry (state, action); returns its new value.

    Exactly one entry changes.  Non-finite rewards are rejected so the table
    invariant (all entries finite) cannot be broken.
    """
    if not math.isfinite(reward):
        raise ValueError(f"reward must be finite, got {reward}")
    v = q.values
    if not (0 <= state < v.shape[0] and 0 <= next_state < v.shape[0]):
        raise IndexError("state index out of range")
    if not 0 <= action < v.shape[1]:
        raise IndexError("action index out of range")
    row = v[state]
    cur = row[action]
    new = cur + cfg.alpha * (reward + cfg.gamma * v[next_state].max() - cur)
    row[action] = new
    return float(new)


@dataclass(frozen=True)
class MdpSpec:
    """Deterministic test MDP: next state and reward for every (s, a) pair.

    ``transition`` and ``reward`` are dense (S, A) arrays, so the maps are
    total over the state/action grid by construction.
    """

    transition: np.ndarray
    reward: np.ndarray

    def __post_init__(self) -> None:
        t, r = np.asarray(self.transition), np.asarray(self.reward, dtype=float)
        if t.ndim != 2 or t.shape != r.shape:
            raise ValueError("transition and reward must be 2-D arrays of equal shape")
        if t.min() < 0 or t.max() >= t.shape[0]:
            raise ValueError("transition targets must be valid state indices")
        object.__setattr__(self, "transition", t.astype(np.intp))
        object.__setattr__(self, "reward", r)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]


def value_iteration(m: MdpSpec, gamma: float, tol: float = 1e-9,
                    max_sweeps: int = 100_000) -> QTable:
    """Fixed point of the optimality backup for a deterministic MDP.

    Sweeps Q <- r + gamma * max_a' Q(next, a') until successive iterates
    differ by less than ``tol`` in sup norm; the returned table then has a
    Bellman residual below gamma * tol.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1) for contraction, got {gamma}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    q = np.zeros_like(m.reward)
    for _ in range(max_sweeps):
        q_next = m.reward + gamma * q.max(axis=1)[m.transition]
        step = np.abs(q_next - q).max()
        q = q_next
        if step < tol:
            return QTable(q)
    raise RuntimeError(f"value iteration did not converge in {max_sweeps} sweeps")


def greedy_policy(q: QTable) -> np.ndarray:
    """Per-state argmax action, ties toward the lowest index."""
    return q.values.argmax(axis=1)


def run_q_learning(m: MdpSpec, cfg: LearnerConfig, steps: int, rng: np.random.Generator,
                   restart_every: int = 10) -> QTable:
    """Drive ``select_action``/``update`` on a deterministic MDP for ``steps`` steps.

    The state follows the MDP transitions but is re-drawn uniformly every
    ``restart_every`` steps, so every state-action pair keeps getting visits
    even when the transition graph is not irreducible; rare pairs then see
    enough updates for their values to converge, not just the greedy ones.
    """
    q = new_qtable(m.num_states, m.num_actions, cfg.initial_q)
    transition = m.transition.tolist()
    reward = m.reward.tolist()
    restarts = rng.integers(m.num_states, size=-(-steps // restart_every)).tolist()
    state = 0
    for t in range(steps):
        if t % restart_every == 0:
            state = restarts[t // restart_every]
        action = select_action(q, state, cfg.epsilon, rng)
        next_state = transition[state][action]
        update(q, state, action, reward[state][action], next_state, cfg)
        state = next_state
    return q


def qtable_to_csv(q: QTable) -> str:
    """Serialize a table as ``state,action,q`` rows with 9 significant digits."""
    lines = ["state,action,q"]
    v = q.values
    for s in range(v.shape[0]):
        for a in range(v.shape[1]):
            lines.append(f"{s},{a},{v[s, a]:.9g}")
    return "\n".join(lines) + "\n"
