"""Per-class resource-block budgets chosen by Q-learning.

Each traffic class owns one agent whose states and actions are quantized
budget levels.  Picking action ``a`` moves the agent to level ``a + 1`` and
caps the class at ceil(N * level / num_levels) resource blocks for the TTI.
All agents share a single scalar QoS reward per decision epoch:

    reward = log10(avg_throughput / (avg_delay * avg_plr))

computed over every running application, with floors on delay and loss rate
so the ratio stays defined, and a symmetric clamp so the tables stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .qlearn import LearnerConfig, QTable, new_qtable, select_action, update

DELAY_FLOOR_MS = 1.0
PLR_FLOOR = 1e-4
REWARD_CLAMP = 12.0


@dataclass(frozen=True)
class BudgetLevels:
    """Quantization of ``total_rbs`` resource blocks into ``num_levels`` levels."""

    total_rbs: int
    num_levels: int

    def __post_init__(self) -> None:
        if self.num_levels < 1:
            raise ValueError(f"num_levels must be >= 1, got {self.num_levels}")
        if self.total_rbs <= self.num_levels:
            raise ValueError(
                f"total_rbs must exceed num_levels, got {self.total_rbs} <= {self.num_levels}")


def budget_for_level(space: BudgetLevels, level: int) -> int:
    """RB cap for one level: ceil(total_rbs * level / num_levels).

    Non-decreasing in ``level``; level num_levels maps to the full grid and
    level 1 is never zero.
    """
    if not 1 <= level <= space.num_levels:
        raise ValueError(f"level {level} out of range [1, {space.num_levels}]")
    return -(-space.total_rbs * level // space.num_levels)


@dataclass(frozen=True)
class RewardInputs:
    """Sliding-window QoS averages feeding the shared reward."""

    avg_throughput_kbps: float
    avg_delay_ms: float
    avg_plr: float

    def __post_init__(self) -> None:
        if self.avg_throughput_kbps < 0 or self.avg_delay_ms < 0 or self.avg_plr < 0:
            raise ValueError("reward inputs must be non-negative")
        if self.avg_plr > 1.0:
            raise ValueError(f"avg_plr must be <= 1, got {self.avg_plr}")


def compute_reward(inputs: RewardInputs) -> float:
    """Scalar QoS reward; higher throughput, lower delay and loss is better.

    Delay is floored at 1 ms and loss rate at 1e-4 before dividing; the
    result is clamped to [-12, 12].  Zero throughput maps to the lower clamp.
    """
    if inputs.avg_throughput_kbps == 0.0:
        return -REWARD_CLAMP
    delay = max(inputs.avg_delay_ms, DELAY_FLOOR_MS)
    loss = max(inputs.avg_plr, PLR_FLOOR)
    r = math.log10(inputs.avg_throughput_kbps / (delay * loss))
    return min(max(r, -REWARD_CLAMP), REWARD_CLAMP)


@dataclass
class ClassAgent:
    """Learning agent of one traffic class.

    ``level`` is the current budget level in [1, num_levels]; the table row
    for level L is L - 1.  ``pending`` holds the (state, action) of the last
    decision until its reward arrives one epoch later.
    """

    qci: int
    config: LearnerConfig
    table: QTable
    level: int = 1
    pending: Optional[tuple[int, int]] = None


def make_agent(qci: int, space: BudgetLevels, cfg: LearnerConfig) -> ClassAgent:
    table = new_qtable(space.num_levels, space.num_levels, cfg.initial_q)
    return ClassAgent(qci=qci, config=cfg, table=table)


def decide_budgets(agents: list[ClassAgent], space: BudgetLevels, epsilon: float,
                   rng: np.random.Generator) -> dict[int, int]:
    """Pick one RB cap per class for this decision epoch.

    ``agents`` must be ordered by QCI priority; the PRNG is drawn in that
    order so seeded runs are reproducible.  The chosen action index becomes
    the agent's next level (deterministic transition: next state = action).
    """
    if not agents:
        raise ValueError("agents must be non-empty")
    budgets: dict[int, int] = {}
    for agent in agents:
        state = agent.level - 1
        action = select_action(agent.table, state, epsilon, rng)
        agent.pending = (state, action)
        agent.level = action + 1
        budgets[agent.qci] = budget_for_level(space, agent.level)
    return budgets


def feedback(agents: list[ClassAgent], reward: float) -> None:
    """Apply the shared reward to every agent's last decision.

    Each agent updates entry (previous state, chosen action) against its
    post-decision state.  Agents with no pending decision (before the first
    epoch) are skipped.
    """
    if not math.isfinite(reward):
        raise ValueError(f"reward must be finite, got {reward}")
    for agent in agents:
        if agent.pending is None:
            continue
        state, action = agent.pending
        update(agent.table, state, action, reward, agent.level - 1, agent.config)
        agent.pending = None


def qtable_filename(qci: int) -> str:
    return f"qtable_qci{qci}.csv"
