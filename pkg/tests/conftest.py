"""Shared test helpers."""

from __future__ import annotations

import numpy as np

from ltesched.qlearn import MdpSpec


def make_mdp_family(count: int, max_states: int = 5, max_actions: int = 5,
                    base_seed: int = 7000) -> list[MdpSpec]:
    """Fixed family of small deterministic MDPs with rewards in [-1, 10].

    Seeded per instance, so the family is identical across runs and the
    learned-policy oracle checks are reproducible.
    """
    family = []
    for k in range(count):
        rng = np.random.default_rng(base_seed + k)
        num_states = int(rng.integers(2, max_states + 1))
        num_actions = int(rng.integers(2, max_actions + 1))
        transition = rng.integers(0, num_states, size=(num_states, num_actions))
        reward = rng.uniform(-1.0, 10.0, size=(num_states, num_actions))
        family.append(MdpSpec(transition, reward))
    return family
