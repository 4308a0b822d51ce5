"""Non-learning decision rules used as baselines and building blocks.

A policy picks one operating mode per sub-slot. Action masks restrict
which modes a policy may use; the mask dropping the backscatter mode
turns any hybrid policy into a conventional active-offloading one.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from hybridmec import env
from hybridmec.env import (
    NUM_MODES,
    ActionAllocation,
    AmbientPowerModel,
    EnvModels,
    SubSlotEnv,
)
from hybridmec.errors import EmptyMask

FULL_HYBRID = (True, True, True, True)
NO_BACKSCATTER = (True, True, False, True)


def allowed_modes(mask):
    modes = [m for m in range(NUM_MODES) if mask[m]]
    if not modes:
        raise EmptyMask("action mask allows no modes")
    return modes


def masked_argmax(values, mask):
    """Index of the largest entry whose mask bit is set."""
    best = None
    for m in allowed_modes(mask):
        if best is None or values[m] > values[best]:
            best = m
    return best


class RandomPolicy:
    """Uniform draw over the allowed modes, every sub-slot."""

    def __init__(self, mask=FULL_HYBRID):
        self.mask = tuple(mask)
        self._modes = allowed_modes(self.mask)

    def select(self, sub: SubSlotEnv, rng: np.random.Generator) -> int:
        return int(self._modes[rng.integers(0, len(self._modes))])


class GreedyPolicy:
    """Myopic rule: maximize the current slot's simulated reward.

    For each candidate mode the policy simulates the rest of the slot
    as if every remaining sub-slot ran that mode (commitments so far
    are kept, ambient density pinned to its mean) and compares the
    resulting slot rewards. Re-evaluating at each sub-slot lets the
    winning fill change as commitments accumulate, which is how mixed
    allocations emerge. Ties resolve in mode order, so an all-zero tie
    (empty backlog, empty buffer, or an unavoidable miss) falls
    through to harvesting.
    """

    def __init__(self, models: EnvModels, mask=FULL_HYBRID):
        self.mask = tuple(mask)
        self._modes = allowed_modes(self.mask)
        self._det_models = replace(
            models,
            ambient=AmbientPowerModel.constant(models.ambient.mean_density))
        # step() draws arrival and channel samples that cannot touch the
        # current slot's reward, so a throwaway generator is fine here.
        self._scratch_rng = np.random.default_rng(0)

    def select(self, sub: SubSlotEnv, rng=None) -> int:
        counts = sub.committed_counts
        K = sub.K
        remaining = K - sum(counts)
        best_mode = None
        best_reward = -np.inf
        for mode in self._modes:
            c = list(counts)
            c[mode] += remaining
            alloc = ActionAllocation(t_h=c[0] / K, t_a=c[1] / K,
                                     t_p=c[2] / K, l_loc=c[3] / K)
            outcome = env.step(sub.state, alloc, self._det_models,
                               self._scratch_rng)
            if outcome.reward > best_reward:
                best_mode = mode
                best_reward = outcome.reward
        return int(best_mode)
