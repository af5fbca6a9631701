"""Non-reactive comparison strategies: random, largest-norm, single-action,
and the full-feedback supervised oracle.

All baselines share the mixture policy's ``action(context, rng)`` interface,
so the sampler and harness are strategy-agnostic. None of them can read a
reward.
"""

from __future__ import annotations

import logging
from typing import Iterable, Tuple

import numpy as np

from .core import Context, InteractionDataset, InteractionRecord
from .estimator import RidgeEstimate, ridge_fit

logger = logging.getLogger(__name__)


def random_policy_action(context: Context, rng: np.random.Generator) -> int:
    """Uniform over the context's available actions."""
    return int(rng.integers(context.n_actions))


def largest_norm_action(context: Context) -> int:
    """argmax of the Euclidean feature norm; ties break to the lowest index."""
    return int(np.argmax(np.linalg.norm(context.features, axis=1)))


def single_action(context: Context, fixed_index: int) -> int:
    """Always the fixed index, clamped to the last available action if needed."""
    if fixed_index >= context.n_actions:
        logger.warning(
            "fixed action %d unavailable in context %s; clamping to %d",
            fixed_index, context.context_id, context.n_actions - 1,
        )
        return context.n_actions - 1
    if fixed_index < 0:
        logger.warning(
            "fixed action %d unavailable in context %s; clamping to 0",
            fixed_index, context.context_id,
        )
        return 0
    return fixed_index


class RandomPolicy:
    def action(self, context: Context, rng: np.random.Generator) -> int:
        return random_policy_action(context, rng)


class LargestNormPolicy:
    def action(self, context: Context, rng: np.random.Generator) -> int:
        return largest_norm_action(context)


class SingleActionPolicy:
    def __init__(self, fixed_index: int = 0):
        self.fixed_index = int(fixed_index)

    def action(self, context: Context, rng: np.random.Generator) -> int:
        return single_action(context, self.fixed_index)


def supervised_oracle_fit(full_feedback: Iterable[Tuple[Context, int, float]],
                          lambda_reg: float) -> RidgeEstimate:
    """Ridge fit on full feedback: every action of every training context.

    This is definitionally ridge_fit on the exploded dataset; it exists as
    an approximate upper bound for the bandit-feedback strategies.
    """
    records = []
    d = None
    for context, action_index, reward in full_feedback:
        if d is None:
            d = context.d
        records.append(
            InteractionRecord(
                context_id=context.context_id,
                action_index=action_index,
                feature=context.features[action_index],
                reward=reward,
            )
        )
    if d is None:
        raise ValueError("full feedback is empty")
    return ridge_fit(InteractionDataset(d, records), lambda_reg)
