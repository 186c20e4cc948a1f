"""Training-time grid corruption and inference-time remask scheduling.

The total mask ratio follows the cosine schedule gamma(tau) = cos(pi*tau/2)
with tau drawn uniformly; a second uniform draw splits the budget between
whole-object masking and individual-token masking. Selected positions then
go through the replace-and-remask trichotomy: 10% random in-vocabulary
token, 88% of the rest the MASK id, the remainder kept unchanged. All
selected positions are supervised with their original tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scene import GRID_COLUMNS, SceneCodec, TokenizedScene

RANDOM_TOKEN_FRACTION = 0.10
MASK_TOKEN_FRACTION = 0.88  # of the remaining 90%


def mask_ratio(tau: float) -> float:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return math.cos(math.pi * tau / 2)


def remask_count(step: int, total_steps: int, total_masked: int) -> int:
    """Tokens still masked after a decoding step; 0 after the final step."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return math.floor(total_masked * math.cos(math.pi / 2 * step / total_steps))


@dataclass
class MaskPlan:
    """One grid's sampled corruption: which positions, and how."""

    tau: float
    gamma: float
    p_obj: float
    object_rows: np.ndarray  # int row indices masked whole
    positions: np.ndarray  # bool [N, 12], all selected positions

    @property
    def masked_count(self) -> int:
        return int(self.positions.sum())


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def sample_mask(grid: TokenizedScene, rng: np.random.Generator) -> MaskPlan:
    """Draw the two-level mask plan for one grid."""
    n = grid.tokens.shape[0]
    if n < 1:
        raise ValueError("grid has no object rows")
    tau = float(rng.uniform())
    gamma = mask_ratio(tau)
    p_obj = float(rng.uniform())
    budget = _round_half_up(gamma * n * GRID_COLUMNS)
    n_objects = min(_round_half_up(p_obj * gamma * n), n)
    rows = rng.choice(n, size=n_objects, replace=False) if n_objects else np.empty(0, dtype=np.int64)
    positions = np.zeros((n, GRID_COLUMNS), dtype=bool)
    positions[rows] = True
    remaining = budget - n_objects * GRID_COLUMNS
    if remaining > 0:
        open_rows = np.setdiff1d(np.arange(n), rows)
        flat = (open_rows[:, None] * GRID_COLUMNS + np.arange(GRID_COLUMNS)[None, :]).reshape(-1)
        take = min(remaining, flat.shape[0])
        chosen = rng.choice(flat, size=take, replace=False)
        positions.reshape(-1)[chosen] = True
    return MaskPlan(tau=tau, gamma=gamma, p_obj=p_obj, object_rows=np.sort(rows), positions=positions)


def corrupt(
    grid: TokenizedScene, plan: MaskPlan, rng: np.random.Generator, codec: SceneCodec
) -> tuple[TokenizedScene, np.ndarray]:
    """Apply the replace-and-remask trichotomy at the planned positions.

    Returns the corrupted grid and the supervision targets: original tokens
    at every planned position (kept and randomized included), -1 elsewhere.
    """
    out = grid.copy()
    targets = np.full_like(grid.tokens, -1)
    targets[plan.positions] = grid.tokens[plan.positions]
    rows, cols = np.nonzero(plan.positions)
    draws = rng.random(rows.shape[0])
    for i in range(rows.shape[0]):
        col = codec.columns[cols[i]]
        if draws[i] < RANDOM_TOKEN_FRACTION:
            out.tokens[rows[i], cols[i]] = rng.integers(col.mask_id)  # any non-MASK id
        elif draws[i] < RANDOM_TOKEN_FRACTION + (1 - RANDOM_TOKEN_FRACTION) * MASK_TOKEN_FRACTION:
            out.tokens[rows[i], cols[i]] = col.mask_id
            out.mask_flags[rows[i], cols[i]] = True
        # else: keep the original token
    return out, targets
