"""Piecewise-linear weight trajectories.

A trajectory starts at ``initial_weights`` and applies a sequence of target
updates. Update ``k`` activates at block ``a_k`` and moves linearly to its
target over ``n_k`` blocks: at ``a_k`` the weights are still the previous
ones, at ``a_k + n_k`` they equal the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .pool import PoolError

__all__ = [
    "WeightUpdate",
    "WeightTrajectory",
    "InterpolationPlan",
    "weights_at",
    "split_cost_ratio",
    "single_step_trajectory",
]


def _weight_vector(values: Sequence[float] | np.ndarray) -> np.ndarray:
    w = np.array(values, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise PoolError("weight vector needs at least two entries")
    if np.any(w <= 0) or np.any(w >= 1):
        raise PoolError(f"weights must lie strictly in (0, 1), got {w.tolist()}")
    if abs(w.sum() - 1.0) > 1e-12:
        raise PoolError(f"weights sum to {w.sum()!r}, not 1")
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class WeightUpdate:
    activation_block: int
    target_weights: np.ndarray
    interpolation_blocks: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_weights", _weight_vector(self.target_weights))
        if int(self.interpolation_blocks) < 1:
            raise PoolError("interpolation_blocks must be a positive integer")
        object.__setattr__(self, "interpolation_blocks", int(self.interpolation_blocks))
        object.__setattr__(self, "activation_block", int(self.activation_block))

    @property
    def end_block(self) -> int:
        return self.activation_block + self.interpolation_blocks


@dataclass(frozen=True)
class InterpolationPlan:
    start_weights: np.ndarray
    per_block_delta: np.ndarray
    start_block: int
    end_block: int


@dataclass(frozen=True)
class WeightTrajectory:
    initial_weights: np.ndarray
    updates: tuple[WeightUpdate, ...] = ()
    start_block: int = 0

    def __post_init__(self) -> None:
        w0 = _weight_vector(self.initial_weights)
        object.__setattr__(self, "initial_weights", w0)
        ups = tuple(self.updates)
        object.__setattr__(self, "updates", ups)
        prev: WeightUpdate | None = None
        for u in ups:
            if u.target_weights.size != w0.size:
                raise PoolError("update target has the wrong number of tokens")
            if u.activation_block < self.start_block:
                raise PoolError("update activates before the trajectory starts")
            if prev is not None:
                if u.activation_block <= prev.activation_block:
                    raise PoolError("activation blocks must be strictly increasing")
                if u.activation_block < prev.end_block:
                    raise PoolError(
                        f"update at block {u.activation_block} overlaps the window "
                        f"ending at block {prev.end_block}"
                    )
            prev = u
        object.__setattr__(self, "_plans", tuple(self._build_plans()))

    def _build_plans(self) -> Iterable[InterpolationPlan]:
        current = self.initial_weights
        for u in self.updates:
            delta = (u.target_weights - current) / u.interpolation_blocks
            yield InterpolationPlan(current, delta, u.activation_block, u.end_block)
            current = u.target_weights

    @property
    def plans(self) -> tuple[InterpolationPlan, ...]:
        return self._plans  # type: ignore[attr-defined]

    @property
    def n_tokens(self) -> int:
        return self.initial_weights.size

    @property
    def final_weights(self) -> np.ndarray:
        return self.updates[-1].target_weights if self.updates else self.initial_weights

    def window_start(self, block: int) -> int | None:
        """Activation block of the window covering ``block``, if any."""
        for plan in self.plans:
            if plan.start_block <= block <= plan.end_block:
                return plan.start_block
        return None

    def weights_at(self, block: int) -> np.ndarray:
        return weights_at(self, block)


def weights_at(traj: WeightTrajectory, block: int) -> np.ndarray:
    if block < traj.start_block:
        raise PoolError(f"block {block} precedes trajectory start {traj.start_block}")
    current = traj.initial_weights
    for plan, update in zip(traj.plans, traj.updates):
        if block <= plan.start_block:
            return current.copy()
        if block < plan.end_block:
            w = plan.start_weights + (block - plan.start_block) * plan.per_block_delta
            # renormalise so the sum stays exactly testable
            return w / w.sum()
        current = update.target_weights
    return current.copy()


def split_cost_ratio(delta_w: float, n_steps: int) -> float:
    """Leading-order cost of an ``n_steps`` schedule relative to one jump."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    return 1.0 / n_steps


def single_step_trajectory(
    start: Sequence[float], target: Sequence[float], n_steps: int, activation_block: int = 0
) -> WeightTrajectory:
    return WeightTrajectory(
        initial_weights=np.asarray(start, dtype=float),
        updates=(WeightUpdate(activation_block, np.asarray(target, dtype=float), n_steps),),
        start_block=min(0, activation_block),
    )
