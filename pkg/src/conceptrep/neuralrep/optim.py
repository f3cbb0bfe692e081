from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TOTAL_STEPS = 206000


@dataclass(frozen=True)
class TrainSchedule:
    base_lr: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 64
    total_steps: int = DEFAULT_TOTAL_STEPS
    decay_factor: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")


REFERENCE_SCHEDULE = TrainSchedule()


def lr_at_step(schedule: TrainSchedule, step: int) -> float:
    """Base rate for the first half of training, scaled by ``decay_factor`` afterwards."""
    if not 0 <= step < schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps})")
    if step < schedule.total_steps / 2:
        return schedule.base_lr
    return schedule.base_lr * schedule.decay_factor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new arrays; inputs are left untouched."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state disagree in length")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            bad = int((~np.isfinite(g)).sum())
            raise FloatingPointError(f"non-finite gradient in tensor {i} ({bad} entries) at step {state.t + 1}")
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)
