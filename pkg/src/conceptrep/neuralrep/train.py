from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from ..imgproc import corrupt
from .losses import SparsityConfig
from .model import SDAE, DenseNetConfig, ModelParams, init_params, loss_and_grads
from .optim import AdamState, TrainSchedule, adam_step, lr_at_step

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float, last_good: ModelParams):
        super().__init__(f"loss became {loss} at step {step}")
        self.step = step
        self.last_good = last_good


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[float] = field(default_factory=list)
    reconstruction: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)


def batch_stream(data: np.ndarray, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Endless shuffled mini-batches over the rows of ``data``, reshuffled every epoch."""
    n = len(data)
    while True:
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield data[order[start : start + batch_size]]
        if n < batch_size:
            yield data[order]


def train_autoencoder(
    stream: Iterator[np.ndarray] | Callable[[], Iterator[np.ndarray]],
    cfg: DenseNetConfig,
    schedule: TrainSchedule,
    sparsity: SparsityConfig | None = None,
    r: float | None = None,
    kl_weight: float = 1.0,
    params: ModelParams | None = None,
) -> TrainResult:
    """Train with Adam on the halfway-decay schedule.

    SDAE batches are corrupted with Gaussian noise before encoding while the
    loss targets the clean batch. VAE batches draw a fresh reparameterization
    noise each step. Noise comes from a generator seeded by ``schedule.seed``,
    so a fixed stream gives a reproducible run.
    """
    sparsity = sparsity or SparsityConfig()
    rng = np.random.default_rng(schedule.seed)
    if params is None:
        params = init_params(cfg, rng)
    batches = stream() if callable(stream) else stream
    flat = params.flat()
    state = AdamState.zeros_like(flat)
    result = TrainResult(params)
    for step in range(schedule.total_steps):
        x = np.atleast_2d(next(batches))
        lr = lr_at_step(schedule, step)
        current = ModelParams.from_flat(flat, cfg)
        if cfg.model_kind == SDAE:
            out = loss_and_grads(current, cfg, x, corrupt(x, sparsity.sigma, rng), sparsity, r)
        else:
            eps = rng.standard_normal((len(x), cfg.code_dim))
            out = loss_and_grads(current, cfg, x, x, r=r, eps=eps, kl_weight=kl_weight)
        if not np.isfinite(out.loss):
            raise TrainingDiverged(step, out.loss, current)
        flat, state = adam_step(flat, out.grads.flat(), state, lr, schedule.beta1, schedule.beta2)
        result.losses.append(out.loss)
        result.reconstruction.append(out.reconstruction)
        result.learning_rates.append(lr)
        if step % 500 == 0:
            log.debug("step %d lr %.2e loss %.6f", step, lr, out.loss)
    result.params = ModelParams.from_flat(flat, cfg)
    return result
