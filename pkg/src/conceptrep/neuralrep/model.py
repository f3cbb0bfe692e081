"""Dense encoder/decoder pairs with hand-written backpropagation.

The encoder is a stack of ReLU layers followed by a code head. For the sparse
denoising autoencoder the head is ReLU, so codes are non-negative; for the
variational autoencoder the head is linear and emits the mean and log
variance side by side. The decoder mirrors the hidden widths and ends in a
linear layer of the input width.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import SparsityConfig, sdae_loss, vae_loss
from .optim import TrainSchedule

SDAE = "SDAE"
VAE = "VAE"
INIT_STD = 0.02
_MAGIC = b"AENC"
_KIND_BYTE = {SDAE: 0, VAE: 1}
_BYTE_KIND = {v: k for k, v in _KIND_BYTE.items()}


class CheckpointFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DenseNetConfig:
    input_dim: int
    layer_sizes: tuple[int, ...] = (1024,)
    code_dim: int = 512
    model_kind: str = SDAE

    def __post_init__(self):
        if self.code_dim <= 0 or self.input_dim <= 0:
            raise ValueError("widths must be positive")
        if self.model_kind not in _KIND_BYTE:
            raise ValueError(f"model_kind must be {SDAE} or {VAE}")
        object.__setattr__(self, "layer_sizes", tuple(int(w) for w in self.layer_sizes))

    @property
    def head_dim(self) -> int:
        return 2 * self.code_dim if self.model_kind == VAE else self.code_dim

    def encoder_shapes(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.layer_sizes, self.head_dim]
        return list(zip(widths[:-1], widths[1:]))

    def decoder_shapes(self) -> list[tuple[int, int]]:
        widths = [self.code_dim, *reversed(self.layer_sizes), self.input_dim]
        return list(zip(widths[:-1], widths[1:]))


@dataclass
class ModelParams:
    """Weights are stored (fan_in, fan_out); layers apply ``x @ W + b``."""

    encoder: list[tuple[np.ndarray, np.ndarray]]
    decoder: list[tuple[np.ndarray, np.ndarray]]

    def flat(self) -> list[np.ndarray]:
        return [a for layer in self.encoder + self.decoder for a in layer]

    @classmethod
    def from_flat(cls, arrays: list[np.ndarray], cfg: DenseNetConfig) -> "ModelParams":
        n_enc = len(cfg.encoder_shapes())
        pairs = [(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)]
        return cls(pairs[:n_enc], pairs[n_enc:])

    def copy(self) -> "ModelParams":
        return ModelParams([(w.copy(), b.copy()) for w, b in self.encoder], [(w.copy(), b.copy()) for w, b in self.decoder])


def init_params(cfg: DenseNetConfig, rng: np.random.Generator, std: float = INIT_STD) -> ModelParams:
    def layers(shapes):
        return [(rng.normal(0.0, std, size=s), np.zeros(s[1])) for s in shapes]

    enc = layers(cfg.encoder_shapes())
    dec = layers(cfg.decoder_shapes())
    return ModelParams(enc, dec)


def _relu(a):
    return np.maximum(a, 0.0)


def _run_encoder(params: ModelParams, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    for i, (w, b) in enumerate(params.encoder):
        a = h @ w + b
        pre.append(a)
        last = i == len(params.encoder) - 1
        h = a if last else _relu(a)
        acts.append(h)
    return pre, acts


def _run_decoder(params: ModelParams, z: np.ndarray):
    acts = [z]
    pre = []
    h = z
    for i, (w, b) in enumerate(params.decoder):
        a = h @ w + b
        pre.append(a)
        h = a if i == len(params.decoder) - 1 else _relu(a)
        acts.append(h)
    return pre, acts


def _backprop(layers, pre, acts, grad_out, linear_last: bool):
    """Gradients for a stack given dL/d(output); returns ([(dW, db)], dL/d(input))."""
    grads = []
    g = grad_out
    for i in reversed(range(len(layers))):
        w, _ = layers[i]
        if not (linear_last and i == len(layers) - 1):
            g = g * (pre[i] > 0)
        grads.append((acts[i].T @ g, g.sum(axis=0)))
        g = g @ w.T
    grads.reverse()
    return grads, g


def encode_head(params: ModelParams, cfg: DenseNetConfig, x: np.ndarray) -> np.ndarray:
    _, acts = _run_encoder(params, np.atleast_2d(x))
    head = acts[-1]
    return _relu(head) if cfg.model_kind == SDAE else head


def encode(params: ModelParams, cfg: DenseNetConfig, batch: np.ndarray) -> np.ndarray:
    """Latent rows: the ReLU code for SDAE, the mean vector for VAE. No corruption is applied."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != cfg.input_dim:
        raise ValueError(f"expected width {cfg.input_dim}, got {batch.shape[1]}")
    head = encode_head(params, cfg, batch)
    return head if cfg.model_kind == SDAE else head[:, : cfg.code_dim]


def reconstruct(params: ModelParams, cfg: DenseNetConfig, batch: np.ndarray) -> np.ndarray:
    z = encode(params, cfg, batch)
    _, acts = _run_decoder(params, z)
    return acts[-1]


def reconstruction_mse(params: ModelParams, cfg: DenseNetConfig, batch: np.ndarray) -> float:
    batch = np.atleast_2d(batch)
    return float(np.mean((reconstruct(params, cfg, batch) - batch) ** 2))


@dataclass
class StepResult:
    loss: float
    reconstruction: float
    regularizer: float
    grads: ModelParams
    code: np.ndarray = field(repr=False)


def loss_and_grads(
    params: ModelParams,
    cfg: DenseNetConfig,
    x_clean: np.ndarray,
    x_input: np.ndarray,
    sparsity: SparsityConfig | None = None,
    r: float | None = None,
    eps: np.ndarray | None = None,
    kl_weight: float = 1.0,
) -> StepResult:
    """Forward and backward pass for one batch.

    ``x_input`` is what the encoder sees (the corrupted batch for SDAE);
    the loss always targets ``x_clean``. For VAE, ``eps`` is the standard
    normal draw of the reparameterization.
    """
    x_clean = np.atleast_2d(x_clean)
    x_input = np.atleast_2d(x_input)
    enc_pre, enc_acts = _run_encoder(params, x_input)
    head = enc_acts[-1]
    if cfg.model_kind == SDAE:
        z = _relu(head)
    else:
        mu, log_var = head[:, : cfg.code_dim], head[:, cfg.code_dim :]
        if eps is None:
            raise ValueError("VAE needs eps")
        std = np.exp(0.5 * log_var)
        z = mu + std * eps
    dec_pre, dec_acts = _run_decoder(params, z)
    x_prime = dec_acts[-1]

    if cfg.model_kind == SDAE:
        s = (sparsity or SparsityConfig()).s
        terms = sdae_loss(x_clean, x_prime, z, s, r)
        dec_grads, grad_z = _backprop(params.decoder, dec_pre, dec_acts, terms.grad_x_prime, linear_last=True)
        grad_head = (grad_z + terms.grad_z) * (head > 0)
        regularizer = terms.penalty
    else:
        terms = vae_loss(mu, log_var, x_clean, x_prime, r, kl_weight)
        dec_grads, grad_z = _backprop(params.decoder, dec_pre, dec_acts, terms.grad_x_prime, linear_last=True)
        grad_mu = terms.grad_mu + grad_z
        grad_lv = terms.grad_log_var + grad_z * eps * 0.5 * std
        grad_head = np.concatenate([grad_mu, grad_lv], axis=1)
        regularizer = terms.kl
    enc_grads, _ = _backprop(params.encoder, enc_pre, enc_acts, grad_head, linear_last=True)
    return StepResult(terms.loss, terms.reconstruction, regularizer, ModelParams(enc_grads, dec_grads), z)


def save_checkpoint(path: str | Path, params: ModelParams, cfg: DenseNetConfig, schedule: TrainSchedule) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, cfg, schedule))


def checkpoint_bytes(params: ModelParams, cfg: DenseNetConfig, schedule: TrainSchedule) -> bytes:
    out = bytearray(_MAGIC)
    out += struct.pack("<BIII", _KIND_BYTE[cfg.model_kind], cfg.input_dim, cfg.code_dim, len(cfg.layer_sizes))
    out += struct.pack(f"<{len(cfg.layer_sizes)}I", *cfg.layer_sizes)
    arrays = params.flat()
    out += struct.pack("<I", len(arrays))
    for a in arrays:
        shape = a.shape if a.ndim == 2 else (1, a.shape[0])
        out += struct.pack("<II", *shape)
    for a in arrays:
        out += np.ascontiguousarray(a, dtype="<f4").tobytes()
    out += struct.pack(
        "<dddIIdQ",
        schedule.base_lr,
        schedule.beta1,
        schedule.beta2,
        schedule.batch_size,
        schedule.total_steps,
        schedule.decay_factor,
        schedule.seed,
    )
    return bytes(out)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, DenseNetConfig, TrainSchedule]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise CheckpointFormatError("bad magic, not an autoencoder checkpoint")
    try:
        off = 4
        kind, input_dim, code_dim, n_hidden = struct.unpack_from("<BIII", data, off)
        off += 13
        hidden = struct.unpack_from(f"<{n_hidden}I", data, off)
        off += 4 * n_hidden
        (n_arrays,) = struct.unpack_from("<I", data, off)
        off += 4
        shapes = [struct.unpack_from("<II", data, off + 8 * i) for i in range(n_arrays)]
        off += 8 * n_arrays
        arrays = []
        for i, (rows, cols) in enumerate(shapes):
            n = rows * cols
            a = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64)
            arrays.append(a.reshape(rows, cols) if i % 2 == 0 else a)
            off += 4 * n
        sched = struct.unpack_from("<dddIIdQ", data, off)
    except struct.error as exc:
        raise CheckpointFormatError(f"truncated checkpoint: {exc}") from exc
    cfg = DenseNetConfig(input_dim, tuple(hidden), code_dim, _BYTE_KIND[kind])
    schedule = TrainSchedule(*sched)
    return ModelParams.from_flat(arrays, cfg), cfg, schedule
