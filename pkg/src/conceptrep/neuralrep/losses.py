from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SPARSITY = 1e-4
DEFAULT_SIGMA = 0.05
DEFAULT_PIXELS = 64 * 64


@dataclass(frozen=True)
class SparsityConfig:
    s: float = DEFAULT_SPARSITY
    sigma: float = DEFAULT_SIGMA


@dataclass(frozen=True)
class SdaeLoss:
    loss: float
    reconstruction: float
    penalty: float
    grad_x_prime: np.ndarray
    grad_z: np.ndarray


@dataclass(frozen=True)
class VaeLoss:
    loss: float
    reconstruction: float
    kl: float
    grad_x_prime: np.ndarray
    grad_mu: np.ndarray
    grad_log_var: np.ndarray


def sdae_loss(x, x_prime, z, s: float = DEFAULT_SPARSITY, r: float | None = None) -> SdaeLoss:
    """Squared reconstruction error over ``r`` plus ``s * sum(|z|)``.

    Inputs may be single vectors or (batch, width) arrays; batches are
    averaged and the gradients scaled to match. ``r`` defaults to the vector
    width.
    """
    x, x_prime, z = (np.asarray(a, dtype=np.float64) for a in (x, x_prime, z))
    if x.shape != x_prime.shape:
        raise ValueError("x and x_prime differ in shape")
    r = x.shape[-1] if r is None else r
    if r == 0:
        raise ValueError("r must be non-zero")
    batch = x.shape[0] if x.ndim == 2 else 1
    diff = x_prime - x
    recon = float((diff * diff).sum()) / r / batch
    penalty = s * float(np.abs(z).sum()) / batch
    return SdaeLoss(
        recon + penalty,
        recon,
        penalty,
        2.0 * diff / r / batch,
        s * np.sign(z) / batch,
    )


def kl_to_unit_normal(mu, log_var) -> float:
    mu, log_var = np.asarray(mu, dtype=np.float64), np.asarray(log_var, dtype=np.float64)
    return float(0.5 * (mu * mu + np.exp(log_var) - 1.0 - log_var).sum())


def vae_loss(mu, log_var, x, x_prime, r: float | None = None, kl_weight: float = 1.0) -> VaeLoss:
    """Reconstruction error over ``r`` plus the KL divergence of N(mu, exp(log_var)) from N(0, I).

    Gradients with respect to ``mu`` and ``log_var`` cover the KL term only;
    the reconstruction path through the sampled code is added by the caller.
    """
    mu, log_var, x, x_prime = (np.asarray(a, dtype=np.float64) for a in (mu, log_var, x, x_prime))
    if not np.all(np.isfinite(log_var)):
        raise FloatingPointError("non-finite log variance")
    r = x.shape[-1] if r is None else r
    if r == 0:
        raise ValueError("r must be non-zero")
    batch = x.shape[0] if x.ndim == 2 else 1
    diff = x_prime - x
    recon = float((diff * diff).sum()) / r / batch
    kl = kl_weight * kl_to_unit_normal(mu, log_var) / batch
    return VaeLoss(
        recon + kl,
        recon,
        kl,
        2.0 * diff / r / batch,
        kl_weight * mu / batch,
        kl_weight * 0.5 * (np.exp(log_var) - 1.0) / batch,
    )
