"""Training objectives and their parameter gradients.

All losses are in the sigma**4-scaled denoising form, i.e. mean squared
distance between the clean point and the one-step estimate
``xi + sigma**2 * psi(xi)``.
"""

from __future__ import annotations

import math

import numpy as np

from .core import Rng, gaussian
from .data import NoisyPairBatch
from .model import (
    NetParams,
    _input_grad,
    energy,
    energy_param_grad,
    forward,
    score,
    score_net_forward,
    score_net_param_vjp,
    score_param_vjp_trace,
)


class UnsupportedDimensionError(ValueError):
    pass


def _check_batch(batch: NoisyPairBatch):
    if len(batch) == 0:
        raise ValueError("empty batch")


def deen_residual(p: NetParams, batch: NoisyPairBatch, sigma: float):
    tr = forward(p, batch.noisy)
    parts = _input_grad(p, tr)
    r = batch.clean - batch.noisy + sigma ** 2 * parts[0]
    return r, tr, parts


def deen_loss(p: NetParams, batch: NoisyPairBatch, sigma: float) -> float:
    _check_batch(batch)
    r, _, _ = deen_residual(p, batch, sigma)
    return float(np.mean(np.sum(r * r, axis=1)))


def deen_grad(p: NetParams, batch: NoisyPairBatch, sigma: float) -> tuple[float, NetParams]:
    """Loss and gradient; per pair the gradient is ``2 sigma^2 vjp(xi, r)``."""
    _check_batch(batch)
    r, tr, parts = deen_residual(p, batch, sigma)
    n = len(batch)
    loss = float(np.mean(np.sum(r * r, axis=1)))
    grad = score_param_vjp_trace(p, tr, r, parts).scale(2.0 * sigma ** 2 / n)
    return loss, grad


def dsm_loss(p: NetParams, batch: NoisyPairBatch, sigma: float) -> float:
    _check_batch(batch)
    psi = score_net_forward(p, batch.noisy)
    r = batch.clean - batch.noisy - sigma ** 2 * psi
    return float(np.mean(np.sum(r * r, axis=1)))


def dsm_grad(p: NetParams, batch: NoisyPairBatch, sigma: float) -> tuple[float, NetParams]:
    _check_batch(batch)
    psi = score_net_forward(p, batch.noisy)
    r = batch.clean - batch.noisy - sigma ** 2 * psi
    n = len(batch)
    loss = float(np.mean(np.sum(r * r, axis=1)))
    grad = score_net_param_vjp(p, batch.noisy, (-2.0 * sigma ** 2 / n) * r)
    return loss, grad


MAX_EXACT_SM_DIM = 4


def exact_sm_loss(model, data, lam: float = 0.0, step: float = 1e-4) -> float:
    """Finite-sample score matching with the optional curvature penalty.

    ``(1/n) sum_k sum_i [(dE/dx_i)^2 - 2 d^2E/dx_i^2] + lam * sum_k sum_i d^2E/dx_i^2``

    The diagonal second derivatives are central differences of the analytic
    score, so this is a low-dimensional diagnostic only.  ``model`` is an
    energy net or any callable mapping ``(n, d)`` inputs to their score.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n, d = data.shape
    if d > MAX_EXACT_SM_DIM:
        raise UnsupportedDimensionError(f"exact score matching supports d <= {MAX_EXACT_SM_DIM}, got {d}")
    score_fn = model if callable(model) else (lambda x: score(model, x))
    psi = score_fn(data)
    curv = np.zeros_like(data)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        # d^2E/dx_i^2 = -d psi_i / dx_i
        curv[:, i] = -(score_fn(data + e)[:, i] - score_fn(data - e)[:, i]) / (2.0 * step)
    base = np.sum(psi ** 2 - 2.0 * curv) / n
    return float(base + lam * np.sum(curv))


def langevin_negatives(p: NetParams, x: np.ndarray, sigma: float, rng: Rng) -> np.ndarray:
    """One Langevin step ``x - sigma^2 grad E(x) + sqrt(2) sigma nu``."""
    nu = gaussian(rng, x.shape)
    return x + sigma ** 2 * score(p, x) + math.sqrt(2.0) * sigma * nu


def cd_direction(p: NetParams, x: np.ndarray, sigma: float, rng: Rng) -> tuple[float, NetParams]:
    """Descent direction of the CD-Langevin update, averaged over the batch.

    Returns ``mean(E(x) - E(x-))`` as a progress number (it is not the value
    of any objective) and ``mean(grad E(x) - grad E(x-))``, so that a plain
    gradient step reproduces ``theta + lr [grad E(x-) - grad E(x)]``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    neg = langevin_negatives(p, x, sigma, rng)
    n = x.shape[0]
    gap = float(np.mean(energy(p, x) - energy(p, neg)))
    direction = (energy_param_grad(p, x) - energy_param_grad(p, neg)).scale(1.0 / n)
    return gap, direction


def cd_langevin_step(p: NetParams, x_batch, sigma: float, lr: float, rng: Rng) -> NetParams:
    """One contrastive-divergence update with Langevin negatives.

    Diagnostic baseline only: the update is not the gradient of any
    objective and is known to collapse modes on multimodal 2-D data.
    """
    _, direction = cd_direction(p, x_batch, sigma, rng)
    return p - direction.scale(lr)
