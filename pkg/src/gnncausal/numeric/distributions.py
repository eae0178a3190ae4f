"""Densities and divergences for the Gaussian latent and Bernoulli output."""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor, as_tensor

LOG_VAR_MIN = -20.0
LOG_VAR_MAX = 20.0
LOG_2PI = math.log(2.0 * math.pi)


def clamp_log_var(log_var) -> tuple[Tensor, int]:
    """Clamp to [LOG_VAR_MIN, LOG_VAR_MAX]; returns the tensor and the clamp count."""
    log_var = as_tensor(log_var)
    hits = int(((log_var.data < LOG_VAR_MIN) | (log_var.data > LOG_VAR_MAX)).sum())
    return T.clip(log_var, LOG_VAR_MIN, LOG_VAR_MAX), hits


def gaussian_reparam(mu, log_var, rng: np.random.Generator | int | None = None,
                     eps: np.ndarray | None = None):
    """Draw ``z = mu + exp(log_var / 2) * eps`` and its log-density.

    Returns ``(z, log_q, clamp_hits)``. ``log_q`` sums over the trailing
    axis and is differentiable in ``mu`` and ``log_var``.
    """
    mu, log_var = as_tensor(mu), as_tensor(log_var)
    if mu.shape != log_var.shape:
        raise ShapeError(f"gaussian_reparam: mu {mu.shape} vs log_var {log_var.shape}")
    lv, hits = clamp_log_var(log_var)
    if eps is None:
        rng = np.random.default_rng(rng)
        eps = rng.standard_normal(mu.shape)
    std = T.exp(T.mul(lv, 0.5))
    z = T.add(mu, T.mul(std, eps))
    log_q = T.mul(T.sum(T.add(lv, LOG_2PI + eps * eps), axis=-1), -0.5)
    return z, log_q, hits


def gaussian_log_density(z, mu, log_var) -> np.ndarray:
    """log N(z; mu, diag(exp(log_var))) summed over the trailing axis (numpy only)."""
    z, mu, log_var = (np.asarray(a, dtype=float) for a in (z, mu, log_var))
    log_var = np.clip(log_var, LOG_VAR_MIN, LOG_VAR_MAX)
    return -0.5 * np.sum(LOG_2PI + log_var + (z - mu) ** 2 / np.exp(log_var), axis=-1)


def std_normal_log_density(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return -0.5 * np.sum(LOG_2PI + z * z, axis=-1)


def kl_diag_gaussian_std(mu, log_var, axis=None) -> Tensor:
    """KL(N(mu, diag(exp(log_var))) || N(0, I)), summed over ``axis`` (all by default)."""
    mu, log_var = as_tensor(mu), as_tensor(log_var)
    if mu.shape != log_var.shape:
        raise ShapeError(f"kl_diag_gaussian_std: mu {mu.shape} vs log_var {log_var.shape}")
    lv, _ = clamp_log_var(log_var)
    terms = T.sub(T.add(T.exp(lv), T.square(mu)), T.add(lv, 1.0))
    return T.mul(T.sum(terms, axis=axis), 0.5)


def bernoulli_log_lik(logits, targets, weights=None, axis=None) -> Tensor:
    """sum of t*log(sigmoid(l)) + (1-t)*log(1-sigmoid(l)), computed as t*l - softplus(l).

    ``weights`` (broadcastable to ``logits``) masks terms out; masked terms
    carry an exactly-zero gradient.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"bernoulli_log_lik: logits {logits.shape} vs targets {t.shape}")
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError("bernoulli_log_lik: targets must be 0 or 1")
    l = logits.data
    terms = t * l - np.logaddexp(0.0, l)
    w = None
    if weights is not None:
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64), l.shape)
        terms = terms * w

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        grad = g * (t - T._stable_sigmoid(l))
        if w is not None:
            grad = grad * w
        return (grad,)

    return T._make(np.asarray(terms.sum(axis=axis)), (logits,), backward, "bernoulli_log_lik")
