"""Minimal dense-network toolkit: linear layers, AdamW, schedules.

Parameters live in a flat dict of float32 arrays keyed "layer.W" /
"layer.b". Forward passes cache activations for the matching hand-written
backward passes; reduction order is fixed, so training is bit-reproducible
for a given seed.
"""

from __future__ import annotations

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def linear_params(rng, n_in, n_out, dtype=np.float32):
    """Uniform(-s, s) weight init with s = 1/sqrt(n_in); zero bias."""
    s = 1.0 / np.sqrt(n_in)
    W = rng.uniform(-s, s, size=(n_out, n_in)).astype(dtype)
    b = np.zeros(n_out, dtype=dtype)
    return W, b


def linear(params, name, x):
    return x @ params[f"{name}.W"].T + params[f"{name}.b"]


def linear_bwd(params, grads, name, x, dy):
    """Accumulate parameter grads; return gradient w.r.t. x."""
    grads[f"{name}.W"] += dy.T @ x
    grads[f"{name}.b"] += dy.sum(axis=0)
    return dy @ params[f"{name}.W"]


def relu(x):
    return np.maximum(x, 0.0)


def relu_bwd(y, dy):
    """Backward through relu given its output y."""
    return np.where(y > 0.0, dy, 0.0)


def time_embedding(t, dim=64, dtype=np.float32):
    """Sinusoidal embedding of integer steps; t may be scalar or (B,)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)
    return emb


def zero_grads(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def cosine_lr(base_lr, step, total_steps):
    """Cosine annealing from base_lr to 0 over total_steps."""
    frac = min(max(step, 0), total_steps) / max(total_steps, 1)
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * frac))


class AdamW:
    """Decoupled weight decay Adam; moments match parameter dtype."""

    def __init__(self, params, lr=1e-3, weight_decay=1e-4,
                 beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for k in sorted(params):
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            p = params[k]
            p -= (lr * (mhat / (np.sqrt(vhat) + self.eps)
                        + self.weight_decay * p)).astype(p.dtype)
