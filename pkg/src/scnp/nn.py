"""Two-layer prediction network, dropout, softmax cross-entropy and Adam.

Everything is plain float64 numpy with hand-written reverse-mode gradients.
Dropout is the inverted variant: kept entries are scaled by ``1 / (1 - d)``
at train time so evaluation needs no rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp

from .errors import EmptyMask, ShapeMismatch, StaleCache

PARAM_NAMES = ("W0", "b0", "W1", "b1")


@dataclass(frozen=True)
class MlpParams:
    W0: np.ndarray
    b0: np.ndarray
    W1: np.ndarray
    b1: np.ndarray

    @property
    def hidden_size(self):
        return self.W0.shape[1]

    def as_dict(self):
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self):
        return MlpParams(**{k: v.copy() for k, v in self.as_dict().items()})

    def check(self, f=None, c=None):
        h = self.hidden_size
        if self.b0.shape != (h,) or self.W1.shape[0] != h or self.b1.shape != (self.W1.shape[1],):
            raise ShapeMismatch("inconsistent parameter shapes")
        if f is not None and self.W0.shape[0] != f:
            raise ShapeMismatch(f"W0 expects {self.W0.shape[0]} features, got {f}")
        if c is not None and self.W1.shape[1] != c:
            raise ShapeMismatch(f"W1 produces {self.W1.shape[1]} classes, expected {c}")


@dataclass(frozen=True)
class TrainConfig:
    lambda_l2: float = 0.005
    dropout_rate: float = 0.5
    learning_rate: float = 0.01
    max_epochs: int = 80
    seed: int = 0
    adjacency_dropout: bool = True
    hidden_size: int = 64

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        if self.lambda_l2 < 0 or self.learning_rate <= 0:
            raise ValueError("lambda_l2 must be >= 0 and learning_rate > 0")
        if self.max_epochs < 0 or self.hidden_size < 1:
            raise ValueError("max_epochs must be >= 0 and hidden_size >= 1")

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, p: MlpParams, **kw):
        d = p.as_dict()
        return cls({k: np.zeros_like(a) for k, a in d.items()}, {k: np.zeros_like(a) for k, a in d.items()}, **kw)


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(num_features, hidden, num_classes, rng) -> MlpParams:
    return MlpParams(
        glorot_uniform(rng, num_features, hidden),
        np.zeros(hidden),
        glorot_uniform(rng, hidden, num_classes),
        np.zeros(num_classes),
    )


def dropout(x, rate, rng):
    """Inverted dropout on a dense array or on the stored entries of a sparse one.

    Returns the dropped array and the scale applied to each entry (0 or
    ``1/(1-rate)``), which the backward pass reuses.  ``rate == 0`` draws
    nothing from ``rng``.
    """
    if rate == 0.0:
        return x, None
    keep = 1.0 - rate
    if sp.issparse(x):
        x = x.tocsr()
        scale = (rng.random(x.nnz) < keep) / keep
        out = x.copy()
        out.data = x.data * scale
        return out, scale
    x = np.asarray(x)
    scale = (rng.random(x.shape) < keep) / keep
    return x * scale, scale


def dropout_for(training, rate, rng):
    """Return a dropout callable bound to the mode; identity when evaluating."""
    if not training or rate == 0.0:
        return lambda a: (a, None)
    return lambda a: dropout(a, rate, rng)


@dataclass
class MlpCache:
    x: object
    pre: np.ndarray
    hidden_scale: np.ndarray | None
    hidden: np.ndarray
    w1: np.ndarray
    out_shape: tuple = field(default=())


def mlp_forward(x, p: MlpParams, cfg: TrainConfig, training=False, rng=None):
    """``H = drop(relu(drop(X) W0 + b0)) W1 + b1``; returns ``(H, cache)``."""
    if x.ndim != 2:
        raise ShapeMismatch("features must be a 2-d matrix")
    p.check(f=x.shape[1])
    drop = dropout_for(training, cfg.dropout_rate, rng)
    xd, _ = drop(x)
    pre = np.asarray(xd @ p.W0) + p.b0
    r = np.maximum(pre, 0.0)
    rd, hscale = drop(r)
    out = rd @ p.W1 + p.b1
    return out, MlpCache(xd, pre, hscale, rd, p.W1, out.shape)


def mlp_backward(cache: MlpCache, upstream):
    """Gradients of a scalar w.r.t. ``W0, b0, W1, b1`` given ``dL/dH``.

    The L2 penalty is not included; add :func:`l2_grad` separately.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.out_shape:
        raise StaleCache(f"upstream {upstream.shape} does not match forward output {cache.out_shape}")
    g_w1 = cache.hidden.T @ upstream
    g_b1 = upstream.sum(axis=0)
    g_hidden = upstream @ cache.w1.T
    if cache.hidden_scale is not None:
        g_hidden = g_hidden * cache.hidden_scale
    g_pre = g_hidden * (cache.pre > 0)
    g_w0 = np.asarray(cache.x.T @ g_pre)
    g_b0 = g_pre.sum(axis=0)
    return {"W0": g_w0, "b0": g_b0, "W1": g_w1, "b1": g_b1}


def softmax_rows(m):
    m = np.asarray(m, dtype=np.float64)
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _mask_index(mask, n):
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise EmptyMask("loss/metric over an empty node set")
    if idx.min() < 0 or idx.max() >= n:
        raise IndexError("mask index out of range")
    return idx


def masked_cross_entropy(probs, labels, mask, p: MlpParams | None = None, lambda_l2=0.0):
    """Mean negative log-likelihood over ``mask`` plus ``lambda * ||W0||_F^2``."""
    idx = _mask_index(mask, probs.shape[0])
    picked = np.maximum(probs[idx, np.asarray(labels)[idx]], 1e-12)
    loss = -np.mean(np.log(picked))
    if p is not None and lambda_l2:
        loss += lambda_l2 * float(np.sum(p.W0 * p.W0))
    return float(loss)


def cross_entropy_grad(probs, labels, mask):
    """``dL/dlogits`` of the data term when ``probs = softmax(logits)``."""
    idx = _mask_index(mask, probs.shape[0])
    g = np.zeros_like(probs)
    g[idx] = probs[idx]
    g[idx, np.asarray(labels)[idx]] -= 1.0
    return g / idx.size


def l2_grad(w0, lambda_l2):
    return 2.0 * lambda_l2 * w0


def adam_step(p: MlpParams, grads: dict, s: AdamState, lr):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    t = s.step + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, w in p.as_dict().items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != w.shape or s.m[k].shape != w.shape:
            raise ShapeMismatch(f"gradient for {k} has shape {g.shape}, parameter {w.shape}")
        m = s.beta1 * s.m[k] + (1.0 - s.beta1) * g
        v = s.beta2 * s.v[k] + (1.0 - s.beta2) * g * g
        m_hat = m / (1.0 - s.beta1**t)
        v_hat = v / (1.0 - s.beta2**t)
        new_p[k] = w - lr * m_hat / (np.sqrt(v_hat) + s.eps)
        new_m[k], new_v[k] = m, v
    return MlpParams(**new_p), replace(s, m=new_m, v=new_v, step=t)
