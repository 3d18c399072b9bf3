"""The four node classifiers and the full-batch training loop.

* GCN:   ``softmax(A_hat relu(A_hat X W0 + b0) W1 + b1)``
* PPNP:  ``softmax(Pi H)`` with ``H = f(X)`` the two-layer MLP
* APPNP: ``K`` power steps ``Z <- (1 - alpha) A_hat Z + alpha H`` from ``Z = H``,
  softmax after the last one only
* ScNP:  ``softmax(Sigma H)``

With ``cfg.adjacency_dropout`` the propagation matrix itself is dropped out
(fresh mask per use) at train time.  Propagation matrices never receive
gradients.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import nn
from .errors import MissingArtifact, ShapeMismatch, StaleCache
from .evaluation import accuracy
from .nn import MlpParams, TrainConfig


class ModelKind(str, enum.Enum):
    GCN = "gcn"
    PPNP = "ppnp"
    APPNP = "appnp"
    SCNP = "scnp"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).lower())
        except ValueError:
            raise ValueError(f"unknown model {text!r}; choose from {[k.value for k in cls]}") from None

    @property
    def uses_epsilon(self):
        return self is ModelKind.SCNP


@dataclass(frozen=True)
class Model:
    """A model kind together with the fixed propagation inputs it needs."""

    kind: ModelKind
    a_hat: sp.spmatrix | None = None
    ppr: object = None
    sigma: object = None
    alpha: float = 0.1
    k: int = 10

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        need = {
            ModelKind.GCN: ("a_hat",),
            ModelKind.APPNP: ("a_hat",),
            ModelKind.PPNP: ("ppr",),
            ModelKind.SCNP: ("sigma",),
        }[self.kind]
        for name in need:
            if getattr(self, name) is None:
                raise MissingArtifact(f"{self.kind.value} needs a precomputed {name}")
        if self.kind is ModelKind.APPNP and self.k < 1:
            raise ValueError("APPNP needs K >= 1")

    @property
    def n(self):
        m = self.a_hat if self.a_hat is not None else self.ppr if self.ppr is not None else self.sigma
        return _matrix(m).shape[0]


def _matrix(m):
    return getattr(m, "values", m)


@dataclass
class Cache:
    kind: ModelKind
    mlp: nn.MlpCache | None = None
    props: list = field(default_factory=list)
    alpha: float = 1.0
    out_shape: tuple = ()
    # GCN only
    x: object = None
    pre: np.ndarray | None = None
    hidden_scale: np.ndarray | None = None
    hidden: np.ndarray | None = None
    w1: np.ndarray | None = None


def _adj_dropout(training, cfg, rng):
    return nn.dropout_for(training and cfg.adjacency_dropout, cfg.dropout_rate, rng)


def _check_rows(m, x):
    if m.shape[0] != m.shape[1] or m.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"propagation matrix {m.shape} vs {x.shape[0]} nodes")


def forward_logits(model: Model, x, params: MlpParams, cfg: TrainConfig | None = None, training=False, rng=None):
    """Pre-softmax outputs and the cache needed by :func:`backward`."""
    cfg = cfg or TrainConfig()
    if training and rng is None:
        raise ValueError("training-mode forward needs an rng")
    kind = model.kind
    adrop = _adj_dropout(training, cfg, rng)

    if kind is ModelKind.GCN:
        a = model.a_hat
        _check_rows(a, x)
        params.check(f=x.shape[1])
        drop = nn.dropout_for(training, cfg.dropout_rate, rng)
        xd, _ = drop(x)
        a1, _ = adrop(a)
        pre = np.asarray(a1 @ np.asarray(xd @ params.W0)) + params.b0
        rd, hscale = drop(np.maximum(pre, 0.0))
        a2, _ = adrop(a)
        logits = np.asarray(a2 @ (rd @ params.W1)) + params.b1
        return logits, Cache(kind, props=[a1, a2], out_shape=logits.shape, x=xd, pre=pre,
                             hidden_scale=hscale, hidden=rd, w1=params.W1)

    h, mcache = nn.mlp_forward(x, params, cfg, training, rng)
    if kind is ModelKind.APPNP:
        a = model.a_hat
        _check_rows(a, x)
        alpha = model.alpha
        z = h
        props = []
        for _ in range(model.k):
            ak, _ = adrop(a)
            props.append(ak)
            z = (1.0 - alpha) * np.asarray(ak @ z) + alpha * h
        return z, Cache(kind, mcache, props, alpha, z.shape)

    p = _matrix(model.ppr if kind is ModelKind.PPNP else model.sigma)
    _check_rows(p, x)
    pd, _ = adrop(p)
    logits = pd @ h
    return logits, Cache(kind, mcache, [pd], 1.0, logits.shape)


def forward(model, x, params, cfg=None, training=False, rng=None):
    logits, cache = forward_logits(model, x, params, cfg, training, rng)
    return nn.softmax_rows(logits), cache


def backward(cache: Cache, upstream):
    """Parameter gradients given ``dL/dlogits`` (L2 penalty excluded)."""
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.out_shape:
        raise StaleCache(f"upstream {g.shape} does not match forward output {cache.out_shape}")
    kind = cache.kind
    if kind is ModelKind.GCN:
        a1, a2 = cache.props
        g_b1 = g.sum(axis=0)
        g_t1 = np.asarray(a2.T @ g)
        g_w1 = cache.hidden.T @ g_t1
        g_hidden = g_t1 @ cache.w1.T
        if cache.hidden_scale is not None:
            g_hidden = g_hidden * cache.hidden_scale
        g_pre = g_hidden * (cache.pre > 0)
        g_b0 = g_pre.sum(axis=0)
        g_w0 = np.asarray(cache.x.T @ np.asarray(a1.T @ g_pre))
        return {"W0": g_w0, "b0": g_b0, "W1": g_w1, "b1": g_b1}

    if kind is ModelKind.APPNP:
        alpha = cache.alpha
        g_h = np.zeros_like(g)
        g_z = g
        for ak in reversed(cache.props):
            g_h += alpha * g_z
            g_z = (1.0 - alpha) * np.asarray(ak.T @ g_z)
        g_h += g_z
    else:
        g_h = cache.props[0].T @ g
    return nn.mlp_backward(cache.mlp, g_h)


def gcn_forward(a_hat, x, params, cfg=None, training=False, rng=None):
    return forward(Model(ModelKind.GCN, a_hat=a_hat), x, params, cfg, training, rng)[0]


def ppnp_forward(pi, x, params, cfg=None, training=False, rng=None):
    return forward(Model(ModelKind.PPNP, ppr=pi), x, params, cfg, training, rng)[0]


def appnp_forward(a_hat, x, params, alpha, k, cfg=None, training=False, rng=None):
    return forward(Model(ModelKind.APPNP, a_hat=a_hat, alpha=alpha, k=k), x, params, cfg, training, rng)[0]


def scnp_forward(sigma, x, params, cfg=None, training=False, rng=None):
    return forward(Model(ModelKind.SCNP, sigma=sigma), x, params, cfg, training, rng)[0]


def predict(model, x, params):
    return forward(model, x, params, training=False)[0]


def loss_and_grads(model, x, labels, mask, params, cfg, training=False, rng=None):
    """Regularized training loss and its exact gradient for one forward pass."""
    probs, cache = forward(model, x, params, cfg, training, rng)
    loss = nn.masked_cross_entropy(probs, labels, mask, params, cfg.lambda_l2)
    grads = backward(cache, nn.cross_entropy_grad(probs, labels, mask))
    grads["W0"] = grads["W0"] + nn.l2_grad(params.W0, cfg.lambda_l2)
    return loss, grads, probs


@dataclass
class TrainResult:
    params: MlpParams
    history: list
    seed: int
    wall_time: float
    snapshots: dict = field(default_factory=dict)
    # elapsed seconds at each snapshot epoch
    snapshot_times: dict = field(default_factory=dict)


def init_rngs(seed):
    init_seq, drop_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(drop_seq)


def train(model: Model, d, split, cfg: TrainConfig, snapshot_epochs=()) -> TrainResult:
    """Full-graph training: one forward, backward and Adam step per epoch.

    Per-epoch accuracies are measured in evaluation mode after the update.
    ``snapshot_epochs`` lists epochs whose parameters are kept in
    ``result.snapshots`` (epoch 0 means the initialization).
    """
    start = time.perf_counter()
    if model.n != d.n:
        raise ShapeMismatch(f"propagation matrix covers {model.n} nodes, dataset has {d.n}")
    init_rng, drop_rng = init_rngs(cfg.seed)
    x = d.features
    params = nn.init_params(d.num_features, cfg.hidden_size, d.num_classes, init_rng)
    state = nn.AdamState.zeros_like(params)
    wanted = set(snapshot_epochs)
    snapshots = {0: params} if 0 in wanted else {}
    times = {0: time.perf_counter() - start} if 0 in wanted else {}
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        loss, grads, _ = loss_and_grads(model, x, d.labels, split.train_idx, params, cfg, True, drop_rng)
        params, state = nn.adam_step(params, grads, state, cfg.learning_rate)
        probs = predict(model, x, params)
        history.append(
            {
                "epoch": epoch,
                "train_loss": loss,
                "train_acc": accuracy(probs, d.labels, split.train_idx),
                "val_acc": accuracy(probs, d.labels, split.val_idx) if len(split.val_idx) else None,
            }
        )
        if epoch in wanted:
            snapshots[epoch] = params
            times[epoch] = time.perf_counter() - start
    return TrainResult(params, history, cfg.seed, time.perf_counter() - start, snapshots, times)


def write_history(path, result: TrainResult, summary: dict | None = None):
    """One JSON record per epoch, then a summary record.

    Wall time is left out so that reruns of the same configuration produce
    byte-identical files.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for rec in result.history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        final = result.history[-1] if result.history else {}
        rec = {"summary": True, "seed": result.seed, "epochs": len(result.history),
               "final_train_acc": final.get("train_acc"), "final_val_acc": final.get("val_acc")}
        rec.update(summary or {})
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_history(path):
    epochs, summary = [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("summary"):
                summary = rec
            else:
                epochs.append(rec)
    return epochs, summary
