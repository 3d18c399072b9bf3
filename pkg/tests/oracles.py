"""Independent reference implementations used to check the library.

Nothing here imports library numerics: matrices are dense and every formula
is written out directly.
"""

import math

import numpy as np


def neumann_ppr(a_hat, alpha, terms=10000):
    """Truncated series sum_k alpha (1 - alpha)^k A^k."""
    a = np.asarray(a_hat.todense() if hasattr(a_hat, "todense") else a_hat)
    term = alpha * np.eye(a.shape[0])
    total = term.copy()
    for _ in range(terms):
        term = (1 - alpha) * (a @ term)
        total += term
    return total


def naive_pearson(u, v):
    n = len(u)
    mu, mv = sum(u) / n, sum(v) / n
    cov = sum((a - mu) * (b - mv) for a, b in zip(u, v))
    su = math.sqrt(sum((a - mu) ** 2 for a in u))
    sv = math.sqrt(sum((b - mv) ** 2 for b in v))
    return cov / (su * sv)


def naive_sigma(pi):
    """All-pairs Pearson over full columns, diagonal forced to 1."""
    n = pi.shape[0]
    out = np.eye(n)
    for i in range(n):
        for j in range(i):
            out[i, j] = out[j, i] = naive_pearson(list(pi[:, i]), list(pi[:, j]))
    return out


def oracle_softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def oracle_mlp(x, p):
    return np.maximum(x @ p.W0 + p.b0, 0) @ p.W1 + p.b1


def oracle_gcn(a, x, p):
    return oracle_softmax(a @ np.maximum(a @ x @ p.W0 + p.b0, 0) @ p.W1 + p.b1)


def oracle_ppnp(a, x, p, alpha):
    n = a.shape[0]
    pi = alpha * np.linalg.inv(np.eye(n) - (1 - alpha) * a)
    return oracle_softmax(pi @ oracle_mlp(x, p))


def oracle_appnp(a, x, p, alpha, k):
    h = oracle_mlp(x, p)
    z = h
    for _ in range(k - 1):
        z = (1 - alpha) * a @ z + alpha * h
    return oracle_softmax((1 - alpha) * a @ z + alpha * h)


def oracle_scnp(sigma, x, p):
    return oracle_softmax(sigma @ oracle_mlp(x, p))


def numeric_grads(fn, p, h=1e-5):
    """Central differences of scalar ``fn`` w.r.t. every parameter entry."""
    out = {}
    for name, w in p.as_dict().items():
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            plus, minus = p.copy(), p.copy()
            getattr(plus, name)[idx] += h
            getattr(minus, name)[idx] -= h
            g[idx] = (fn(plus) - fn(minus)) / (2 * h)
        out[name] = g
    return out


def max_rel_error(a, b, floor=1e-6):
    return max(float(np.max(np.abs(a[k] - b[k]) / np.maximum(np.maximum(np.abs(a[k]), np.abs(b[k])), floor))) for k in a)
