"""Personalized PageRank and sparse-correlation propagation matrices.

Columns of the PPR matrix are topological profiles: column ``x`` holds the
landing probabilities of a walk restarting at ``x``.  The sparse correlation
of two profiles is their Pearson correlation over the rows where at least one
of them reaches the pruning threshold.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import LengthMismatch, ShapeMismatch, SingularSystem

#: Value returned for correlations with too few retained rows or no variance.
DEGENERATE_CORRELATION = 0.0

# restricted sum of squares below this fraction of its uncentered value
# counts as zero variance; shared by the scalar and matrix code paths
_ZERO_VAR_RTOL = 1e-12

_SIGMA_BLOCK = 256


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"teleport probability must be in (0, 1], got {alpha}")
    return alpha


def check_epsilon(epsilon) -> float:
    epsilon = float(epsilon)
    if not (math.isfinite(epsilon) and epsilon >= 0):
        raise ValueError(f"pruning threshold must be finite and >= 0, got {epsilon}")
    return epsilon


@dataclass(frozen=True)
class PprMatrix:
    values: np.ndarray
    alpha: float

    @property
    def n(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class SigmaMatrix:
    values: np.ndarray
    epsilon: float
    alpha: float
    literal: bool = False

    @property
    def n(self):
        return self.values.shape[0]


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=np.float64)


def ppr_direct(a_hat, alpha) -> PprMatrix:
    """Solve ``(I - (1 - alpha) A_hat) Pi = alpha I`` densely.

    The system matrix is symmetric positive definite whenever ``A_hat`` is a
    symmetric normalized adjacency, so a Cholesky factorization is tried
    first, with LU as the fallback.
    """
    alpha = check_alpha(alpha)
    a = _dense(a_hat)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ShapeMismatch(f"expected square matrix, got {a.shape}")
    system = np.eye(n) - (1.0 - alpha) * a
    rhs = alpha * np.eye(n)
    try:
        pi = sla.cho_solve(sla.cho_factor(system, lower=True), rhs)
    except (sla.LinAlgError, ValueError):
        try:
            pi = sla.lu_solve(sla.lu_factor(system, check_finite=True), rhs)
        except (sla.LinAlgError, ValueError) as e:
            raise SingularSystem(str(e)) from e
    if not np.all(np.isfinite(pi)):
        raise SingularSystem("non-finite entries in PPR solution")
    residual = np.abs(system @ pi - rhs).max() if n else 0.0
    if residual > 1e-8:
        raise SingularSystem(f"PPR residual {residual:.3e} exceeds 1e-8")
    pi.setflags(write=False)
    return PprMatrix(pi, alpha)


def ppr_power_step(a_hat, z, h, alpha):
    """One step ``(1 - alpha) A_hat z + alpha h`` (no nonlinearity)."""
    alpha = check_alpha(alpha)
    z = np.asarray(z, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if z.shape != h.shape or z.ndim != 2 or a_hat.shape != (z.shape[0], z.shape[0]):
        raise ShapeMismatch(f"A_hat {a_hat.shape}, Z {z.shape}, H {h.shape}")
    return (1.0 - alpha) * (a_hat @ z) + alpha * h


def ppr_power_iteration(a_hat, h, alpha, k):
    z = np.asarray(h, dtype=np.float64)
    for _ in range(k):
        z = ppr_power_step(a_hat, z, h, alpha)
    return z


def retained_rows(u, v, epsilon):
    """Boolean mask of rows kept when correlating ``u`` with ``v``."""
    return (np.asarray(u) >= epsilon) | (np.asarray(v) >= epsilon)


def sparse_correlation(u, v, epsilon) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape:
        raise LengthMismatch(f"vectors of shape {u.shape} and {v.shape}")
    epsilon = check_epsilon(epsilon)
    if u.size == 0:
        raise LengthMismatch("empty vectors")
    keep = retained_rows(u, v, epsilon)
    if keep.sum() < 2:
        return DEGENERATE_CORRELATION
    a = u[keep] - u.mean()
    b = v[keep] - v.mean()
    da = a - a.mean()
    db = b - b.mean()
    ssa = da @ da
    ssb = db @ db
    if ssa <= _ZERO_VAR_RTOL * (a @ a) or ssb <= _ZERO_VAR_RTOL * (b @ b):
        return DEGENERATE_CORRELATION
    r = (da @ db) / math.sqrt(ssa * ssb)
    return min(1.0, max(-1.0, r))


def _sigma_block(shifted, totals, masked, start, stop):
    """Correlations of columns ``start..n-1`` against columns ``start..stop-1``."""
    n = shifted.shape[0]
    tot, totsq = totals
    cols = slice(start, stop)
    rows = slice(start, n)
    ay = shifted[:, cols]
    ax = shifted[:, rows]
    sxy = ax.T @ ay
    sx = np.broadcast_to(tot[rows][:, None], sxy.shape).copy()
    sy = np.broadcast_to(tot[cols][None, :], sxy.shape).copy()
    sxx = np.broadcast_to(totsq[rows][:, None], sxy.shape).copy()
    syy = np.broadcast_to(totsq[cols][None, :], sxy.shape).copy()
    count = np.full(sxy.shape, float(n))
    if masked is not None:
        # subtract the contribution of rows where both profiles fall below epsilon
        below, ac, a2c = masked
        cx, cy = below[:, rows], below[:, cols]
        acx, acy = ac[:, rows], ac[:, cols]
        count -= cx.T @ cy
        sx -= acx.T @ cy
        sy -= cx.T @ acy
        sxx -= a2c[:, rows].T @ cy
        syy -= cx.T @ a2c[:, cols]
        sxy -= acx.T @ acy
    with np.errstate(divide="ignore", invalid="ignore"):
        ssx = sxx - sx * sx / count
        ssy = syy - sy * sy / count
        cov = sxy - sx * sy / count
        rho = cov / np.sqrt(ssx * ssy)
    degenerate = (
        (count < 2)
        | (ssx <= _ZERO_VAR_RTOL * sxx)
        | (ssy <= _ZERO_VAR_RTOL * syy)
        | ~np.isfinite(rho)
    )
    rho[degenerate] = DEGENERATE_CORRELATION
    np.clip(rho, -1.0, 1.0, out=rho)
    return rho


def correlation_lower(values, epsilon, workers=1, block=_SIGMA_BLOCK):
    """Lower triangle (diagonal included) of all-pairs sparse correlations.

    Entry ``[x, y]`` for ``x >= y`` equals ``sparse_correlation(P[:, x],
    P[:, y], epsilon)``; the strict upper triangle is zero.  Columns are
    processed in fixed-width blocks, so the result does not depend on
    ``workers``.
    """
    p = np.asarray(values, dtype=np.float64)
    n = p.shape[0]
    if p.ndim != 2 or p.shape[1] != n:
        raise ShapeMismatch(f"expected square matrix, got {p.shape}")
    epsilon = check_epsilon(epsilon)
    # Pearson is shift invariant; centering each column on its global mean
    # keeps the one-pass sums well conditioned
    shifted = p - p.mean(axis=0) if n else p
    below = (p < epsilon).astype(np.float64)
    masked = None
    if below.any():
        ac = shifted * below
        masked = (below, ac, shifted * ac)
    totals = (shifted.sum(axis=0), (shifted * shifted).sum(axis=0))
    out = np.zeros((n, n))
    starts = list(range(0, n, block))

    def run(start):
        stop = min(start + block, n)
        return start, stop, _sigma_block(shifted, totals, masked, start, stop)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]
    for start, stop, rho in results:
        out[start:, start:stop] = rho
    return np.tril(out)


def build_sigma(pi: PprMatrix, epsilon, literal=False, drop_below=None, workers=1) -> SigmaMatrix:
    """Sparse-correlation matrix of the PPR profiles.

    By default the strict lower triangle is mirrored and the diagonal set to
    1.  ``literal=True`` instead keeps the diagonal in the triangle and adds
    the transpose, which doubles the diagonal.  ``drop_below`` zeroes PPR
    entries smaller than the given value before correlating.
    """
    epsilon = check_epsilon(epsilon)
    values = np.array(pi.values, dtype=np.float64)
    if drop_below is not None:
        values[values < drop_below] = 0.0
    lower = correlation_lower(values, epsilon, workers=workers)
    if literal:
        sigma = lower + lower.T
    else:
        strict = np.tril(lower, -1)
        sigma = strict + strict.T
        np.fill_diagonal(sigma, 1.0)
    sigma.setflags(write=False)
    return SigmaMatrix(sigma, epsilon, pi.alpha, literal)
