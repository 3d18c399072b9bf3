"""Classification metrics and multi-run aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, EmptyMask


def _select(probs, labels, mask):
    probs = np.asarray(probs)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise EmptyMask("metric over an empty node set")
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    pred = np.argmax(probs[idx], axis=1)
    return pred, np.asarray(labels)[idx]


def accuracy(probs, labels, mask) -> float:
    pred, true = _select(probs, labels, mask)
    return float(np.mean(pred == true))


def macro_f1(probs, labels, mask) -> float:
    """Unweighted mean of per-class F1 over all ``probs.shape[1]`` classes.

    Classes absent from both predictions and labels score 0, as does any
    class whose precision or recall has a zero denominator.
    """
    pred, true = _select(probs, labels, mask)
    c = np.asarray(probs).shape[1]
    scores = []
    for k in range(c):
        tp = np.sum((pred == k) & (true == k))
        npred = np.sum(pred == k)
        ntrue = np.sum(true == k)
        precision = tp / npred if npred else 0.0
        recall = tp / ntrue if ntrue else 0.0
        denom = precision + recall
        scores.append(2 * precision * recall / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass(frozen=True)
class RunStats:
    metric: str
    values: tuple
    mean: float
    std: float

    @property
    def runs(self):
        return len(self.values)


def aggregate(values, metric="") -> RunStats:
    """Mean and sample (n - 1) standard deviation; std is 0 for one value."""
    values = tuple(float(v) for v in values)
    if not values:
        raise EmptyInput("cannot aggregate an empty list")
    mean = math.fsum(values) / len(values)
    if len(values) > 1:
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1))
    else:
        std = 0.0
    return RunStats(metric, values, mean, std)
