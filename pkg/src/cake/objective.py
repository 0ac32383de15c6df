"""Multi-domain weighted softmax cross-entropy and its ingredient weights.

The batch loss is

    loss = (1/N) * sum_i  w_class[j_i, y_i] * w_dataset[j_i] * CE(softmax(l_i), y_i)

where j_i is the sample's domain and each sample is routed to exactly one
classifier head; contributions to other heads are structurally zero (realized
as gradient masking in the model's backward pass, never as stored weights).

w_class pushes every domain toward a uniform class distribution:
w_class[j,c] = N_total_j / (N_class_jc * nbclass). w_dataset compensates for
dataset-size imbalance: w_dataset[j] = 1 / log(N_total_j).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import log_softmax


@dataclass(eq=False)
class LossWeights:
    """Per-domain per-class weights and per-domain dataset weights."""

    w_class: np.ndarray  # (n_domains, nbclass)
    w_dataset: np.ndarray  # (n_domains,)


def class_weights(counts: Sequence[int] | np.ndarray, nbclass: Optional[int] = None) -> np.ndarray:
    """Uniform-rebalancing class weights for one domain.

    Classes with zero count get weight 0 (with a warning) instead of inf;
    synthetic corpora and small real domains may legitimately miss classes.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if nbclass is None:
        nbclass = len(counts)
    n_total = counts.sum()
    if n_total <= 0:
        raise ValueError("class_weights: domain has no samples")
    w = np.zeros_like(counts)
    nonzero = counts > 0
    w[nonzero] = n_total / (counts[nonzero] * nbclass)
    if not np.all(nonzero):
        empty = np.flatnonzero(~nonzero).tolist()
        warnings.warn(
            f"class_weights: classes {empty} have zero count; assigned weight 0",
            stacklevel=2,
        )
    return w


def dataset_weights(n_totals: Sequence[float] | np.ndarray, base: Optional[float] = None) -> np.ndarray:
    """Per-domain weights 1/log(N_total); natural log unless a base is given."""
    n_totals = np.asarray(n_totals, dtype=np.float64)
    if np.any(n_totals <= 1):
        bad = np.flatnonzero(n_totals <= 1).tolist()
        raise ValueError(
            f"dataset_weights: domains {bad} have N_total <= 1 (log would be <= 0)"
        )
    logs = np.log(n_totals)
    if base is not None:
        logs = logs / math.log(base)
    return 1.0 / logs


def compute_loss_weights(
    per_domain_counts: np.ndarray, nbclass: Optional[int] = None, base: Optional[float] = None
) -> LossWeights:
    """Build the full LossWeights from a (n_domains, n_classes) count table."""
    per_domain_counts = np.asarray(per_domain_counts)
    if nbclass is None:
        nbclass = per_domain_counts.shape[1]
    w_class = np.stack([class_weights(c, nbclass) for c in per_domain_counts])
    w_dataset = dataset_weights(per_domain_counts.sum(axis=1), base)
    return LossWeights(w_class=w_class, w_dataset=w_dataset)


def multidomain_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    domain_ids: np.ndarray,
    weights: LossWeights,
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy over a mixed-domain batch.

    Returns the scalar loss and dLoss/dlogits per sample, which is
    (w_class * w_dataset / N) * (softmax(logits) - onehot(label)).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    domain_ids = np.asarray(domain_ids, dtype=np.int64)
    n, n_classes = logits.shape
    if n < 1:
        raise ValueError("multidomain_loss: batch must be nonempty")
    if labels.shape != (n,) or domain_ids.shape != (n,):
        raise ValueError(
            f"multidomain_loss: {n} logit rows need {n} labels and domain ids, "
            f"got {labels.shape} and {domain_ids.shape}"
        )
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError("multidomain_loss: label out of range")
    if np.any(domain_ids < 0) or np.any(domain_ids >= len(weights.w_dataset)):
        raise ValueError("multidomain_loss: domain without weights")

    logp = log_softmax(logits)
    rows = np.arange(n)
    w = weights.w_class[domain_ids, labels] * weights.w_dataset[domain_ids]
    loss = float(np.mean(-w * logp[rows, labels]))

    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits *= (w / n)[:, None]
    return loss, dlogits


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over one coordinate pair.

    The gradient 2*diff/size reduces to exactly (pred - target) for a pair.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise ValueError("mse_loss: non-finite input")
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def mse_loss_batch(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Batched MSE: mean over all entries; exact gradient 2*diff/size."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: shapes {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size
