"""Gradient oracle harness: analytic backprop against central finite
differences over a deterministic battery of model configurations.

The battery spans all four variants, input dims 8 and 32, batch sizes 1/4/16,
and dropout off/on (with masks held fixed so the loss stays a smooth function
of the parameters). Pass threshold: relative error <= 1e-4 per coordinate,
with relative error |a - b| / max(|a|, |b|, 1e-8).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Batch,
    ModelConfig,
    backprop,
    flatten_trainable,
    init_params,
    set_trainable,
    trainable_gradients,
)
from .numerics import SeededRng, derive_seed, finite_diff_grad, relative_error
from .objective import LossWeights

REL_TOL = 1e-4
FD_EPS = 1e-5

_TAG_CHECK = 501


@dataclass(eq=False)
class GradCheckResult:
    label: str
    n_params: int
    max_rel_err: float

    @property
    def ok(self) -> bool:
        return self.max_rel_err <= REL_TOL


def _battery() -> list[tuple]:
    """(variant, k, dim, batch, dropout) combinations; 20 in total.

    Dropout applies to the projection input, so the projection-free AV
    variant runs twice without it (different batch sizes) instead.
    """
    shapes = [("cake", 2), ("cake", 3), ("av", 0), ("avk", 1), ("cake_norm", 3)]
    batches = [1, 4, 16]
    combos = []
    i = 0
    for variant, k in shapes:
        for dim in (8, 32):
            for dropout in (False, True):
                batch = batches[i % 3]
                i += 1
                if variant == "av" and dropout:
                    batch = batches[i % 3]
                    dropout = False
                combos.append((variant, k, dim, batch, dropout))
    return combos


def check_config(
    variant: str, k: int, dim: int, batch_size: int, dropout: bool, seed: int, index: int = 0
) -> GradCheckResult:
    """One oracle comparison on random params, batch, weights, and masks."""
    rng = SeededRng(derive_seed(seed, _TAG_CHECK, index))
    n_domains = 2 + int(rng.uniform(1)[0] * 2)  # 2 or 3
    cfg = ModelConfig(
        variant=variant,
        k=k,
        dim=dim,
        n_domains=n_domains,
        n_classes=7,
        dropout_rate=0.5 if dropout else 0.0,
        seed=seed,
    )
    params = init_params(cfg)
    # random nonzero biases keep the normalized variant away from zero norm
    # even when dropout blanks a whole input row
    for t in params.tensors():
        t[...] = rng.normal(t.size, 0.5).reshape(t.shape)

    x = rng.normal(batch_size * dim).reshape(batch_size, dim)
    y = (rng.uniform(batch_size) * cfg.n_classes).astype(np.int64)
    dom = (rng.uniform(batch_size) * n_domains).astype(np.int64)
    av = rng.uniform(batch_size * 2, -0.9, 0.9).reshape(batch_size, 2)
    batch = Batch(x=x, y=y, dom=dom, av=av)
    weights = LossWeights(
        w_class=rng.uniform(n_domains * cfg.n_classes, 0.5, 2.0).reshape(n_domains, cfg.n_classes),
        w_dataset=rng.uniform(n_domains, 0.2, 1.0),
    )
    masks = None
    if dropout:
        masks = (rng.uniform(batch_size * dim) >= cfg.dropout_rate).astype(np.float64)
        masks = masks.reshape(batch_size, dim)

    loss, grads = backprop(params, cfg, batch, weights, dropout_masks=masks)
    analytic = np.concatenate([g.ravel() for g in trainable_gradients(grads, cfg)])

    def f(vec: np.ndarray) -> float:
        trial = set_trainable(params, cfg, vec)
        trial_loss, _ = backprop(trial, cfg, batch, weights, dropout_masks=masks)
        return trial_loss

    numeric = finite_diff_grad(f, flatten_trainable(params, cfg), eps=FD_EPS)
    err = float(np.max(relative_error(analytic, numeric))) if analytic.size else 0.0
    label = (
        f"{variant}-k{k} dim={dim} batch={batch_size} "
        f"dropout={'on' if dropout else 'off'} domains={n_domains}"
    )
    return GradCheckResult(label=label, n_params=analytic.size, max_rel_err=err)


def run_gradient_checks(seed: int = 0) -> list[GradCheckResult]:
    return [
        check_config(variant, k, dim, batch, dropout, seed, index=i)
        for i, (variant, k, dim, batch, dropout) in enumerate(_battery())
    ]
