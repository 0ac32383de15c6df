"""Training loop and evaluation drivers.

One Adam run over the multi-domain objective, minibatched with a global
shuffle across domains, retaining the parameters of the best size-weighted
macro F1 seen on the held-out split. Loss weights are computed once from the
training counts before the first step and never updated.

Also hosts the evaluation entry points built on the same prediction path:
per-domain scores, the head-by-domain transfer matrix, the representation
size sweep, and repeated runs for mean/std reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .data import DatasetBundle, bundle_arrays, class_counts
from .metrics import ConfusionMatrix, accuracy, confusion, macro_f1
from .model import (
    Batch,
    ModelConfig,
    ModelParams,
    backprop,
    init_params,
    predict_batch,
    trainable_gradients,
    trainable_tensors,
)
from .numerics import SeededRng, derive_seed
from .objective import LossWeights, compute_loss_weights, mse_loss_batch
from .optim import AdamState, adam_init, adam_step

_TAG_ORDER = 401
_TAG_DROPOUT = 402
_TAG_AVFIT = 403


@dataclass
class TrainConfig:
    model: ModelConfig
    seed: int
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 0  # 0 disables early stopping
    eval_every: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_log_base: Optional[float] = None  # None = natural log
    av_steps: int = 3000
    av_lr: float = 0.02

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"train config: batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ValueError(f"train config: max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 0:
            raise ValueError(f"train config: patience must be >= 0, got {self.patience}")
        if self.eval_every < 1:
            raise ValueError(f"train config: eval_every must be >= 1, got {self.eval_every}")


@dataclass(eq=False)
class EpochStats:
    epoch: int
    loss: float
    f1: np.ndarray  # (n_domains,) macro F1 per domain
    acc: np.ndarray  # (n_domains,)
    f1_weighted: float


@dataclass(eq=False)
class TrainResult:
    cfg: ModelConfig
    params: ModelParams  # best-scoring parameters
    history: list[EpochStats]
    best_epoch: int
    best_f1: float
    weights: LossWeights
    final_params: ModelParams  # parameters after the last step, for resuming
    adam: AdamState


@dataclass(eq=False)
class DomainScores:
    cm: list[ConfusionMatrix]  # per domain
    f1: np.ndarray
    acc: np.ndarray
    n: np.ndarray  # per-domain sample counts
    f1_weighted: float


def make_batches(n: int, batch_size: int, rng: SeededRng) -> list[np.ndarray]:
    """Random order over all samples, cut into contiguous index slices.

    Domains mix freely inside each batch; the last slice may be short.
    """
    if n < 1:
        raise ValueError("make_batches: need at least one sample")
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def _check_av(cfg: ModelConfig, arrays, what: str) -> None:
    if cfg.uses_av and cfg.av_source == "ground_truth" and arrays.av is None:
        raise ValueError(
            f"{what}: variant {cfg.variant!r} reads stored arousal-valence values, "
            f"but {arrays.n_missing_av} records lack them"
        )


def evaluate_domains(params: ModelParams, cfg: ModelConfig, bundle: DatasetBundle) -> DomainScores:
    """Macro F1 / accuracy per domain, each sample scored by its own head."""
    arrays = bundle_arrays(bundle)
    _check_av(cfg, arrays, "evaluate")
    cms, f1s, accs, ns = [], [], [], []
    for j in range(bundle.n_domains):
        idx = np.flatnonzero(arrays.dom == j)
        if idx.size == 0:
            raise ValueError(f"evaluate: domain {j} has no samples")
        av = None if arrays.av is None else arrays.av[idx]
        preds = predict_batch(params, cfg, arrays.x[idx], av, j)
        cm = confusion(preds, arrays.y[idx], cfg.n_classes)
        cms.append(cm)
        f1s.append(macro_f1(cm))
        accs.append(accuracy(cm))
        ns.append(idx.size)
    n = np.asarray(ns, dtype=np.int64)
    f1 = np.asarray(f1s)
    return DomainScores(
        cm=cms,
        f1=f1,
        acc=np.asarray(accs),
        n=n,
        f1_weighted=float(np.sum(f1 * n) / n.sum()),
    )


def fit_av_head(
    params: ModelParams,
    cfg: ModelConfig,
    x: np.ndarray,
    av: np.ndarray,
    steps: int = 3000,
    lr: float = 0.02,
) -> float:
    """Fit the linear arousal-valence regressor by full-batch Adam on MSE.

    The [-1, 1] clip sits inside the loss: coordinates saturated strictly
    beyond the clip pass no gradient. Returns the final (clipped) MSE. The
    head is frozen afterwards: the classification loss never touches it.
    """
    if params.av_w is None:
        raise ValueError("fit_av_head: model has no arousal-valence head")
    x = np.asarray(x, dtype=np.float64)
    av = np.asarray(av, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("fit_av_head: no training samples carry arousal-valence values")
    tensors = [params.av_w, params.av_b]
    state = adam_init(tensors, lr=lr)
    loss = np.inf
    for _ in range(steps):
        raw = x @ params.av_w.T + params.av_b
        loss, dpred = mse_loss_batch(np.clip(raw, -1.0, 1.0), av)
        dpred = dpred * (np.abs(raw) <= 1.0)
        adam_step(state, tensors, [dpred.T @ x, dpred.sum(axis=0)])
    return float(loss)


def train(
    train_bundle: DatasetBundle,
    test_bundle: DatasetBundle,
    tcfg: TrainConfig,
    log: Optional[Callable[[str], None]] = None,
) -> TrainResult:
    cfg = tcfg.model
    if train_bundle.dim != cfg.dim:
        raise ValueError(f"train: bundle dim {train_bundle.dim} != model dim {cfg.dim}")
    if train_bundle.n_domains != cfg.n_domains:
        raise ValueError(
            f"train: bundle has {train_bundle.n_domains} domains, model expects {cfg.n_domains}"
        )
    arrays = bundle_arrays(train_bundle)
    _check_av(cfg, arrays, "train")

    counts = class_counts(train_bundle)
    if counts.shape[1] != cfg.n_classes:
        raise ValueError(
            f"train: corpus has {counts.shape[1]} classes, model expects {cfg.n_classes}"
        )
    weights = compute_loss_weights(counts, base=tcfg.weight_log_base)

    params = init_params(cfg)
    if cfg.has_av_head:
        if arrays.av is not None:
            av_x, av_t = arrays.x, arrays.av
        else:
            have = np.array([rec.av is not None for rec in train_bundle.records])
            if not have.any():
                raise ValueError(
                    "train: av_source 'regressed' needs some training records "
                    "with stored arousal-valence values to fit the regressor"
                )
            av_x = arrays.x[have]
            av_t = np.array([rec.av for rec in train_bundle.records if rec.av is not None])
        av_mse = fit_av_head(params, cfg, av_x, av_t, steps=tcfg.av_steps, lr=tcfg.av_lr)
        if log:
            log(f"av head fitted: mse {av_mse:.6e} on {len(av_x)} samples")

    tensors = trainable_tensors(params, cfg)
    adam = adam_init(tensors, lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2, eps=tcfg.eps)
    rng_order = SeededRng(derive_seed(tcfg.seed, _TAG_ORDER))
    rng_drop = SeededRng(derive_seed(tcfg.seed, _TAG_DROPOUT))
    use_dropout = cfg.has_embed_head and cfg.dropout_rate > 0.0

    # max_epochs 0 runs no steps: initial params come back with empty history
    # and the sentinel best_f1 -1.0 (a real weighted F1 is always in [0, 1]).
    history: list[EpochStats] = []
    best_params = params.copy()
    best_f1 = -1.0
    best_epoch = 0
    stale = 0
    n = len(arrays.y)
    for epoch in range(1, tcfg.max_epochs + 1):
        epoch_loss = 0.0
        for b, idx in enumerate(make_batches(n, tcfg.batch_size, rng_order)):
            batch = Batch(
                x=arrays.x[idx],
                y=arrays.y[idx],
                dom=arrays.dom[idx],
                av=None if arrays.av is None else arrays.av[idx],
            )
            masks = None
            if use_dropout:
                u = rng_drop.uniform(idx.size * cfg.dim)
                masks = (u >= cfg.dropout_rate).astype(np.float64).reshape(idx.size, cfg.dim)
            loss, grads = backprop(params, cfg, batch, weights, dropout_masks=masks)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"train: non-finite loss at epoch {epoch} batch {b}"
                )
            try:
                adam_step(adam, tensors, trainable_gradients(grads, cfg))
            except FloatingPointError as exc:
                raise FloatingPointError(f"train: epoch {epoch} batch {b}: {exc}") from exc
            epoch_loss += loss * idx.size
        epoch_loss /= n

        if epoch % tcfg.eval_every == 0 or epoch == tcfg.max_epochs:
            scores = evaluate_domains(params, cfg, test_bundle)
            history.append(
                EpochStats(
                    epoch=epoch,
                    loss=epoch_loss,
                    f1=scores.f1,
                    acc=scores.acc,
                    f1_weighted=scores.f1_weighted,
                )
            )
            if log:
                per_dom = " ".join(f"f1[{j}]={v:.4f}" for j, v in enumerate(scores.f1))
                log(
                    f"epoch {epoch:3d} loss {epoch_loss:.4f} {per_dom} "
                    f"weighted {scores.f1_weighted:.4f}"
                )
            if scores.f1_weighted > best_f1:
                best_f1 = scores.f1_weighted
                best_epoch = epoch
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if tcfg.patience and stale >= tcfg.patience:
                    if log:
                        log(f"stopping: no improvement in {tcfg.patience} evaluations")
                    break

    return TrainResult(
        cfg=cfg,
        params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_f1=best_f1,
        weights=weights,
        final_params=params,
        adam=adam,
    )


def cross_evaluate(
    params: ModelParams, cfg: ModelConfig, test_bundle: DatasetBundle
) -> np.ndarray:
    """Transfer matrix: entry [j, j2] is head j's macro F1 on domain j2's data.

    The diagonal coincides exactly with evaluate_domains (same code path).
    """
    arrays = bundle_arrays(test_bundle)
    _check_av(cfg, arrays, "cross-evaluate")
    out = np.zeros((cfg.n_domains, test_bundle.n_domains))
    for j2 in range(test_bundle.n_domains):
        idx = np.flatnonzero(arrays.dom == j2)
        if idx.size == 0:
            raise ValueError(f"cross-evaluate: domain {j2} has no samples")
        av = None if arrays.av is None else arrays.av[idx]
        for j in range(cfg.n_domains):
            preds = predict_batch(params, cfg, arrays.x[idx], av, j)
            out[j, j2] = macro_f1(confusion(preds, arrays.y[idx], cfg.n_classes))
    return out


@dataclass(eq=False)
class SweepRow:
    variant: str
    k: int
    f1_weighted: float


def sweep_representation_size(
    train_bundle: DatasetBundle,
    test_bundle: DatasetBundle,
    tcfg: TrainConfig,
    ks: list[int],
    log: Optional[Callable[[str], None]] = None,
) -> list[SweepRow]:
    """Train once per size in ks, everything else held fixed (seeds included)."""
    if not ks:
        raise ValueError("sweep: need at least one size")
    rows = []
    for k in ks:
        run_cfg = replace(tcfg, model=replace(tcfg.model, k=k))
        result = train(train_bundle, test_bundle, run_cfg, log=log)
        rows.append(SweepRow(variant=tcfg.model.variant, k=k, f1_weighted=result.best_f1))
        if log:
            log(f"sweep {tcfg.model.variant} k={k}: weighted f1 {result.best_f1:.4f}")
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = ["variant,k,f1_weighted"]
    for r in rows:
        lines.append(f"{r.variant},{r.k},{r.f1_weighted:.6f}")
    return "\n".join(lines) + "\n"


def history_csv(history: list[EpochStats], n_domains: int) -> str:
    head = ["epoch", "loss"] + [f"f1_dom{j}" for j in range(n_domains)] + ["f1_weighted"]
    lines = [",".join(head)]
    for row in history:
        cells = [str(row.epoch), f"{row.loss:.6f}"]
        cells += [f"{v:.6f}" for v in row.f1]
        cells.append(f"{row.f1_weighted:.6f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def repeat_train(
    train_bundle: DatasetBundle,
    test_bundle: DatasetBundle,
    tcfg: TrainConfig,
    n_runs: int,
    log: Optional[Callable[[str], None]] = None,
) -> list[TrainResult]:
    """n_runs independent trainings, run i seeded with both seeds offset by i."""
    if n_runs < 1:
        raise ValueError("repeat_train: n_runs must be >= 1")
    results = []
    for i in range(n_runs):
        run_cfg = replace(
            tcfg, seed=tcfg.seed + i, model=replace(tcfg.model, seed=tcfg.model.seed + i)
        )
        results.append(train(train_bundle, test_bundle, run_cfg, log=log))
    return results
