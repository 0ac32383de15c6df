"""Confusion-matrix classification metrics.

Conventions: rows are true classes, columns are predictions. Macro F1
averages per-class F1 over ALL classes, counting empty ones as 0, so adding
an unused class dilutes the score. Mean class recall by default skips
classes with no true samples (use include_empty=True to count them as 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows=true, cols=pred

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(preds: np.ndarray, labels: np.ndarray, n_classes: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError(f"confusion: preds {preds.shape} vs labels {labels.shape}")
    if len(preds) and (
        preds.min() < 0 or preds.max() >= n_classes
        or labels.min() < 0 or labels.max() >= n_classes
    ):
        raise ValueError(f"confusion: values outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    if a.counts.shape != b.counts.shape:
        raise ValueError("merge: class-count mismatch")
    return ConfusionMatrix(a.counts + b.counts)


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """F1 per class; 2*TP/(2*TP+FP+FN), with 0 where that denominator is 0."""
    tp = np.diag(cm.counts).astype(np.float64)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp
    denom = 2.0 * tp + fp + fn
    out = np.zeros(cm.n_classes)
    nz = denom > 0
    out[nz] = 2.0 * tp[nz] / denom[nz]
    return out


def macro_f1(cm: ConfusionMatrix) -> float:
    return float(per_class_f1(cm).mean())


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy: empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def mean_class_recall(cm: ConfusionMatrix, include_empty: bool = False) -> float:
    tp = np.diag(cm.counts).astype(np.float64)
    support = cm.counts.sum(axis=1).astype(np.float64)
    has = support > 0
    if not np.any(has):
        raise ValueError("mean_class_recall: no class has support")
    recall = np.zeros(cm.n_classes)
    recall[has] = tp[has] / support[has]
    if include_empty:
        return float(recall.mean())
    return float(recall[has].mean())


def format_report_text(cm: ConfusionMatrix, class_names=None) -> str:
    """Human-readable block: per-class P/R/F1/support plus the three summaries."""
    if class_names is None:
        class_names = [f"class{i}" for i in range(cm.n_classes)]
    if len(class_names) != cm.n_classes:
        raise ValueError("format_report_text: wrong number of class names")
    tp = np.diag(cm.counts).astype(np.float64)
    col = cm.counts.sum(axis=0).astype(np.float64)
    row = cm.counts.sum(axis=1).astype(np.float64)
    f1 = per_class_f1(cm)
    width = max(len(n) for n in class_names)
    lines = [f"{'':<{width}}  {'prec':>6} {'recall':>6} {'f1':>6} {'support':>7}"]
    for i, name in enumerate(class_names):
        p = tp[i] / col[i] if col[i] else 0.0
        r = tp[i] / row[i] if row[i] else 0.0
        lines.append(
            f"{name:<{width}}  {p:>6.4f} {r:>6.4f} {f1[i]:>6.4f} {int(row[i]):>7d}"
        )
    lines.append("")
    lines.append(f"accuracy          {accuracy(cm):.4f}")
    lines.append(f"macro f1          {macro_f1(cm):.4f}")
    lines.append(f"mean class recall {mean_class_recall(cm):.4f}")
    return "\n".join(lines)


def format_report_csv(cm: ConfusionMatrix, class_names=None) -> str:
    """Machine-readable rows: class,precision,recall,f1,support + summary rows."""
    if class_names is None:
        class_names = [f"class{i}" for i in range(cm.n_classes)]
    if len(class_names) != cm.n_classes:
        raise ValueError("format_report_csv: wrong number of class names")
    tp = np.diag(cm.counts).astype(np.float64)
    col = cm.counts.sum(axis=0).astype(np.float64)
    row = cm.counts.sum(axis=1).astype(np.float64)
    f1 = per_class_f1(cm)
    lines = ["class,precision,recall,f1,support"]
    for i, name in enumerate(class_names):
        p = tp[i] / col[i] if col[i] else 0.0
        r = tp[i] / row[i] if row[i] else 0.0
        lines.append(f"{name},{p:.6f},{r:.6f},{f1[i]:.6f},{int(row[i])}")
    lines.append(f"accuracy,,,{accuracy(cm):.6f},{cm.total}")
    lines.append(f"macro_f1,,,{macro_f1(cm):.6f},{cm.total}")
    lines.append(f"mean_class_recall,,,{mean_class_recall(cm):.6f},{cm.total}")
    return "\n".join(lines) + "\n"
