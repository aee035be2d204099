"""Evaluation metrics for next-visit diagnosis prediction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import average_precision_score

QUARTILE_NAMES = ("q0_25", "q25_50", "q50_75", "q75_100")


def acc_at_k(scores: np.ndarray, labels: np.ndarray, k: int
             ) -> tuple[float, int]:
    """Top-k accuracy normalized by min(k, |y|) per sample.

    scores, labels: (S, L). Samples with an empty label set are excluded;
    the count of excluded samples is returned alongside the mean."""
    hits, excluded = [], 0
    for s, y in zip(scores, labels):
        n_true = int(y.sum())
        if n_true == 0:
            excluded += 1
            continue
        top = np.argsort(-s, kind="stable")[:k]
        hits.append(y[top].sum() / min(k, n_true))
    if not hits:
        raise ValueError("every sample has an empty label set")
    return float(np.mean(hits)), excluded


def micro_auprc(scores: np.ndarray, labels: np.ndarray) -> float:
    return float(average_precision_score(labels.ravel(), scores.ravel()))


def macro_auprc(scores: np.ndarray, labels: np.ndarray) -> float:
    vals = [average_precision_score(labels[:, j], scores[:, j])
            for j in range(labels.shape[1]) if labels[:, j].any()]
    if not vals:
        raise ValueError("no label has a positive example")
    return float(np.mean(vals))


def f1_at_half(scores: np.ndarray, labels: np.ndarray) -> float:
    pred = scores >= 0.5
    tp = float((pred & (labels > 0)).sum())
    fp = float((pred & (labels == 0)).sum())
    fn = float((~pred & (labels > 0)).sum())
    if tp == 0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def quartile_auprc(scores: np.ndarray, labels: np.ndarray,
                   train_freq: np.ndarray) -> dict[str, float]:
    """Per-label average precision averaged within training-frequency
    quartiles (0-25 rarest through 75-100 most frequent)."""
    order = np.argsort(train_freq, kind="stable")
    splits = np.array_split(order, 4)
    out = {}
    for name, idx in zip(QUARTILE_NAMES, splits):
        vals = [average_precision_score(labels[:, j], scores[:, j])
                for j in idx if labels[:, j].any()]
        out[name] = float(np.mean(vals)) if vals else float("nan")
    return out


@dataclass
class EvalReport:
    auprc: float                  # micro-averaged headline number
    auprc_macro: float
    f1: float
    acc_at: dict[int, float]
    excluded_empty: int
    quartiles: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"auprc": self.auprc, "auprc_macro": self.auprc_macro,
                "f1": self.f1,
                "acc_at": {str(k): v for k, v in self.acc_at.items()},
                "excluded_empty": self.excluded_empty,
                "quartiles": self.quartiles}


def evaluate(scores: np.ndarray, labels: np.ndarray,
             train_freq: np.ndarray | None = None,
             ks: tuple[int, ...] = (15, 20, 30)) -> EvalReport:
    """scores/labels: (S, L) over flattened (sample, timestep) predictions."""
    if scores.shape != labels.shape:
        raise ValueError("predictions and labels misaligned")
    acc, excluded = {}, 0
    for k in ks:
        acc[k], excluded = acc_at_k(scores, labels, k)
    report = EvalReport(
        auprc=micro_auprc(scores, labels),
        auprc_macro=macro_auprc(scores, labels),
        f1=f1_at_half(scores, labels),
        acc_at=acc, excluded_empty=excluded)
    if train_freq is not None:
        report.quartiles = quartile_auprc(scores, labels, train_freq)
    return report
