"""Masked binary-classification metrics: confusion counts, weighted
accuracy/precision/recall/F1, ROC curve and AUC.

Weighted variants are support-weighted averages of the per-class metrics
(positive class = attack = 1).  Undefined per-class ratios are reported
as 0 and flagged.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class EvalReport:
    counts: ConfusionCounts
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class: dict = field(default_factory=dict)
    zero_division_flag: bool = False
    roc: list = field(default_factory=list)  # (fpr, tpr, threshold)
    auc: float | None = None

    def to_dict(self) -> dict:
        doc = {
            "counts": asdict(self.counts),
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "per_class": self.per_class,
            "zero_division_flag": self.zero_division_flag,
            "auc": self.auc,
        }
        return doc

    def save_json(self, path: str, extra: dict | None = None) -> None:
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


def confusion(decisions: np.ndarray, labels: np.ndarray,
              mask: np.ndarray) -> ConfusionCounts:
    d = np.asarray(decisions)
    y = np.asarray(labels)
    m = np.asarray(mask)
    if not (d.shape == y.shape == m.shape):
        raise ValueError(f"shape mismatch: {d.shape}, {y.shape}, {m.shape}")
    valid = m == 1
    d = d[valid].astype(bool)
    y = y[valid].astype(bool)
    return ConfusionCounts(
        tp=int((d & y).sum()),
        tn=int((~d & ~y).sum()),
        fp=int((d & ~y).sum()),
        fn=int((~d & y).sum()),
    )


def _safe_div(a: float, b: float) -> tuple[float, bool]:
    return (a / b, False) if b > 0 else (0.0, True)


def weighted_metrics(counts: ConfusionCounts) -> EvalReport:
    if counts.total == 0:
        raise ValueError("weighted_metrics: empty confusion matrix")
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    support_1 = tp + fn
    support_0 = tn + fp
    flagged = False
    p1, f = _safe_div(tp, tp + fp); flagged |= f
    r1, f = _safe_div(tp, tp + fn); flagged |= f
    f1_1, f = _safe_div(2 * p1 * r1, p1 + r1); flagged |= f
    p0, f = _safe_div(tn, tn + fn); flagged |= f
    r0, f = _safe_div(tn, tn + fp); flagged |= f
    f1_0, f = _safe_div(2 * p0 * r0, p0 + r0); flagged |= f
    total = counts.total
    return EvalReport(
        counts=counts,
        accuracy=(tp + tn) / total,
        weighted_precision=(support_1 * p1 + support_0 * p0) / total,
        weighted_recall=(support_1 * r1 + support_0 * r0) / total,
        weighted_f1=(support_1 * f1_1 + support_0 * f1_0) / total,
        per_class={
            "attack": {"precision": p1, "recall": r1, "f1": f1_1, "support": support_1},
            "benign": {"precision": p0, "recall": r0, "f1": f1_0, "support": support_0},
        },
        zero_division_flag=flagged,
    )


def roc_curve(scores: np.ndarray, labels: np.ndarray,
              mask: np.ndarray) -> list[tuple[float, float, float]]:
    """Operating points at every distinct score, descending, with the
    (0,0) and (1,1) endpoints.  Tied scores share one threshold.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    m = np.asarray(mask)
    valid = m == 1
    s = s[valid]
    y = y[valid].astype(bool)
    n_pos = int(y.sum())
    n_neg = int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"roc_curve needs both classes (pos={n_pos}, neg={n_neg})")
    order = np.argsort(-s, kind="stable")
    s = s[order]
    y = y[order]
    tps = np.cumsum(y)
    fps = np.cumsum(~y)
    # Keep the last index of each tied-score group.
    distinct = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    points = [(0.0, 0.0, float("inf"))]
    for i in distinct:
        points.append((fps[i] / n_neg, tps[i] / n_pos, float(s[i])))
    if points[-1][:2] != (1.0, 1.0):
        points.append((1.0, 1.0, float(s[-1])))
    return points


def auc(points: list[tuple[float, float, float]]) -> float:
    fpr = np.asarray([p[0] for p in points])
    tpr = np.asarray([p[1] for p in points])
    trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy<2 fallback
    return float(trapezoid(tpr, fpr))


def save_roc_csv(points, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, thr in points:
            w.writerow([f"{fpr:.9g}", f"{tpr:.9g}", f"{thr:.9g}"])
    os.replace(tmp, path)


def save_roc_svg(points, path: str, title: str = "ROC") -> None:
    """Minimal self-contained SVG line plot of the ROC curve."""
    size, margin = 400, 40
    span = size - 2 * margin

    def sx(v):
        return margin + v * span

    def sy(v):
        return size - margin - v * span

    poly = " ".join(f"{sx(p[0]):.2f},{sy(p[1]):.2f}" for p in points)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(0)}" stroke="black"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(0)}" y2="{sy(1)}" stroke="black"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" stroke="#bbb" stroke-dasharray="4"/>',
        f'<polyline points="{poly}" fill="none" stroke="#c0392b" stroke-width="2"/>',
        f'<text x="{size / 2}" y="{margin / 2}" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">false positive rate</text>',
        f'<text x="12" y="{size / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 12 {size / 2})">true positive rate</text>',
        "</svg>",
    ]
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(parts) + "\n")
    os.replace(tmp, path)
