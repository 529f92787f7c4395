"""Confusion matrices, WAR and UAR.

WAR is overall accuracy (per-class recall weighted by support); UAR is the
plain mean of per-class recall. Classes with no true examples are left out
of the UAR mean instead of counting as zero recall.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, cols: predicted class

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion(preds: Sequence[int], labels: Sequence[int], num_classes: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise ValueError(f"{len(preds)} predictions for {len(labels)} labels")
    for name, v in (("prediction", preds), ("label", labels)):
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise ValueError(f"{name} outside 0..{num_classes - 1}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def war(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("WAR of an empty confusion matrix")
    return 100.0 * float(np.trace(cm.counts)) / cm.total


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    """Recall per class in percent; NaN where a class has no support."""
    sup = cm.support().astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(sup > 0, 100.0 * np.diag(cm.counts) / sup, np.nan)


def uar(cm: ConfusionMatrix) -> float:
    rec = per_class_recall(cm)
    present = ~np.isnan(rec)
    if not present.any():
        raise ValueError("UAR undefined: no class has any examples")
    return float(rec[present].mean())


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def write_predictions(path: str | os.PathLike, ids: Sequence[str], labels, preds) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["clip_id", "true_label", "pred_label"])
        for cid, t, p in zip(ids, labels, preds):
            wr.writerow([cid, int(t), int(p)])


def read_predictions(path: str | os.PathLike) -> tuple[list[str], np.ndarray, np.ndarray]:
    ids, labels, preds = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["clip_id"])
            labels.append(int(row["true_label"]))
            preds.append(int(row["pred_label"]))
    return ids, np.asarray(labels, dtype=np.int64), np.asarray(preds, dtype=np.int64)


def write_report(path: str | os.PathLike, cm: ConfusionMatrix) -> str:
    """Confusion matrix CSV with a trailing summary line; returns the summary."""
    k = cm.num_classes
    summary = f"WAR={war(cm):.4f},UAR={uar(cm):.4f},n={cm.total}"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["true\\pred"] + [str(j) for j in range(k)])
        for i in range(k):
            wr.writerow([str(i)] + [str(int(v)) for v in cm.counts[i]])
        fh.write(f"# {summary}\n")
    return summary
