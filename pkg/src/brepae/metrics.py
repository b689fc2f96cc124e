"""Accuracy, mean IoU, and the evaluation pass over a split.

Metrics pool predictions across the whole evaluation set before scoring
(corpus-level, not per-model averaging). Classes absent from both the
prediction and ground-truth sets have an undefined IoU (0/0) and are
excluded from the mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ContractError


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.size == 0:
        raise ContractError("accuracy needs equally sized, nonempty inputs")
    return float(np.mean(preds == labels))


def mean_iou(preds, labels, n_classes: int):
    """Set-based IoU per class; returns (miou, per-class list).

    Classes missing from both sets get None in the per-class list and do
    not participate in the mean.
    """
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.size == 0:
        raise ContractError("mean_iou needs equally sized, nonempty inputs")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ContractError("labels out of class range")
    per_class = []
    present = []
    for c in range(n_classes):
        a = preds == c
        b = labels == c
        union = np.logical_or(a, b).sum()
        if union == 0:
            per_class.append(None)
            continue
        iou = float(np.logical_and(a, b).sum() / union)
        per_class.append(iou)
        present.append(iou)
    return float(np.mean(present)), per_class


def confusion_matrix(preds, labels, n_classes: int) -> np.ndarray:
    """Counts with ground truth along rows and predictions along columns."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (labels, preds), 1)
    return mat


@dataclass
class EvalReport:
    accuracy: float
    per_class_iou: list
    miou: float
    n_items: int
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_iou": self.per_class_iou,
            "miou": self.miou,
            "n_items": self.n_items,
            "confusion": self.confusion.tolist(),
        }

    def table(self) -> str:
        lines = [
            f"{'items':<12}{self.n_items:>10d}",
            f"{'accuracy':<12}{self.accuracy:>10.4f}",
            f"{'miou':<12}{self.miou:>10.4f}",
        ]
        for c, iou in enumerate(self.per_class_iou):
            val = "   absent" if iou is None else f"{iou:>9.4f}"
            lines.append(f"{'iou[%d]' % c:<12}{val:>10}")
        return "\n".join(lines)


def predict_split(model, data: dict, task: str):
    """Argmax predictions and labels pooled over all models of a split."""
    preds, labels = [], []
    model.eval()
    with torch.no_grad():
        for mid in sorted(data):
            tensors = data[mid]
            logits = model(tensors)
            if task == "segmentation":
                if tensors["face_labels"] is None:
                    raise ContractError(f"model {mid} lacks face labels")
                preds.extend(logits.argmax(dim=1).tolist())
                labels.extend(tensors["face_labels"].tolist())
            else:
                if tensors["shape_label"] is None:
                    raise ContractError(f"model {mid} lacks a shape label")
                preds.append(int(logits.argmax()))
                labels.append(int(tensors["shape_label"]))
    return np.asarray(preds), np.asarray(labels)


def evaluate(model, data: dict, task: str, n_classes: int) -> EvalReport:
    """Corpus-level metrics for a task model over one split's tensors."""
    preds, labels = predict_split(model, data, task)
    miou, per_class = mean_iou(preds, labels, n_classes)
    return EvalReport(
        accuracy=accuracy(preds, labels),
        per_class_iou=per_class,
        miou=miou,
        n_items=int(len(preds)),
        confusion=confusion_matrix(preds, labels, n_classes),
    )
