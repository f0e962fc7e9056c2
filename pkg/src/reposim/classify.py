"""Gaussian Naive Bayes over fused embeddings with cross-validation.

The classifier fits one Gaussian per class per dimension with a variance
floor derived from the data, predicts by maximum log posterior, and is
evaluated with stratified k-fold cross-validation pooling predictions
across folds (micro averaging). Metrics treat "malware" as the positive
class.
"""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import make_rng

LABELS = ("benign", "malware")


@dataclass(frozen=True)
class LabeledEmbedding:
    repo_id: str
    fused: np.ndarray
    label: str

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")


@dataclass
class NBModel:
    classes: tuple[str, ...]
    priors: np.ndarray  # (C,)
    means: np.ndarray  # (C, d)
    variances: np.ndarray  # (C, d), floored
    eps: float


def nb_fit(data: Sequence[LabeledEmbedding], eps: float | None = None) -> NBModel:
    """Fit class priors and per-dimension Gaussians.

    The variance floor defaults to 1e-9 times the largest overall
    per-dimension variance, never below 1e-12. Requires at least one
    example of each class.
    """
    classes = tuple(sorted({d.label for d in data}))
    if len(classes) < 2:
        raise ValueError("need examples of at least 2 classes; got " + repr(classes))
    x = np.stack([d.fused for d in data]).astype(np.float64)
    y = np.array([d.label for d in data])

    if eps is None:
        overall_var = x.var(axis=0)
        eps = max(1e-9 * float(overall_var.max()), 1e-12)

    priors = np.empty(len(classes))
    means = np.empty((len(classes), x.shape[1]))
    variances = np.empty((len(classes), x.shape[1]))
    for i, cls in enumerate(classes):
        rows = x[y == cls]
        priors[i] = len(rows) / len(x)
        means[i] = rows.mean(axis=0)
        variances[i] = np.maximum(rows.var(axis=0), eps)
    return NBModel(classes=classes, priors=priors, means=means, variances=variances, eps=eps)


def nb_predict(model: NBModel, x: np.ndarray) -> tuple[str, dict[str, float]]:
    """Predicted label and per-class log posterior (up to a constant).

    Ties go to the lexicographically smaller label.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.means.shape[1],):
        raise ValueError(f"dimension mismatch: {x.shape} vs ({model.means.shape[1]},)")
    log_lik = -0.5 * (
        np.log(2.0 * np.pi * model.variances) + (x - model.means) ** 2 / model.variances
    ).sum(axis=1)
    scores = np.log(model.priors) + log_lik
    best = int(np.argmax(scores))  # classes are sorted, first max wins ties
    return model.classes[best], {c: float(s) for c, s in zip(model.classes, scores)}


def stratified_folds(labels: Sequence[str], folds: int, seed: int) -> np.ndarray:
    """Fold index per example: seeded shuffle then round-robin per class."""
    labels = np.asarray(labels)
    assignment = np.empty(len(labels), dtype=np.int64)
    for cls in sorted(set(labels)):
        idx = np.nonzero(labels == cls)[0]
        if len(idx) < folds:
            raise ValueError(f"class {cls!r} has {len(idx)} examples, fewer than {folds} folds")
        rng = make_rng(seed, "folds", cls)
        idx = idx.copy()
        rng.shuffle(idx)
        for pos, example in enumerate(idx):
            assignment[example] = pos % folds
    return assignment


def classification_metrics(
    y_true: Sequence[str], y_pred: Sequence[str], positive_label: str = "malware"
) -> dict[str, float]:
    """Accuracy plus precision/recall/F1 for the positive class."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    accuracy = float((y_true == y_pred).mean())
    tp = int(((y_pred == positive_label) & (y_true == positive_label)).sum())
    fp = int(((y_pred == positive_label) & (y_true != positive_label)).sum())
    fn = int(((y_pred != positive_label) & (y_true == positive_label)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}


@dataclass
class CVResult:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_fold: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "folds": self.per_fold,
        }


def cross_validate(
    data: Sequence[LabeledEmbedding],
    folds: int = 10,
    seed: int = 0,
    positive_label: str = "malware",
) -> CVResult:
    """Stratified k-fold CV; metrics micro-averaged over pooled predictions."""
    labels = [d.label for d in data]
    fold_of = stratified_folds(labels, folds, seed)
    y_true: list[str] = []
    y_pred: list[str] = []
    per_fold: list[dict] = []
    for f in range(folds):
        train = [d for d, fi in zip(data, fold_of) if fi != f]
        test = [(d, i) for i, (d, fi) in enumerate(zip(data, fold_of)) if fi == f]
        model = nb_fit(train)
        fold_true = [d.label for d, _ in test]
        fold_pred = [nb_predict(model, d.fused)[0] for d, _ in test]
        y_true.extend(fold_true)
        y_pred.extend(fold_pred)
        per_fold.append({"fold": f, "size": len(test), **classification_metrics(fold_true, fold_pred, positive_label)})
    pooled = classification_metrics(y_true, y_pred, positive_label)
    return CVResult(
        accuracy=pooled["accuracy"],
        precision=pooled["precision"],
        recall=pooled["recall"],
        f1=pooled["f1"],
        per_fold=per_fold,
    )


def load_labels(path: Path) -> dict[str, str]:
    """Read a ``repo_id,label`` CSV (header row optional)."""
    labels: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or (row[0] == "repo_id" and not labels):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: expected 2 columns, found {len(row)}: {row}")
            labels[row[0]] = row[1]
    return labels
