"""Multi-label evaluation: per-image and per-concept F1, precision, recall, macro ROC AUC.

Conventions for degenerate cases: an image (or concept) with nothing predicted
and nothing true scores 1 on F1, precision and recall; any other undefined
ratio is 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .dataset import LabelMatrix
from .predictions import PredictionSet

SAMPLES = "samples"
MACRO = "macro"


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class F1Scores:
    mean: float
    precision: float
    recall: float
    f1: np.ndarray
    per_precision: np.ndarray
    per_recall: np.ndarray


def _ratios(tp: np.ndarray, n_pred: np.ndarray, n_true: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    both_empty = (n_pred == 0) & (n_true == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n_pred > 0, tp / np.maximum(n_pred, 1), 0.0)
        r = np.where(n_true > 0, tp / np.maximum(n_true, 1), 0.0)
        f = np.where(n_pred + n_true > 0, 2 * tp / np.maximum(n_pred + n_true, 1), 0.0)
    p = np.where(both_empty, 1.0, p)
    r = np.where(both_empty, 1.0, r)
    f = np.where(both_empty, 1.0, f)
    return f, p, r


def sample_scores(pred_bits: np.ndarray, truth_bits: np.ndarray) -> F1Scores:
    tp = (pred_bits & truth_bits).sum(axis=1)
    f, p, r = _ratios(tp, pred_bits.sum(axis=1), truth_bits.sum(axis=1))
    return F1Scores(float(f.mean()), float(p.mean()), float(r.mean()), f, p, r)


def concept_scores(pred_bits: np.ndarray, truth_bits: np.ndarray) -> F1Scores:
    tp = (pred_bits & truth_bits).sum(axis=0)
    f, p, r = _ratios(tp, pred_bits.sum(axis=0), truth_bits.sum(axis=0))
    return F1Scores(float(f.mean()), float(p.mean()), float(r.mean()), f, p, r)


def _aligned_bits(pred: PredictionSet, truth: LabelMatrix) -> tuple[np.ndarray, np.ndarray]:
    if set(pred.ids) != set(truth.ids) or len(pred.ids) != len(truth.ids):
        missing = sorted(set(truth.ids) - set(pred.ids))[:5]
        extra = sorted(set(pred.ids) - set(truth.ids))[:5]
        raise AlignmentError(f"prediction ids do not match ground truth (missing {missing}, unexpected {extra})")
    by_id = pred.as_dict()
    ordered = PredictionSet(truth.ids, tuple(by_id[i] for i in truth.ids))
    return ordered.to_bits(truth.vocabulary), truth.bits


def f1_per_sample(pred: PredictionSet, truth: LabelMatrix) -> F1Scores:
    """Mean over images of the set F1 between predicted and true concepts.

    Predicted concepts missing from the truth vocabulary count as false positives.
    """
    pred_bits, truth_bits = _aligned_bits(pred, truth)
    by_id = pred.as_dict()
    vocab = set(truth.vocabulary.concepts)
    extra = np.array([len(by_id[i] - vocab) for i in truth.ids])
    tp = (pred_bits & truth_bits).sum(axis=1)
    f, p, r = _ratios(tp, pred_bits.sum(axis=1) + extra, truth_bits.sum(axis=1))
    return F1Scores(float(f.mean()), float(p.mean()), float(r.mean()), f, p, r)


def f1_macro_label(pred: PredictionSet, truth: LabelMatrix) -> F1Scores:
    """Mean over vocabulary concepts of the column F1 from confusion counts."""
    pred_bits, truth_bits = _aligned_bits(pred, truth)
    return concept_scores(pred_bits, truth_bits)


@dataclass(frozen=True)
class AucResult:
    mean: float
    per_concept: np.ndarray  # NaN where skipped
    skipped: tuple[int, ...]


def binary_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney estimate of ROC AUC; tied scores count one half."""
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_macro(scores: np.ndarray, truth_bits: np.ndarray) -> AucResult:
    scores = np.asarray(scores, dtype=np.float64)
    truth_bits = np.asarray(truth_bits, dtype=bool)
    per = np.full(truth_bits.shape[1], np.nan)
    skipped = []
    for j in range(truth_bits.shape[1]):
        col = truth_bits[:, j]
        if col.all() or not col.any():
            skipped.append(j)
            continue
        per[j] = binary_auc(scores[:, j], col)
    if len(skipped) == truth_bits.shape[1]:
        raise ValueError("no concept has both positive and negative examples")
    return AucResult(float(np.nanmean(per)), per, tuple(skipped))


@dataclass(frozen=True)
class EvalReport:
    representation: str
    operating_point_kind: str  # "threshold" or "k"
    operating_point: float
    f1_samples: float
    precision_samples: float
    recall_samples: float
    f1_macro: float
    precision_macro: float
    recall_macro: float
    auc_macro: float
    aggregation: str = MACRO
    f1_test: float | None = None

    def __post_init__(self):
        for name in ("f1_samples", "precision_samples", "recall_samples", "f1_macro", "precision_macro", "recall_macro", "auc_macro"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.aggregation not in (MACRO, SAMPLES):
            raise ValueError(f"aggregation must be {MACRO!r} or {SAMPLES!r}")

    @property
    def f1(self) -> float:
        return self.f1_macro if self.aggregation == MACRO else self.f1_samples

    @property
    def precision(self) -> float:
        return self.precision_macro if self.aggregation == MACRO else self.precision_samples

    @property
    def recall(self) -> float:
        return self.recall_macro if self.aggregation == MACRO else self.recall_samples

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={'' if v is None else (repr(v) if isinstance(v, float) else v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        raw = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        kwargs: dict = {}
        for f in fields(cls):
            v = raw.get(f.name, "")
            if f.name in ("representation", "operating_point_kind", "aggregation"):
                kwargs[f.name] = v
            elif f.name == "f1_test":
                kwargs[f.name] = float(v) if v else None
            else:
                kwargs[f.name] = float(v)
        return cls(**kwargs)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate_predictions(
    pred: PredictionSet,
    truth: LabelMatrix,
    scores: np.ndarray | None = None,
    representation: str = "",
    operating_point_kind: str = "threshold",
    operating_point: float = math.nan,
    aggregation: str = MACRO,
) -> EvalReport:
    """Both F1 aggregations plus macro AUC; ``scores`` rows must follow ``truth.ids``.

    Without scores the binary predictions stand in for them.
    """
    samples = f1_per_sample(pred, truth)
    macro = f1_macro_label(pred, truth)
    if scores is None:
        pred_bits, _ = _aligned_bits(pred, truth)
        scores = pred_bits.astype(np.float64)
    try:
        auc = auc_macro(scores, truth.bits).mean
    except ValueError:
        auc = 0.5
    return EvalReport(
        representation,
        operating_point_kind,
        float(operating_point),
        samples.mean,
        samples.precision,
        samples.recall,
        macro.mean,
        macro.precision,
        macro.recall,
        auc,
        aggregation,
    )


def _fmt(v: float | None) -> str:
    return "-" if v is None else f"{v:.5f}"


def render_results_table(reports: Sequence[EvalReport]) -> str:
    """Fixed-width comparison table, one row per report in input order."""
    if not reports:
        raise ValueError("at least one report is required")
    with_k = any(r.operating_point_kind == "k" for r in reports)
    header = ["Type", "F1", "precision", "recall", "AUC"] + (["k"] if with_k else []) + ["F1(test)"]
    rows = []
    for r in reports:
        row = [r.representation, _fmt(r.f1), _fmt(r.precision), _fmt(r.recall), _fmt(r.auc_macro)]
        if with_k:
            row.append(str(int(r.operating_point)) if r.operating_point_kind == "k" else "-")
        row.append(_fmt(r.f1_test))
        rows.append(row)
    widths = [max(len(line[i]) for line in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in [header, *rows]]
    return "\n".join(lines) + "\n"
