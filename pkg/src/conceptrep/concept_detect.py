"""Concept predictors: per-concept logistic regression trained with FTRL-Proximal,
and nearest-neighbour prediction by the union of neighbour concept sets."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from .dataset import ConceptVocabulary, LabelMatrix
from .features import FeatureMatrix
from .metrics import MACRO, SAMPLES, concept_scores, sample_scores
from .predictions import PredictionSet

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2)
DEFAULT_K_CANDIDATES = (1, 2, 3, 4, 5)
_BANK_MAGIC = b"LMB1"


@dataclass(frozen=True)
class FtrlParams:
    alpha: float = 0.05
    beta: float = 1.0
    lambda1: float = 0.001
    lambda2: float = 0.0


@dataclass
class FtrlState:
    """Accumulators for L concepts over dim + 1 coordinates (the last is the bias)."""

    z: np.ndarray
    n: np.ndarray
    params: FtrlParams = field(default_factory=FtrlParams)

    @classmethod
    def zeros(cls, n_concepts: int, dim: int, params: FtrlParams | None = None) -> "FtrlState":
        shape = (n_concepts, dim + 1)
        return cls(np.zeros(shape), np.zeros(shape), params or FtrlParams())

    def copy(self) -> "FtrlState":
        return FtrlState(self.z.copy(), self.n.copy(), self.params)


def ftrl_weights(z: np.ndarray, n: np.ndarray, params: FtrlParams) -> np.ndarray:
    """Closed-form weights: exactly zero wherever |z| <= lambda1."""
    p = params
    w = -(z - np.sign(z) * p.lambda1) / ((p.beta + np.sqrt(n)) / p.alpha + p.lambda2)
    return np.where(np.abs(z) <= p.lambda1, 0.0, w)


def _augment(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.hstack([x, np.ones((len(x), 1))])


def _apply_gradient(state: FtrlState, g: np.ndarray, rows: slice | np.ndarray = slice(None)) -> None:
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite FTRL gradient")
    z, n = state.z[rows], state.n[rows]
    w = ftrl_weights(z, n, state.params)
    sigma = (np.sqrt(n + g * g) - np.sqrt(n)) / state.params.alpha
    state.z[rows] = z + g - sigma * w
    state.n[rows] = n + g * g


def ftrl_update(state: FtrlState, features: np.ndarray, label: int, concept: int) -> FtrlState:
    """Single-example logistic update of one concept's accumulators, in place."""
    if label not in (0, 1):
        raise ValueError("label must be 0 or 1")
    x = _augment(features)[0]
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite features")
    w = ftrl_weights(state.z[concept], state.n[concept], state.params)
    g = (expit(x @ w) - label) * x
    _apply_gradient(state, g[None, :], np.array([concept]))
    return state


def ftrl_batch_update(state: FtrlState, x: np.ndarray, y: np.ndarray) -> FtrlState:
    """One update of every concept from the mean logistic gradient of a mini-batch."""
    xa = _augment(x)
    w = ftrl_weights(state.z, state.n, state.params)
    p = expit(xa @ w.T)
    g = (p - y).T @ xa / len(xa)
    _apply_gradient(state, g)
    return state


@dataclass
class LinearModelBank:
    vocabulary: ConceptVocabulary
    weights: np.ndarray  # (L, dim + 1), bias last
    threshold: float = 0.5

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1

    def to_bytes(self) -> bytes:
        out = bytearray(_BANK_MAGIC)
        out += struct.pack("<IId", self.dim, len(self.vocabulary), self.threshold)
        for c in self.vocabulary.concepts:
            raw = c.encode("utf-8")
            out += struct.pack("<I", len(raw)) + raw
        out += np.ascontiguousarray(self.weights, dtype="<f8").tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LinearModelBank":
        if data[:4] != _BANK_MAGIC:
            raise ValueError("bad magic, not a linear model bank")
        dim, n_concepts, threshold = struct.unpack_from("<IId", data, 4)
        off = 20
        concepts = []
        for _ in range(n_concepts):
            (ln,) = struct.unpack_from("<I", data, off)
            off += 4
            concepts.append(data[off : off + ln].decode("utf-8"))
            off += ln
        if len(data) - off != n_concepts * (dim + 1) * 8:
            raise ValueError("truncated linear model bank")
        w = np.frombuffer(data, dtype="<f8", offset=off).reshape(n_concepts, dim + 1).copy()
        return cls(ConceptVocabulary(tuple(concepts), tuple(0 for _ in concepts)), w, threshold)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "LinearModelBank":
        return cls.from_bytes(Path(path).read_bytes())


def predict_probabilities(bank: LinearModelBank, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    rows = features.rows if isinstance(features, FeatureMatrix) else np.atleast_2d(features)
    if rows.shape[1] != bank.dim:
        raise ValueError(f"feature width {rows.shape[1]} does not match model width {bank.dim}")
    return expit(_augment(rows) @ bank.weights.T)


def apply_threshold(probabilities: np.ndarray, t: float, vocabulary: ConceptVocabulary, ids: Sequence[str]) -> PredictionSet:
    """Predict every concept whose probability is at least ``t``."""
    if not 0.0 < t < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return PredictionSet.from_bits(ids, probabilities >= t, vocabulary)


def _score(pred_bits: np.ndarray, truth_bits: np.ndarray, metric: str) -> float:
    if metric == MACRO:
        return concept_scores(pred_bits, truth_bits).mean
    if metric == SAMPLES:
        return sample_scores(pred_bits, truth_bits).mean
    raise ValueError(f"unknown selection metric {metric!r}")


@dataclass
class SweepReport:
    thresholds: tuple[float, ...]
    epoch_scores: list[list[float]] = field(default_factory=list)
    best_epoch: int = -1
    best_threshold: float = float("nan")
    best_score: float = -1.0
    selection_metric: str = MACRO

    def to_text(self) -> str:
        head = "epoch\t" + "\t".join(f"{t:g}" for t in self.thresholds)
        body = [f"{e + 1}\t" + "\t".join(f"{s:.5f}" for s in row) for e, row in enumerate(self.epoch_scores)]
        tail = [
            f"# selection_metric={self.selection_metric}",
            f"# best_epoch={self.best_epoch + 1}",
            f"# best_threshold={self.best_threshold:g}",
            f"# best_score={self.best_score:.5f}",
        ]
        return "\n".join([head, *body, *tail]) + "\n"


@dataclass(frozen=True)
class LinearTrainConfig:
    ftrl: FtrlParams = field(default_factory=FtrlParams)
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    batch_size: int = 128
    max_epochs: int = 50
    patience: int = 3
    selection_metric: str = MACRO
    per_example: bool = False
    seed: int = 0


def train_linear_bank(
    train_x: FeatureMatrix,
    train_y: LabelMatrix,
    valid_x: FeatureMatrix,
    valid_y: LabelMatrix,
    cfg: LinearTrainConfig | None = None,
) -> tuple[LinearModelBank, SweepReport]:
    """Train one logistic model per vocabulary concept with early stopping on validation F1.

    After every epoch all thresholds are scored on the validation split; training
    stops once the best score has failed to improve for ``patience`` epochs and
    the bank from the best epoch is returned with its threshold.
    """
    cfg = cfg or LinearTrainConfig()
    vocab = train_y.vocabulary
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    if valid_y.vocabulary.concepts != vocab.concepts:
        raise ValueError("train and validation label matrices use different vocabularies")
    if train_x.dim != valid_x.dim:
        raise ValueError(f"feature widths differ: {train_x.dim} vs {valid_x.dim}")
    xt = train_x.select(train_y.ids).rows.astype(np.float64)
    yt = train_y.bits.astype(np.float64)
    xv = valid_x.select(valid_y.ids).rows.astype(np.float64)
    yv = valid_y.bits

    rng = np.random.default_rng(cfg.seed)
    state = FtrlState.zeros(len(vocab), train_x.dim, cfg.ftrl)
    report = SweepReport(tuple(cfg.thresholds), selection_metric=cfg.selection_metric)
    best_weights = ftrl_weights(state.z, state.n, state.params)
    stale = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(xt))
        if cfg.per_example:
            for i in order:
                ftrl_batch_update(state, xt[i : i + 1], yt[i : i + 1])
        else:
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                ftrl_batch_update(state, xt[idx], yt[idx])
        weights = ftrl_weights(state.z, state.n, state.params)
        probs = expit(_augment(xv) @ weights.T)
        scores = [_score(probs >= t, yv, cfg.selection_metric) for t in cfg.thresholds]
        report.epoch_scores.append(scores)
        j = int(np.argmax(scores))
        log.debug("epoch %d best %.5f at t=%g", epoch + 1, scores[j], cfg.thresholds[j])
        if scores[j] > report.best_score:
            report.best_score = scores[j]
            report.best_threshold = cfg.thresholds[j]
            report.best_epoch = epoch
            best_weights = weights
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return LinearModelBank(vocab, best_weights, report.best_threshold), report


def knn_indices(train_rows: np.ndarray, query_rows: np.ndarray, k: int, chunk: int = 1024) -> np.ndarray:
    """Indices of the k nearest training rows per query (Euclidean; lower index wins ties)."""
    train_rows = np.asarray(train_rows, dtype=np.float64)
    query_rows = np.asarray(query_rows, dtype=np.float64)
    if len(train_rows) == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= len(train_rows):
        raise ValueError(f"k={k} outside [1, {len(train_rows)}]")
    if train_rows.shape[1] != query_rows.shape[1]:
        raise ValueError("feature widths differ")
    out = np.empty((len(query_rows), k), dtype=np.int64)
    for start in range(0, len(query_rows), chunk):
        d2 = cdist(query_rows[start : start + chunk], train_rows, "sqeuclidean")
        out[start : start + chunk] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def _union_bits(neighbors: np.ndarray, label_bits: np.ndarray, k: int) -> np.ndarray:
    return label_bits[neighbors[:, :k]].any(axis=1)


def knn_vote_scores(neighbors: np.ndarray, label_bits: np.ndarray, k: int) -> np.ndarray:
    """Fraction of the k neighbours carrying each concept; a ranking score for AUC."""
    return label_bits[neighbors[:, :k]].mean(axis=1)


def knn_predict(
    train_features: FeatureMatrix,
    train_labels: LabelMatrix,
    query_features: FeatureMatrix,
    k: int,
) -> PredictionSet:
    """Union of the concept sets of the k nearest training images."""
    xt = train_features.select(train_labels.ids).rows
    nn = knn_indices(xt, query_features.rows, k)
    bits = _union_bits(nn, train_labels.bits, k)
    return PredictionSet.from_bits(query_features.ids, bits, train_labels.vocabulary)


@dataclass
class KSelection:
    best_k: int
    scores: dict[int, float]
    selection_metric: str = MACRO

    def to_text(self) -> str:
        lines = ["k\tF1"] + [f"{k}\t{s:.5f}" for k, s in self.scores.items()]
        lines.append(f"# selection_metric={self.selection_metric}")
        lines.append(f"# best_k={self.best_k}")
        return "\n".join(lines) + "\n"


def knn_select_k(
    train_features: FeatureMatrix,
    train_labels: LabelMatrix,
    valid_features: FeatureMatrix,
    valid_labels: LabelMatrix,
    k_candidates: Sequence[int] = DEFAULT_K_CANDIDATES,
    selection_metric: str = MACRO,
) -> KSelection:
    """Score each candidate k on validation; the smallest k wins ties."""
    if not k_candidates:
        raise ValueError("no k candidates")
    xt = train_features.select(train_labels.ids).rows
    xv = valid_features.select(valid_labels.ids).rows
    nn = knn_indices(xt, xv, max(k_candidates))
    scores = {}
    for k in sorted(set(k_candidates)):
        scores[k] = _score(_union_bits(nn, train_labels.bits, k), valid_labels.bits, selection_metric)
    best = min(scores, key=lambda k: (-scores[k], k))
    return KSelection(best, scores, selection_metric)
