"""Slow, obviously-correct reference implementations used to check the fast code paths."""

from __future__ import annotations

import itertools

import numpy as np

from conceptrep.neuralrep import SDAE, DenseNetConfig, ModelParams, SparsityConfig, init_params, loss_and_grads

CIRCLE = [(-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
          (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1)]


def fast_brute(img: np.ndarray, threshold: float, arc: int = 9) -> np.ndarray:
    """Per-pixel segment test: some run of ``arc`` contiguous circle pixels all brighter or all darker."""
    h, w = img.shape
    out = np.zeros((h, w), dtype=bool)
    for y in range(3, h - 3):
        for x in range(3, w - 3):
            c = img[y, x]
            ring = [img[y + dy, x + dx] for dy, dx in CIRCLE]
            for test in (lambda v: v > c + threshold, lambda v: v < c - threshold):
                flags = [test(v) for v in ring]
                if any(all(flags[(s + i) % 16] for i in range(arc)) for s in range(16)):
                    out[y, x] = True
    return out


def kmeans_exhaustive_2(points: np.ndarray) -> tuple[float, np.ndarray]:
    """Best two-cluster objective and sorted centroids over every bipartition."""
    pts = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    best = (np.inf, None)
    n = len(pts)
    for mask in itertools.product([False, True], repeat=n):
        m = np.array(mask)
        if m.all() or not m.any():
            continue
        a, b = pts[m].mean(axis=0), pts[~m].mean(axis=0)
        obj = ((pts[m] - a) ** 2).sum() + ((pts[~m] - b) ** 2).sum()
        if obj < best[0]:
            best = (obj, np.array(sorted([a, b], key=lambda v: tuple(v))))
    return best


def nearest_centroid_brute(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = []
    for p in points:
        best, best_j = np.inf, -1
        for j, c in enumerate(centroids):
            d = float(((p - c) ** 2).sum())
            if d < best:
                best, best_j = d, j
        out.append(best_j)
    return np.array(out)


def knn_union_brute(train: np.ndarray, labels: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """All-pairs distances, neighbours ordered by (distance, index), union of their label rows."""
    out = np.zeros((len(query), labels.shape[1]), dtype=bool)
    for qi, q in enumerate(query):
        d = [(float(((q - t) ** 2).sum()), i) for i, t in enumerate(train)]
        d.sort()
        for _, i in d[:k]:
            out[qi] |= labels[i]
    return out


def set_f1(pred: set, truth: set) -> float:
    if not pred and not truth:
        return 1.0
    tp = len(pred & truth)
    return 2 * tp / (len(pred) + len(truth))


def auc_pairs(scores, labels) -> float:
    """Probability a random positive outranks a random negative, ties counted half."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def finite_difference_error(kind: str, seed: int, h: float = 1e-6) -> float:
    """Worst per-tensor relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    d_in = int(rng.integers(3, 7))
    hidden = tuple(int(v) for v in rng.integers(2, 6, size=int(rng.integers(0, 3))))
    code = int(rng.integers(2, 5))
    cfg = DenseNetConfig(d_in, hidden, code, kind)
    params = init_params(cfg, rng, std=0.5)
    # biases away from zero keep ReLUs off their kinks
    params = ModelParams.from_flat([p + rng.normal(0, 0.3, p.shape) if p.ndim == 1 else p for p in params.flat()], cfg)
    batch = int(rng.integers(1, 5))
    x = rng.normal(size=(batch, d_in))
    x_in = x + rng.normal(0, 0.05, size=x.shape)
    eps = rng.standard_normal((batch, code))
    sparsity = SparsityConfig(s=0.01)

    def loss(p):
        return loss_and_grads(p, cfg, x, x_in if kind == SDAE else x, sparsity, None, eps).loss

    analytic = loss_and_grads(params, cfg, x, x_in if kind == SDAE else x, sparsity, None, eps).grads.flat()
    flat = [a.copy() for a in params.flat()]
    worst = 0.0
    for t, tensor in enumerate(flat):
        num = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            orig = tensor[idx]
            tensor[idx] = orig + h
            up = loss(ModelParams.from_flat(flat, cfg))
            tensor[idx] = orig - h
            down = loss(ModelParams.from_flat(flat, cfg))
            tensor[idx] = orig
            num[idx] = (up - down) / (2 * h)
        scale = max(np.abs(num).max(), np.abs(analytic[t]).max(), 1e-6)
        worst = max(worst, float(np.abs(num - analytic[t]).max() / scale))
    return worst
