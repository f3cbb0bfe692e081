"""Compositions of the library modules that the CLI subcommands front."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import keypoints
from .codebook import Codebook, kmeans, quantize_to_bow, sample_template_descriptors
from .config import RunConfig
from .dataset import ImageRecord, LabelMatrix, build_label_matrix, select_frequent_concepts
from .features import FeatureMatrix
from .imgproc import RasterImage, crop_variants, normalize_pixels, resize, resize_shorter_side, to_greyscale
from .neuralrep import (
    DenseNetConfig,
    ModelParams,
    SparsityConfig,
    TrainResult,
    TrainSchedule,
    batch_stream,
    encode,
    train_autoencoder,
)

log = logging.getLogger(__name__)

KIND_OF = {"orb-bow": keypoints.ORB, "sift-bow": keypoints.SIFT}


def load_image(path: str | Path) -> RasterImage:
    """Decode an image file to a float raster on the byte scale (alpha dropped)."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("1", "LA", "I", "I;16", "F"):
            im = im.convert("L")
        elif im.mode != "L" and im.mode != "RGB":
            im = im.convert("RGB")
        return RasterImage(np.asarray(im, dtype=np.float64))


def detector_params(cfg: RunConfig, kind: str):
    cb = cfg.codebook
    if kind == keypoints.ORB:
        return keypoints.OrbParams(fast_threshold=cb.fast_threshold, max_keypoints=cb.max_keypoints)
    return keypoints.SiftParams(contrast_threshold=cb.contrast_threshold, max_keypoints=cb.max_keypoints)


def _describe_one(args) -> keypoints.DescriptorSet:
    path, kind, params = args
    return keypoints.extract_with_fallback(load_image(path), kind, params)


def describe_records(records: Sequence[ImageRecord], kind: str, params, jobs: int = 1) -> list[keypoints.DescriptorSet]:
    work = [(r.path, kind, params) for r in records]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_describe_one, work, chunksize=16))
    return [_describe_one(w) for w in work]


def build_codebook(records: Sequence[ImageRecord], cfg: RunConfig, jobs: int = 1) -> Codebook:
    kind = KIND_OF[cfg.representation]
    params = detector_params(cfg, kind)
    rng = np.random.default_rng(cfg.seed)
    n_files = min(cfg.codebook.n_files, len(records))

    def extract(rec):
        return _describe_one((rec.path, kind, params))

    if jobs > 1:
        chosen = np.sort(np.random.default_rng(cfg.seed).choice(len(records), size=n_files, replace=False))
        sets = describe_records([records[i] for i in chosen], kind, params, jobs)
        lookup = {records[i].id: s for i, s in zip(chosen, sets)}
        pool = sample_template_descriptors(records, lambda r: lookup[r.id], n_files, rng)
    else:
        pool = sample_template_descriptors(records, extract, n_files, rng)
    log.info("template pool: %d descriptors from %d files", len(pool), n_files)
    cb = kmeans(pool, cfg.codebook.k, rng, cfg.codebook.max_iters, cfg.codebook.tol, kind=kind, seed=int(cfg.seed))
    return cb


def bow_features(
    records: Sequence[ImageRecord], cb: Codebook, cfg: RunConfig, jobs: int = 1
) -> tuple[FeatureMatrix, int]:
    """BoW rows per record and the number of images that needed the detection fallback."""
    params = detector_params(cfg, cb.kind)
    sets = describe_records(records, cb.kind, params, jobs)
    rows = np.array([quantize_to_bow(s, cb, cfg.codebook.normalization).bins for s in sets]).reshape(len(sets), cb.k)
    tag = f"{cb.kind.lower()}-bow"
    return FeatureMatrix(tuple(r.id for r in records), rows, tag), sum(s.fallback_stage > 0 for s in sets)


def _prepare(img: RasterImage, greyscale: bool) -> RasterImage:
    return to_greyscale(img) if greyscale else img


def ae_training_inputs(records: Sequence[ImageRecord], cfg: RunConfig) -> np.ndarray:
    """All nine normalized crops of every record, flattened row-wise."""
    ae = cfg.autoencoder
    rows = []
    for rec in records:
        img = _prepare(load_image(rec.path), ae.greyscale)
        for crop in crop_variants(resize_shorter_side(img, ae.resize), ae.crop):
            rows.append(normalize_pixels(crop).flat())
    return np.array(rows)


def ae_inference_inputs(records: Sequence[ImageRecord], cfg: RunConfig) -> np.ndarray:
    ae = cfg.autoencoder
    return np.array(
        [normalize_pixels(resize(_prepare(load_image(r.path), ae.greyscale), ae.crop, ae.crop)).flat() for r in records]
    )


def ae_setup(cfg: RunConfig, input_dim: int, channels: int) -> tuple[DenseNetConfig, TrainSchedule, SparsityConfig, float]:
    ae = cfg.autoencoder
    net = DenseNetConfig(input_dim, tuple(ae.layer_sizes), ae.code_dim, ae.model_kind.upper())
    schedule = TrainSchedule(ae.base_lr, ae.beta1, 0.999, ae.batch_size, ae.total_steps, ae.decay_factor, int(cfg.seed))
    r = ae.crop * ae.crop * (channels if ae.r_counts_channels else 1)
    return net, schedule, SparsityConfig(ae.sparsity, ae.noise_sigma), float(r)


def train_ae(records: Sequence[ImageRecord], cfg: RunConfig) -> tuple[TrainResult, DenseNetConfig, TrainSchedule]:
    data = ae_training_inputs(records, cfg)
    channels = data.shape[1] // (cfg.autoencoder.crop**2)
    net, schedule, sparsity, r = ae_setup(cfg, data.shape[1], channels)
    stream = batch_stream(data, schedule.batch_size, np.random.default_rng([int(cfg.seed), 1]))
    return train_autoencoder(stream, net, schedule, sparsity, r), net, schedule


def encode_records(records: Sequence[ImageRecord], params: ModelParams, net: DenseNetConfig, cfg: RunConfig) -> FeatureMatrix:
    x = ae_inference_inputs(records, cfg)
    return FeatureMatrix(tuple(r.id for r in records), encode(params, net, x), net.model_kind.lower())


def full_truth(split: Sequence[ImageRecord]) -> LabelMatrix:
    """Ground truth over every concept present in the split (no vocabulary restriction)."""
    vocab = select_frequent_concepts(split, 10**9)
    return build_label_matrix(split, vocab, drop_empty=False)
