"""Run configuration: JSON on disk, dataclasses in memory, reference values as defaults."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .codebook import DEFAULT_K, DEFAULT_TEMPLATE_FILES
from .concept_detect import DEFAULT_K_CANDIDATES, DEFAULT_THRESHOLDS
from .imgproc import DEFAULT_CROP, DEFAULT_RESIZE

REPRESENTATIONS = ("orb-bow", "sift-bow", "sdae", "vae", "external")
PATH_ENV = {
    "train_manifest": "CONCEPTREP_TRAIN_MANIFEST",
    "valid_manifest": "CONCEPTREP_VALID_MANIFEST",
    "test_manifest": "CONCEPTREP_TEST_MANIFEST",
    "image_root": "CONCEPTREP_IMAGE_ROOT",
    "output_dir": "CONCEPTREP_OUTPUT_DIR",
}


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    train_manifest: str = ""
    valid_manifest: str = ""
    test_manifest: str = ""
    image_root: str = ""
    output_dir: str = "runs"


@dataclass
class CodebookConfig:
    k: int = DEFAULT_K
    n_files: int = DEFAULT_TEMPLATE_FILES
    max_iters: int = 100
    tol: float = 1e-4
    normalization: str = "l1"
    fast_threshold: float = 20.0
    contrast_threshold: float = 0.04
    max_keypoints: int = 500


@dataclass
class AutoencoderConfig:
    model_kind: str = "SDAE"
    layer_sizes: list[int] = field(default_factory=lambda: [1024])
    code_dim: int = 512
    resize: int = DEFAULT_RESIZE
    crop: int = DEFAULT_CROP
    greyscale: bool = False
    base_lr: float = 0.0005
    beta1: float = 0.9
    batch_size: int = 64
    total_steps: int = 206000
    decay_factor: float = 0.2
    sparsity: float = 0.0001
    noise_sigma: float = 0.05
    r_counts_channels: bool = False


@dataclass
class ClassifierConfig:
    alpha: float = 0.05
    beta: float = 1.0
    lambda1: float = 0.001
    lambda2: float = 0.0
    batch_size: int = 128
    per_example: bool = False
    thresholds: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    max_epochs: int = 50
    patience: int = 3
    concepts: int = 750


@dataclass
class KnnConfig:
    k_candidates: list[int] = field(default_factory=lambda: list(DEFAULT_K_CANDIDATES))


@dataclass
class MetricsConfig:
    # "macro" averages per concept, "samples" per image
    selection: str = "macro"
    # "vocab" scores only the selected concepts, "full" every concept in the manifest
    truth: str = "vocab"


@dataclass
class ProjectionConfig:
    percentile: float = 99.5
    top3: list[str] = field(default_factory=list)


@dataclass
class RunConfig:
    seed: int | None = None
    representation: str = "orb-bow"
    paths: Paths = field(default_factory=Paths)
    codebook: CodebookConfig = field(default_factory=CodebookConfig)
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    knn: KnnConfig = field(default_factory=KnnConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)

    def validate(self) -> "RunConfig":
        if self.seed is None:
            raise ConfigError("config must set an explicit integer 'seed'")
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(f"representation must be one of {REPRESENTATIONS}")
        if self.codebook.normalization not in ("l1", "max", "none"):
            raise ConfigError("codebook.normalization must be l1, max or none")
        if self.metrics.selection not in ("macro", "samples"):
            raise ConfigError("metrics.selection must be macro or samples")
        if self.metrics.truth not in ("vocab", "full"):
            raise ConfigError("metrics.truth must be vocab or full")
        if not all(0 < t < 1 for t in self.classifier.thresholds):
            raise ConfigError("thresholds must lie in (0, 1)")
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _merge(obj, data: dict[str, Any], where: str):
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {where}{key}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be an object")
            _merge(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, value)
    return obj


def from_dict(data: dict[str, Any]) -> RunConfig:
    return _merge(RunConfig(), data, "")


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Defaults, then the JSON file, then path environment variables, then ``overrides``."""
    cfg = RunConfig()
    if path:
        _merge(cfg, json.loads(Path(path).read_text(encoding="utf-8")), "")
    for key, env in PATH_ENV.items():
        if os.environ.get(env):
            setattr(cfg.paths, key, os.environ[env])
    if overrides:
        _merge(cfg, overrides, "")
    return cfg
