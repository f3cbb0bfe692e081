"""Command-line front end: one subcommand per pipeline stage.

Every artifact is written atomically next to a ``<artifact>.provenance.json``
sidecar recording the inputs, the effective configuration, its digest and the
seed. Failures print one JSON error line on stderr, exit non-zero, and leave
no partial output behind.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Iterator

import numpy as np

from . import __version__
from .codebook import Codebook
from .concept_detect import (
    LinearModelBank,
    LinearTrainConfig,
    FtrlParams,
    apply_threshold,
    knn_indices,
    knn_select_k,
    knn_vote_scores,
    predict_probabilities,
    train_linear_bank,
)
from .config import RunConfig, load_config
from .dataset import ConceptVocabulary, build_label_matrix, load_manifest, select_frequent_concepts
from .features import FeatureMatrix, fuse, read_features, write_features_csv
from .metrics import EvalReport, evaluate_predictions, render_results_table
from .neuralrep import checkpoint_bytes, load_checkpoint
from .predictions import PredictionSet, read_predictions, write_predictions
from .projection import project
from . import pipeline

log = logging.getLogger("conceptrep")


class CliError(RuntimeError):
    pass


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Collects temporary files and promotes them only when the command succeeds."""

    def __init__(self):
        self._pending: list[tuple[Path, Path]] = []

    def path(self, final: str | Path) -> Path:
        final = Path(final)
        final.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{final.name}.", suffix=".tmp", dir=final.parent)
        os.close(fd)
        self._pending.append((Path(tmp), final))
        return Path(tmp)

    def write_bytes(self, final: str | Path, data: bytes) -> None:
        self.path(final).write_bytes(data)

    def write_text(self, final: str | Path, text: str) -> None:
        self.path(final).write_text(text, encoding="utf-8")

    def commit(self) -> list[Path]:
        done = []
        for tmp, final in self._pending:
            os.replace(tmp, final)
            done.append(final)
        self._pending.clear()
        return done

    def discard(self) -> None:
        for tmp, _ in self._pending:
            with contextlib.suppress(FileNotFoundError):
                tmp.unlink()
        self._pending.clear()


@contextlib.contextmanager
def _outputs() -> Iterator[Outputs]:
    out = Outputs()
    try:
        yield out
    except BaseException:
        out.discard()
        raise
    out.commit()


def _provenance(out: Outputs, artifact: str | Path, command: str, cfg: RunConfig, inputs: dict[str, str | Path | None], extra: dict | None = None) -> None:
    record = {
        "command": command,
        "version": __version__,
        "artifact": str(artifact),
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in inputs.items() if v},
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        record.update(extra)
    out.write_text(f"{artifact}.provenance.json", json.dumps(record, indent=2, sort_keys=True) + "\n")


def _records(manifest: str | None, cfg: RunConfig, fallback: str, what: str):
    path = manifest or fallback
    if not path:
        raise CliError(f"no {what} manifest given (flag or config paths)")
    return load_manifest(path, cfg.paths.image_root or Path(path).parent / "images"), path


def _vocabulary(args, cfg: RunConfig) -> tuple[ConceptVocabulary, str]:
    if getattr(args, "vocab", None):
        return ConceptVocabulary.load(args.vocab), args.vocab
    train, path = _records(getattr(args, "train_manifest", None), cfg, cfg.paths.train_manifest, "training")
    return select_frequent_concepts(train, cfg.classifier.concepts), path


# --- subcommands -----------------------------------------------------------


def cmd_codebook(args, cfg: RunConfig) -> None:
    if cfg.representation not in pipeline.KIND_OF:
        raise CliError("codebook needs representation orb-bow or sift-bow")
    records, manifest = _records(args.manifest, cfg, cfg.paths.train_manifest, "training")
    cb = pipeline.build_codebook(records, cfg, args.jobs)
    with _outputs() as out:
        out.write_bytes(args.out, cb.to_bytes())
        _provenance(out, args.out, "codebook", cfg, {"manifest": manifest}, {"iterations": cb.iterations, "objective": cb.objective_history[-1]})
    log.info("codebook k=%d written to %s", cb.k, args.out)


def cmd_bow(args, cfg: RunConfig) -> None:
    cb = Codebook.load(args.codebook)
    records, manifest = _records(args.manifest, cfg, "", "image")
    feats, fallbacks = pipeline.bow_features(records, cb, cfg, args.jobs)
    with _outputs() as out:
        out.write_bytes(args.out, feats.to_bytes())
        if args.csv:
            write_features_csv(out.path(args.csv), feats)
        _provenance(out, args.out, "bow", cfg, {"codebook": args.codebook, "manifest": manifest}, {"fallback_images": fallbacks})


def cmd_train_ae(args, cfg: RunConfig) -> None:
    records, manifest = _records(args.manifest, cfg, cfg.paths.train_manifest, "training")
    result, net, schedule = pipeline.train_ae(records, cfg)
    with _outputs() as out:
        out.write_bytes(args.out, checkpoint_bytes(result.params, net, schedule))
        if args.trace:
            lines = ["step\tlr\tloss\treconstruction"]
            lines += [f"{i}\t{lr!r}\t{l!r}\t{r!r}" for i, (lr, l, r) in enumerate(zip(result.learning_rates, result.losses, result.reconstruction))]
            out.write_text(args.trace, "\n".join(lines) + "\n")
        _provenance(out, args.out, "train-ae", cfg, {"manifest": manifest})


def cmd_encode(args, cfg: RunConfig) -> None:
    params, net, _ = load_checkpoint(args.checkpoint)
    records, manifest = _records(args.manifest, cfg, "", "image")
    feats = pipeline.encode_records(records, params, net, cfg)
    with _outputs() as out:
        out.write_bytes(args.out, feats.to_bytes())
        _provenance(out, args.out, "encode", cfg, {"checkpoint": args.checkpoint, "manifest": manifest})


def cmd_fuse(args, cfg: RunConfig) -> None:
    fused = fuse(read_features(args.a), read_features(args.b))
    with _outputs() as out:
        out.write_bytes(args.out, fused.to_bytes())
        _provenance(out, args.out, "fuse", cfg, {"a": args.a, "b": args.b})


def _linear_config(cfg: RunConfig) -> LinearTrainConfig:
    c = cfg.classifier
    return LinearTrainConfig(
        FtrlParams(c.alpha, c.beta, c.lambda1, c.lambda2),
        tuple(c.thresholds),
        c.batch_size,
        c.max_epochs,
        c.patience,
        cfg.metrics.selection,
        c.per_example,
        int(cfg.seed),
    )


def cmd_train_linear(args, cfg: RunConfig) -> None:
    train, train_manifest = _records(args.train_manifest, cfg, cfg.paths.train_manifest, "training")
    valid, valid_manifest = _records(args.valid_manifest, cfg, cfg.paths.valid_manifest, "validation")
    vocab = select_frequent_concepts(train, cfg.classifier.concepts)
    ytrain = build_label_matrix(train, vocab, drop_empty=False)
    yvalid = build_label_matrix(valid, vocab, drop_empty=True)
    bank, sweep = train_linear_bank(read_features(args.train_features), ytrain, read_features(args.valid_features), yvalid, _linear_config(cfg))
    with _outputs() as out:
        out.write_bytes(args.out, bank.to_bytes())
        out.write_text(f"{args.out}.sweep.tsv", sweep.to_text())
        vocab.save(out.path(f"{args.out}.vocab.txt"))
        _provenance(
            out,
            args.out,
            "train-linear",
            cfg,
            {"train_features": args.train_features, "train_manifest": train_manifest, "valid_features": args.valid_features, "valid_manifest": valid_manifest},
            {"best_epoch": sweep.best_epoch + 1, "threshold": bank.threshold, "validation_score": sweep.best_score},
        )
    log.info("bank: threshold %g, validation %s F1 %.5f", bank.threshold, cfg.metrics.selection, sweep.best_score)


def cmd_predict_linear(args, cfg: RunConfig) -> None:
    bank = LinearModelBank.load(args.bank)
    feats = read_features(args.features)
    t = args.threshold if args.threshold is not None else bank.threshold
    probs = predict_probabilities(bank, feats)
    preds = apply_threshold(probs, t, bank.vocabulary, feats.ids)
    with _outputs() as out:
        write_predictions(out.path(args.out), preds, bank.vocabulary)
        if args.scores:
            out.write_bytes(args.scores, FeatureMatrix(feats.ids, probs, "scores:linear").to_bytes())
        _provenance(out, args.out, "predict-linear", cfg, {"bank": args.bank, "features": args.features}, {"operating_point": {"kind": "threshold", "value": t}})


def cmd_knn(args, cfg: RunConfig) -> None:
    train, train_manifest = _records(args.train_manifest, cfg, cfg.paths.train_manifest, "training")
    vocab = select_frequent_concepts(train, cfg.classifier.concepts)
    ytrain = build_label_matrix(train, vocab, drop_empty=False)
    xtrain = read_features(args.train_features)
    inputs = {"train_features": args.train_features, "train_manifest": train_manifest, "query_features": args.query_features}
    table = None
    if args.k is not None:
        k = args.k
    else:
        valid, valid_manifest = _records(args.valid_manifest, cfg, cfg.paths.valid_manifest, "validation")
        yvalid = build_label_matrix(valid, vocab, drop_empty=True)
        sel = knn_select_k(xtrain, ytrain, read_features(args.valid_features), yvalid, cfg.knn.k_candidates, cfg.metrics.selection)
        k, table = sel.best_k, sel.to_text()
        inputs.update(valid_features=args.valid_features, valid_manifest=valid_manifest)
    query = read_features(args.query_features)
    nn = knn_indices(xtrain.select(ytrain.ids).rows, query.rows, k)
    bits = ytrain.bits[nn].any(axis=1)
    preds = PredictionSet.from_bits(query.ids, bits, vocab)
    with _outputs() as out:
        write_predictions(out.path(args.out), preds, vocab)
        if table:
            out.write_text(f"{args.out}.ksweep.tsv", table)
        if args.scores:
            out.write_bytes(args.scores, FeatureMatrix(query.ids, knn_vote_scores(nn, ytrain.bits, k), "scores:knn").to_bytes())
        _provenance(out, args.out, "knn", cfg, inputs, {"operating_point": {"kind": "k", "value": k}})


def _operating_point(pred_path: str) -> tuple[str, float]:
    side = Path(f"{pred_path}.provenance.json")
    if side.exists():
        op = json.loads(side.read_text(encoding="utf-8")).get("operating_point")
        if op:
            return op["kind"], float(op["value"])
    return "threshold", float("nan")


def cmd_evaluate(args, cfg: RunConfig) -> None:
    preds = read_predictions(args.predictions)
    records, manifest = _records(args.manifest, cfg, "", "ground-truth")
    if cfg.metrics.truth == "full":
        truth = pipeline.full_truth(records)
        vocab_path = None
    else:
        vocab, vocab_path = _vocabulary(args, cfg)
        truth = build_label_matrix(records, vocab, drop_empty=True)
    by_id = preds.as_dict()
    missing = [i for i in truth.ids if i not in by_id]
    if missing:
        raise CliError(f"{len(missing)} evaluated images have no prediction, e.g. {missing[:5]}")
    preds = PredictionSet(truth.ids, tuple(by_id[i] for i in truth.ids))
    scores = None
    if args.scores:
        sfm = read_features(args.scores).select(truth.ids)
        src_vocab = ConceptVocabulary.load(args.scores_vocab) if args.scores_vocab else truth.vocabulary
        index = src_vocab.index()
        scores = np.zeros((len(truth), len(truth.vocabulary)))
        for j, c in enumerate(truth.vocabulary.concepts):
            if c in index:
                scores[:, j] = sfm.rows[:, index[c]]
    kind, value = _operating_point(args.predictions)
    report = evaluate_predictions(preds, truth, scores, args.label or cfg.representation, kind, value, cfg.metrics.selection)
    with _outputs() as out:
        out.write_text(args.out, report.to_text())
        out.write_text(f"{args.out}.table.txt", render_results_table([report]))
        _provenance(out, args.out, "evaluate", cfg, {"predictions": args.predictions, "manifest": manifest, "vocabulary": vocab_path, "scores": args.scores})
    sys.stdout.write(render_results_table([report]))


def cmd_project(args, cfg: RunConfig) -> None:
    feats = read_features(args.features)
    records, manifest = _records(args.manifest, cfg, "", "image")
    vocab, vocab_path = _vocabulary(args, cfg)
    labels = build_label_matrix(records, vocab, drop_empty=False)
    top3 = cfg.projection.top3 or list(vocab.concepts[:3])
    proj, basis = project(feats, labels, top3, cfg.projection.percentile)
    with _outputs() as out:
        proj.write_csv(out.path(args.out))
        _provenance(
            out,
            args.out,
            "project",
            cfg,
            {"features": args.features, "manifest": manifest, "vocabulary": vocab_path},
            {"explained_ratio": [float(v) for v in basis.explained_ratio], "dropped_outliers": len(proj.dropped_outliers), "top3": list(top3)},
        )


def cmd_report(args, cfg: RunConfig) -> None:
    reports = []
    for item in args.reports:
        valid_path, _, test_path = item.partition(":")
        rep = EvalReport.load(valid_path)
        if test_path:
            rep = replace(rep, f1_test=EvalReport.load(test_path).f1_samples)
        reports.append(rep)
    table = render_results_table(reports)
    with _outputs() as out:
        out.write_text(args.out, table)
    sys.stdout.write(table)


# --- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; unspecified keys take the reference defaults")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--representation", help="override the config representation")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for image decoding and description")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging; re-raise errors with a traceback")

    p = argparse.ArgumentParser(prog="conceptrep", description="Unsupervised image representations for concept detection.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("codebook", parents=[common], help="learn a visual vocabulary by k-means over sampled descriptors")
    s.add_argument("--manifest", help="training manifest (default: paths.train_manifest)")
    s.add_argument("--out", required=True, help="codebook file to write")
    s.set_defaults(func=cmd_codebook)

    s = sub.add_parser("bow", parents=[common], help="bag-of-visual-words features for a manifest")
    s.add_argument("--codebook", required=True, help="codebook file from the codebook command")
    s.add_argument("--manifest", required=True, help="manifest of the images to describe")
    s.add_argument("--out", required=True, help="feature file to write")
    s.add_argument("--csv", help="also write a CSV export")
    s.set_defaults(func=cmd_bow)

    s = sub.add_parser("train-ae", parents=[common], help="train a dense SDAE or VAE on preprocessed crops")
    s.add_argument("--manifest", help="training manifest (default: paths.train_manifest)")
    s.add_argument("--out", required=True, help="checkpoint file to write")
    s.add_argument("--trace", help="per-step loss trace (TSV)")
    s.set_defaults(func=cmd_train_ae)

    s = sub.add_parser("encode", parents=[common], help="map images to latent codes with a trained checkpoint")
    s.add_argument("--checkpoint", required=True, help="checkpoint file from train-ae")
    s.add_argument("--manifest", required=True, help="manifest of the images to encode")
    s.add_argument("--out", required=True, help="feature file to write")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("fuse", parents=[common], help="early fusion: concatenate two feature files by id")
    s.add_argument("a", help="first feature file (its id order is kept)")
    s.add_argument("b", help="second feature file")
    s.add_argument("--out", required=True, help="fused feature file to write")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("train-linear", parents=[common], help="per-concept FTRL logistic regression with threshold sweep")
    s.add_argument("--train-features", required=True, help="feature file of the training split")
    s.add_argument("--train-manifest", help="training manifest (default: paths.train_manifest)")
    s.add_argument("--valid-features", required=True, help="feature file of the validation split")
    s.add_argument("--valid-manifest", help="validation manifest (default: paths.valid_manifest)")
    s.add_argument("--out", required=True, help="model bank file to write")
    s.set_defaults(func=cmd_train_linear)

    s = sub.add_parser("predict-linear", parents=[common], help="predict concept sets with a model bank")
    s.add_argument("--bank", required=True, help="model bank from train-linear")
    s.add_argument("--features", required=True, help="features of the images to predict")
    s.add_argument("--out", required=True, help="prediction file to write")
    s.add_argument("--scores", help="also write the probabilities as a feature file")
    s.add_argument("--threshold", type=float, help="override the bank's chosen threshold")
    s.set_defaults(func=cmd_predict_linear)

    s = sub.add_parser("knn", parents=[common], help="boolean-sum k nearest neighbour prediction")
    s.add_argument("--train-features", required=True, help="feature file of the training split")
    s.add_argument("--train-manifest", help="training manifest (default: paths.train_manifest)")
    s.add_argument("--valid-features", help="validation features for choosing k")
    s.add_argument("--valid-manifest", help="validation manifest (default: paths.valid_manifest)")
    s.add_argument("--query-features", required=True, help="features of the images to predict")
    s.add_argument("--k", type=int, help="fixed k instead of selecting on validation")
    s.add_argument("--out", required=True, help="prediction file to write")
    s.add_argument("--scores", help="also write neighbour vote fractions as a feature file")
    s.set_defaults(func=cmd_knn)

    s = sub.add_parser("evaluate", parents=[common], help="score a prediction file against a manifest")
    s.add_argument("--predictions", required=True, help="prediction file to score")
    s.add_argument("--manifest", required=True, help="ground-truth manifest of the predicted split")
    s.add_argument("--vocab", help="vocabulary file (default: derived from the training manifest)")
    s.add_argument("--train-manifest", help="training manifest (default: paths.train_manifest)")
    s.add_argument("--scores", help="score feature file for AUC (rows by id)")
    s.add_argument("--scores-vocab", help="vocabulary of the score columns if it differs")
    s.add_argument("--label", help="row label for the results table (default: the config representation)")
    s.add_argument("--out", required=True, help="report file to write")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("project", parents=[common], help="2-D PCA projection coloured by the top three concepts")
    s.add_argument("--features", required=True, help="feature file to project")
    s.add_argument("--manifest", required=True, help="manifest supplying the colouring labels")
    s.add_argument("--vocab", help="vocabulary file (default: derived from the training manifest)")
    s.add_argument("--train-manifest", help="training manifest (default: paths.train_manifest)")
    s.add_argument("--out", required=True, help="CSV (id,x,y,r,g,b) to write")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("report", parents=[common], help="render a comparison table from report files")
    s.add_argument("reports", nargs="+", help="VALID_REPORT[:TEST_REPORT]")
    s.add_argument("--out", required=True, help="table file to write")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.representation:
            overrides["representation"] = args.representation
        cfg = load_config(args.config, overrides)
        if args.command not in ("report", "fuse"):
            cfg.validate()
        args.func(args, cfg)
    except Exception as exc:  # noqa: BLE001 - surfaced as a structured line
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}) + "\n")
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
