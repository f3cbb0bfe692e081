import json

import pytest

from conceptrep.config import ConfigError, RunConfig, from_dict, load_config


def test_defaults_are_the_reference_values():
    cfg = RunConfig(seed=0)
    assert cfg.codebook.k == 512 and cfg.codebook.n_files == 3000
    ae = cfg.autoencoder
    assert (ae.noise_sigma, ae.sparsity, ae.base_lr, ae.batch_size, ae.resize, ae.crop) == (0.05, 0.0001, 0.0005, 64, 96, 64)
    c = cfg.classifier
    assert (c.alpha, c.lambda1, c.batch_size) == (0.05, 0.001, 128)
    assert c.thresholds == [0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2]
    assert cfg.knn.k_candidates == [1, 2, 3, 4, 5]


def test_seed_is_mandatory():
    with pytest.raises(ConfigError):
        RunConfig().validate()
    RunConfig(seed=3).validate()


def test_unknown_keys_and_bad_values_rejected():
    with pytest.raises(ConfigError):
        from_dict({"seed": 1, "codebok": {}})
    with pytest.raises(ConfigError):
        from_dict({"seed": 1, "metrics": {"selection": "micro"}}).validate()


def test_file_env_and_override_precedence(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 5, "codebook": {"k": 64}, "paths": {"train_manifest": "file.tsv"}}))
    monkeypatch.setenv("CONCEPTREP_TRAIN_MANIFEST", "env.tsv")
    cfg = load_config(p, {"seed": 9})
    assert cfg.seed == 9 and cfg.codebook.k == 64 and cfg.paths.train_manifest == "env.tsv"


def test_digest_is_canonical():
    a = from_dict({"seed": 1, "codebook": {"k": 8}})
    b = from_dict({"codebook": {"k": 8}, "seed": 1})
    assert a.digest() == b.digest()
    assert a.digest() != from_dict({"seed": 2, "codebook": {"k": 8}}).digest()
    assert json.loads(a.to_json())["codebook"]["k"] == 8
