import math

import numpy as np
import pytest
from oracles import finite_difference_error

from conceptrep.neuralrep import (
    SDAE,
    VAE,
    AdamState,
    CheckpointFormatError,
    DenseNetConfig,
    SparsityConfig,
    TrainingDiverged,
    TrainSchedule,
    adam_step,
    batch_stream,
    encode,
    init_params,
    kl_to_unit_normal,
    load_checkpoint,
    lr_at_step,
    reconstruction_mse,
    save_checkpoint,
    sdae_loss,
    train_autoencoder,
    vae_loss,
)


def test_sdae_loss_fixture():
    out = sdae_loss([0.0, 0.0], [1.0, 1.0], [2.0, 3.0], s=1e-4, r=2)
    assert out.loss == 1.0005
    assert out.reconstruction == 1.0 and out.penalty == pytest.approx(5e-4)


def test_kl_fixture():
    assert kl_to_unit_normal([0.0], [1.0]) == pytest.approx(0.5 * (math.e - 2), abs=1e-9)
    assert kl_to_unit_normal(np.zeros(4), np.zeros(4)) == 0.0


def test_vae_loss_rejects_non_finite_log_var():
    with pytest.raises(FloatingPointError):
        vae_loss([0.0], [np.inf], [0.0], [0.0])


@pytest.mark.parametrize("kind", [SDAE, VAE])
@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(kind, seed):
    assert finite_difference_error(kind, seed) <= 1e-4


def test_sdae_code_is_non_negative_and_vae_code_is_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 8))
    cfg = DenseNetConfig(8, (6,), 4, SDAE)
    assert np.all(encode(init_params(cfg, rng), cfg, x) >= 0)
    vcfg = DenseNetConfig(8, (6,), 4, VAE)
    assert encode(init_params(vcfg, rng), vcfg, x).shape == (5, 4)


def test_learning_rate_schedule():
    sched = TrainSchedule(total_steps=2000)
    assert lr_at_step(sched, 999) == 0.0005
    assert lr_at_step(sched, 1000) == pytest.approx(0.0001)
    with pytest.raises(ValueError):
        lr_at_step(sched, 2000)


def test_adam_first_step_moves_by_lr():
    p, g = [np.array([1.0, -2.0])], [np.array([0.3, -5.0])]
    new, state = adam_step(p, g, AdamState.zeros_like(p), 0.01)
    np.testing.assert_allclose(new[0], [0.99, -1.99], atol=1e-6)
    assert state.t == 1
    np.testing.assert_array_equal(p[0], [1.0, -2.0])
    with pytest.raises(FloatingPointError):
        adam_step(p, [np.array([np.nan, 0.0])], state, 0.01)


def _toy_data(n=64, d=16, seed=0):
    rng = np.random.default_rng(seed)
    basis = rng.normal(size=(3, d))
    return np.tanh(rng.normal(size=(n, 3)) @ basis * 0.5)


@pytest.mark.parametrize("kind", [SDAE, VAE])
def test_training_reduces_reconstruction_and_is_reproducible(kind):
    data = _toy_data()
    cfg = DenseNetConfig(16, (32,), 8, kind)
    sched = TrainSchedule(base_lr=0.005, batch_size=16, total_steps=300, seed=3)

    def run():
        return train_autoencoder(batch_stream(data, 16, np.random.default_rng(1)), cfg, sched, SparsityConfig(1e-4, 0.05))

    a, b = run(), run()
    if kind == SDAE:
        assert np.mean(a.reconstruction[-20:]) < 0.5 * a.reconstruction[0]
    else:
        # the KL term dominates at this width, so only the total is expected to fall
        assert np.mean(a.losses[-20:]) < np.mean(a.losses[:20])
    np.testing.assert_array_equal(a.params.flat()[0], b.params.flat()[0])
    assert a.learning_rates[0] == 0.005 and a.learning_rates[-1] == pytest.approx(0.001)


def test_divergence_reports_step():
    data = _toy_data() * 1e200
    cfg = DenseNetConfig(16, (), 4, SDAE)
    with pytest.raises(TrainingDiverged) as exc, np.errstate(all="ignore"):
        train_autoencoder(batch_stream(data, 8, np.random.default_rng(0)), cfg, TrainSchedule(total_steps=5))
    assert exc.value.step == 0


def test_checkpoint_round_trip(tmp_path):
    cfg = DenseNetConfig(12, (7, 5), 3, VAE)
    params = init_params(cfg, np.random.default_rng(0))
    sched = TrainSchedule(total_steps=10, seed=9)
    save_checkpoint(tmp_path / "m.aenc", params, cfg, sched)
    p2, c2, s2 = load_checkpoint(tmp_path / "m.aenc")
    assert c2 == cfg and s2 == sched
    x = np.random.default_rng(1).normal(size=(4, 12))
    np.testing.assert_allclose(reconstruction_mse(p2, c2, x), reconstruction_mse(params, cfg, x), rtol=1e-5)
    raw = (tmp_path / "m.aenc").read_bytes()
    (tmp_path / "bad.aenc").write_bytes(raw[:-5])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "bad.aenc")
