import json

import numpy as np
import numpy.testing as npt
import pytest

from hetmoe import analytics, autodiff as ad, tasks
from hetmoe.encoder import EncoderConfig
from hetmoe.errors import DataError, ModeError, NumericError, ParameterError
from hetmoe.losses import LossWeights
from hetmoe.model import GateConfig, MoEModel
from hetmoe.trainer import (AdamWState, TrainConfig, adamw_step, evaluate, train)


def desk_model(seed, pool=("ffnn", "gru"), mode="classification", frozen=False):
    rng = np.random.default_rng(seed)
    model = MoEModel(EncoderConfig(frozen=frozen),
                     GateConfig(num_experts=len(pool)), list(pool),
                     d_proj=16, d_hid=8, rng=rng, mode=mode, num_classes=2)
    return model, rng


def desk_cfg(**kw):
    base = dict(learning_rate=1e-3, batch_size=16, epochs=2,
                loss_weights=LossWeights())
    base.update(kw)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# AdamW


def test_adamw_zero_learning_rate_keeps_parameters():
    p = ad.parameter([1.0, -2.0])
    state = AdamWState()
    adamw_step({"p": p}, {"p": np.array([0.3, -0.7])}, state,
               desk_cfg(learning_rate=0.0))
    npt.assert_array_equal(p.data, [1.0, -2.0])


def test_adamw_zero_gradient_is_pure_decay():
    p = ad.parameter([2.0])
    cfg = desk_cfg(learning_rate=0.1, weight_decay=0.5)
    adamw_step({"p": p}, {"p": np.array([0.0])}, AdamWState(), cfg)
    npt.assert_allclose(p.data, [2.0 * (1.0 - 0.1 * 0.5)], atol=1e-12)


def test_adamw_first_step_scalar_case():
    # bias-corrected m-hat = v-hat = 1 at step 1, so the update is ~lr
    p = ad.parameter([1.0])
    cfg = desk_cfg(learning_rate=0.1, weight_decay=0.0)
    adamw_step({"p": p}, {"p": np.array([1.0])}, AdamWState(), cfg)
    npt.assert_allclose(p.data, [0.9000], atol=1e-4)


def test_adamw_skips_frozen_parameters():
    p = ad.parameter([1.0])
    q = ad.parameter([1.0])
    adamw_step({"p": p, "q": q}, {"p": np.array([1.0]), "q": np.array([1.0])},
               AdamWState(), desk_cfg(learning_rate=0.1), frozen={"q"})
    assert p.data[0] != 1.0
    assert q.data[0] == 1.0


def test_adamw_rejects_non_finite_gradients():
    p = ad.parameter([1.0])
    with pytest.raises(NumericError) as err:
        adamw_step({"bad.param": p}, {"bad.param": np.array([np.inf])},
                   AdamWState(), desk_cfg())
    assert "bad.param" in str(err.value)


def test_train_config_validation():
    with pytest.raises(ParameterError):
        desk_cfg(batch_size=0)
    with pytest.raises(ParameterError):
        desk_cfg(epochs=0)


# ---------------------------------------------------------------------------
# training loop


def test_train_rejects_empty_dataset():
    model, rng = desk_model(0)
    with pytest.raises(DataError):
        train(model, [], desk_cfg(), 0, rng=rng)


def test_same_seed_gives_bitwise_identical_numeric_reports():
    data = tasks.gen_static(120, seed=1)

    def one_run():
        model, rng = desk_model(5)
        rep = train(model, data[:90], desk_cfg(), 5, eval_set=data[90:], rng=rng)
        return analytics.strip_timing(rep.to_dict())

    r1, r2 = one_run(), one_run()
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)


def test_frozen_encoder_checksum_is_invariant():
    data = tasks.gen_static(80, seed=2)
    model, rng = desk_model(6, frozen=True)
    before = model.encoder_checksum()
    rep = train(model, data, desk_cfg(frozen_encoder=True), 6, rng=rng)
    assert model.encoder_checksum() == before
    assert rep.encoder_checksum == before


def test_unfrozen_encoder_changes():
    data = tasks.gen_static(80, seed=3)
    model, rng = desk_model(7)
    before = model.encoder_checksum()
    train(model, data, desk_cfg(), 7, rng=rng)
    assert model.encoder_checksum() != before


def test_freeze_toggled_between_runs_is_honored():
    # encoder params move only while unfrozen
    data = tasks.gen_static(80, seed=3)
    model, rng = desk_model(15)
    model.encoder.set_frozen(True)
    c0 = model.encoder_checksum()
    train(model, data, desk_cfg(epochs=1), 15, rng=rng)
    c1 = model.encoder_checksum()
    model.encoder.set_frozen(False)
    train(model, data, desk_cfg(epochs=1), 15, rng=rng)
    c2 = model.encoder_checksum()
    assert c0 == c1
    assert c2 != c1


def test_one_step_changes_some_unfrozen_parameter():
    model, rng = desk_model(8)
    data = tasks.gen_static(16, seed=4)
    before = model.param_checksum()
    train(model, data, desk_cfg(epochs=1, batch_size=16), 8, rng=rng)
    assert model.param_checksum() != before


def test_training_loss_decreases_on_static_task():
    # epoch-5 training loss below epoch-1 for all three default seeds
    data = tasks.gen_static(400, seed=5)
    for seed in (1, 2, 3):
        model, rng = desk_model(seed)
        rep = train(model, data, desk_cfg(epochs=5), seed, rng=rng)
        assert rep.epochs[-1].train_loss < rep.epochs[0].train_loss


def test_usage_percentages_sum_to_100_per_epoch():
    data = tasks.gen_mixed(200, 0.5, seed=6)
    model, rng = desk_model(9)
    rep = train(model, data[:150], desk_cfg(epochs=3), 9, eval_set=data[150:], rng=rng)
    for ep in rep.epochs:
        assert abs(sum(ep.usage_hard_pct) - 100.0) <= 0.01
        assert abs(sum(ep.usage_soft_pct) - 100.0) <= 0.01


def test_report_structure_and_split_label():
    data = tasks.gen_static(60, seed=7)
    model, rng = desk_model(10)
    rep = train(model, data[:40], desk_cfg(epochs=2), 10, eval_set=data[40:], rng=rng)
    d = rep.to_dict()
    assert d["eval_split"] == "held_out"
    assert len(d["epochs"]) == 2
    assert set(d["final"]) == {"param_checksum", "encoder_checksum"}

    model2, rng2 = desk_model(11)
    rep2 = train(model2, data, desk_cfg(epochs=1), 11, rng=rng2)
    assert rep2.to_dict()["eval_split"] == "train"


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_perfect_predictor_metrics():
    metrics = analytics.task_metrics(np.array([0, 1, 1, 0]), np.array([0, 1, 1, 0]),
                                     "classification", num_classes=2)
    assert metrics["accuracy"] == 1.0
    assert metrics["macro_f1"] == 1.0


def test_evaluate_constant_predictor_on_balanced_set():
    metrics = analytics.task_metrics(np.zeros(10, dtype=int),
                                     np.array([0, 1] * 5), "classification",
                                     num_classes=2)
    assert metrics["accuracy"] == 0.5


def test_evaluate_affine_regression_has_unit_pearson():
    y = np.linspace(0, 5, 50)
    pred = 2.0 * y + 1.0
    metrics = analytics.task_metrics(pred, y, "regression")
    assert metrics["pearson_r"] == pytest.approx(1.0, abs=1e-12)
    assert metrics["mse"] == pytest.approx(float(np.mean((y + 1.0) ** 2)), abs=1e-9)


def test_evaluate_mode_mismatch_raises():
    model, _ = desk_model(12)
    data = tasks.gen_regression(10, seed=8)
    with pytest.raises(ModeError):
        evaluate(model, data)


def test_evaluate_empty_dataset_raises():
    model, _ = desk_model(13)
    with pytest.raises(DataError):
        evaluate(model, [])


def test_evaluate_returns_decisions_for_analytics():
    model, _ = desk_model(14)
    data = tasks.gen_static(20, seed=9)
    metrics, decisions, gate_rows, preds = evaluate(model, data)
    assert len(decisions) == 20
    assert gate_rows.shape == (20, 2)
    assert preds.shape == (20,)
