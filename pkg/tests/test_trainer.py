"""Trainer tests: forward pass, gradient oracle, optimizer schedule, io."""

import math

import numpy as np
import pytest

from banditbatch.data import generate_blobs
from banditbatch.trainer import (
    MlpModel,
    OptimizerState,
    TrainingDiverged,
    effective_rate,
    evaluate,
    forward,
    get_params,
    init_model,
    load_checkpoint,
    loss_and_grads,
    save_checkpoint,
    sgd_step,
    with_params,
)


def _zero_model(d=3, h=4, c=5) -> MlpModel:
    return MlpModel(np.zeros((d, h)), np.zeros(h), np.zeros((h, c)), np.zeros(c))


def test_forward_rows_sum_to_one():
    model = init_model(6, 8, 4, seed=0)
    x = np.random.default_rng(1).normal(size=(10, 6))
    probs = forward(model, x)
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9
    assert (probs >= 0.0).all()


def test_forward_zero_params_uniform():
    model = _zero_model()
    probs = forward(model, np.random.default_rng(2).normal(size=(7, 3)))
    assert np.allclose(probs, 0.2)


def test_forward_saturation_stable():
    # A +50 logit shift on one class keeps the softmax finite and peaked.
    model = _zero_model()
    model.b2 = model.b2.copy()
    model.b2[2] = 50.0
    probs = forward(model, np.zeros((3, 3)))
    assert np.isfinite(probs).all()
    assert probs[:, 2].min() > 0.999999


def test_forward_rejects_nonfinite():
    model = init_model(3, 4, 2, seed=0)
    with pytest.raises(ValueError):
        forward(model, np.array([[1.0, np.nan, 0.0]]))


def test_param_count():
    model = init_model(20, 64, 10, seed=0)
    assert model.param_count == 20 * 64 + 64 + 64 * 10 + 10
    assert get_params(model).size == model.param_count


def test_loss_uniform_model_is_log_c():
    model = _zero_model(d=4, h=3, c=5)
    x = np.random.default_rng(3).normal(size=(6, 4))
    y = np.array([0, 1, 2, 3, 4, 0])
    loss, _, p_target = loss_and_grads(model, x, y, np.ones(6))
    assert loss == pytest.approx(math.log(5.0), rel=1e-12)
    assert np.allclose(p_target, 0.2)


def test_loss_weight_doubling_adds_instance_term():
    model = init_model(4, 6, 3, seed=4)
    x = np.random.default_rng(5).normal(size=(5, 4))
    y = np.array([0, 1, 2, 0, 1])
    base, _, p_target = loss_and_grads(model, x, y, np.ones(5))
    weights = np.ones(5)
    weights[2] = 2.0
    bumped, _, _ = loss_and_grads(model, x, y, weights)
    assert bumped - base == pytest.approx(-math.log(p_target[2]) / 5.0, rel=1e-9)


def _numeric_gradient(model, x, y, lw, h=1e-5):
    params = get_params(model)
    grad = np.empty_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] += h
        up, _, _ = loss_and_grads(with_params(model, bumped), x, y, lw)
        bumped[i] -= 2 * h
        down, _, _ = loss_and_grads(with_params(model, bumped), x, y, lw)
        grad[i] = (up - down) / (2 * h)
    return grad


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    for _ in range(5):
        d, h, c = (int(rng.integers(2, 6)) for _ in range(3))
        c = max(c, 2)
        model = init_model(d, h, c, seed=int(rng.integers(1_000_000)))
        n = int(rng.integers(2, 7))
        x = rng.normal(size=(n, d))
        y = rng.integers(0, c, size=n)
        lw = rng.uniform(0.5, 2.0, size=n)
        _, analytic, _ = loss_and_grads(model, x, y, lw)
        numeric = _numeric_gradient(model, x, y, lw)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-6)
        assert rel.max() < 1e-4


def test_loss_validates_shapes():
    model = init_model(3, 4, 2, seed=0)
    x = np.zeros((2, 3))
    with pytest.raises(ValueError):
        loss_and_grads(model, x, np.array([0]), np.ones(2))
    with pytest.raises(ValueError):
        loss_and_grads(model, x, np.array([0, 5]), np.ones(2))
    with pytest.raises(ValueError):
        loss_and_grads(model, x, np.array([0, 1]), -np.ones(2))


# -------------------------------------------------------------- optimizer

def test_effective_rate_schedule():
    opt = OptimizerState.create(4, 0.1, decay_iterations=(100, 200))
    assert effective_rate(opt, 0) == pytest.approx(0.1)
    assert effective_rate(opt, 99) == pytest.approx(0.1)
    assert effective_rate(opt, 100) == pytest.approx(0.01)
    assert effective_rate(opt, 150) == pytest.approx(0.01)
    assert effective_rate(opt, 200) == pytest.approx(0.001)
    assert effective_rate(opt, 10_000) == pytest.approx(0.001)


def test_sgd_step_no_momentum_is_plain_descent():
    model = _zero_model(d=2, h=2, c=2)
    opt = OptimizerState.create(model.param_count, 0.5, momentum=0.0)
    grad = np.ones(model.param_count)
    new_model, new_opt = sgd_step(model, opt, grad, 0)
    assert np.allclose(get_params(new_model), -0.5)
    assert np.allclose(new_opt.velocity, -0.5)
    assert np.allclose(get_params(model), 0.0)  # input untouched


def test_sgd_momentum_accumulates():
    model = _zero_model(d=2, h=2, c=2)
    opt = OptimizerState.create(model.param_count, 1.0, momentum=0.5)
    grad = np.ones(model.param_count)
    model, opt = sgd_step(model, opt, grad, 0)   # v = -1
    model, opt = sgd_step(model, opt, grad, 1)   # v = -1.5
    assert np.allclose(opt.velocity, -1.5)
    assert np.allclose(get_params(model), -2.5)


def test_sgd_zero_gradient_zero_velocity_fixed_point():
    model = init_model(3, 4, 2, seed=7)
    opt = OptimizerState.create(model.param_count, 0.1)
    new_model, _ = sgd_step(model, opt, np.zeros(model.param_count), 5)
    assert np.array_equal(get_params(new_model), get_params(model))


def test_sgd_detects_divergence():
    model = init_model(3, 4, 2, seed=8)
    opt = OptimizerState.create(model.param_count, 1e308)
    grad = np.full(model.param_count, 1e10)
    with pytest.raises(TrainingDiverged):
        sgd_step(model, opt, grad, 0)


def test_optimizer_validation():
    with pytest.raises(ValueError):
        OptimizerState.create(3, 0.0)
    with pytest.raises(ValueError):
        OptimizerState.create(3, 0.1, momentum=1.0)
    with pytest.raises(ValueError):
        OptimizerState.create(3, 0.1, decay_iterations=(5, 3))


# --------------------------------------------------------------- evaluate

def test_evaluate_uniform_model_ties_to_class_zero():
    ds = generate_blobs(30, 3, 3, 0.4, seed=9)
    ds.observed_labels[:] = 0
    ds.true_labels[:] = 0
    assert evaluate(_zero_model(d=3, h=4, c=3), ds) == 0.0


def test_evaluate_counts_mismatches():
    ds = generate_blobs(40, 2, 2, 0.0, seed=10)
    model = init_model(2, 8, 2, seed=11)
    err = evaluate(model, ds)
    probs = forward(model, ds.features)
    expected = float(np.mean(probs.argmax(axis=1) != ds.observed_labels))
    assert err == expected


def test_training_reduces_error_and_reproduces():
    ds = generate_blobs(200, 4, 3, 0.3, seed=12)

    def train(seed):
        model = init_model(4, 16, 3, seed=seed)
        opt = OptimizerState.create(model.param_count, 0.1)
        rng = np.random.default_rng(seed)
        for it in range(150):
            idx = rng.choice(len(ds), size=16, replace=False)
            _, grad, _ = loss_and_grads(
                model, ds.features[idx], ds.observed_labels[idx], np.ones(16)
            )
            model, opt = sgd_step(model, opt, grad, it)
        return model

    trained = train(13)
    err = evaluate(trained, ds)
    assert err < evaluate(init_model(4, 16, 3, seed=13), ds)
    again = train(13)
    assert np.array_equal(get_params(trained), get_params(again))


# ------------------------------------------------------------- checkpoint

def test_checkpoint_roundtrip(tmp_path):
    model = init_model(5, 7, 3, seed=14)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, 42, path)
    loaded, iteration = load_checkpoint(path)
    assert iteration == 42
    assert np.array_equal(get_params(loaded), get_params(model))
    assert (loaded.n_features, loaded.hidden, loaded.n_classes) == (5, 7, 3)


def test_checkpoint_rejects_truncated(tmp_path):
    model = init_model(3, 4, 2, seed=15)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, 1, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_init_model_glorot_bounds():
    model = init_model(10, 20, 5, seed=16)
    lim1 = math.sqrt(6.0 / 30.0)
    lim2 = math.sqrt(6.0 / 25.0)
    assert np.abs(model.w1).max() <= lim1
    assert np.abs(model.w2).max() <= lim2
    assert np.all(model.b1 == 0.0) and np.all(model.b2 == 0.0)
    again = init_model(10, 20, 5, seed=16)
    assert np.array_equal(model.w1, again.w1)
