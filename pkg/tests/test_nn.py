import math

import numpy as np
import pytest

from kcdistill.nn import (
    SgdState,
    TrainConfig,
    finite_difference_check,
    forward,
    init_mlp,
    kd_loss,
    load_model,
    loss_and_grads,
    lr_at_epoch,
    save_model,
    sgd_step,
    softmax,
    train_classifier,
    train_teacher,
)


class TestForwardSoftmax:
    def test_zero_weight_model_is_uniform(self):
        model = init_mlp((4, 8, 3), 0)
        for w in model.weights:
            w[:] = 0.0
        probs = softmax(forward(model, np.random.default_rng(0).normal(size=(5, 4))))
        np.testing.assert_allclose(probs, 1 / 3, rtol=1e-12)

    def test_huge_temperature_flattens(self):
        model = init_mlp((4, 8, 5), 1)
        x = np.random.default_rng(1).normal(size=(6, 4))
        probs = softmax(forward(model, x), temperature=1e6)
        np.testing.assert_allclose(probs, 0.2, atol=1e-4)

    def test_two_class_logits_sigmoid_oracle(self):
        model = init_mlp((2, 2), 2)
        model.weights[0][:] = 0.0
        model.biases[0][:] = [1.0, 0.0]
        probs = softmax(forward(model, np.zeros((1, 2))))
        oracle = 1.0 / (1.0 + math.exp(-1.0))
        assert oracle == pytest.approx(0.731059, abs=1e-6)
        np.testing.assert_allclose(probs[0], [oracle, 1.0 - oracle], rtol=1e-12)

    def test_argmax_temperature_invariant(self):
        model = init_mlp((3, 16, 7), 3)
        x = np.random.default_rng(2).normal(size=(20, 3))
        logits = forward(model, x)
        base = np.argmax(softmax(logits, 1.0), axis=1)
        for temp in (0.25, 2.0, 10.0):
            assert np.array_equal(np.argmax(softmax(logits, temp), axis=1), base)

    def test_dimension_mismatch_rejected(self):
        model = init_mlp((4, 3), 0)
        with pytest.raises(ValueError, match="dim"):
            forward(model, np.zeros((2, 5)))


class TestKdLoss:
    def test_self_distillation_gives_target_entropy(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(5), size=4)
        entropy = float(np.mean(-np.sum(p * np.log(p), axis=1)))
        assert kd_loss(p, p) == pytest.approx(entropy, rel=1e-12)

    def test_one_hot_target(self):
        t = np.array([[0.0, 1.0, 0.0]])
        s = np.array([[0.2, 0.5, 0.3]])
        assert kd_loss(t, s) == pytest.approx(-math.log(0.5), rel=1e-12)

    def test_term_by_term_oracle(self):
        oracle = -0.5 * (math.log(0.25) + math.log(0.75))
        assert oracle == pytest.approx(0.836988, abs=1e-6)
        got = kd_loss([[0.5, 0.5]], [[0.25, 0.75]])
        assert got == pytest.approx(oracle, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            kd_loss(np.full((2, 3), 1 / 3), np.full((2, 4), 0.25))

    def test_gibbs_inequality_on_random_pairs(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            c = int(rng.integers(2, 9))
            t = rng.dirichlet(np.ones(c))
            s = rng.dirichlet(np.ones(c))
            baseline = kd_loss([t], [t])
            assert kd_loss([t], [s]) >= baseline - 1e-12


class TestGradients:
    def test_single_linear_layer_closed_form(self):
        # for a linear softmax classifier the logit gradient is (p - t)
        model = init_mlp((3, 2), 5)
        x = np.array([[0.5, -1.0, 2.0]])
        t = np.array([[1.0, 0.0]])
        probs = softmax(forward(model, x))
        _, gw, gb, _ = loss_and_grads(model, x, t)
        np.testing.assert_allclose(gw[0], x.T @ (probs - t), rtol=1e-12)
        np.testing.assert_allclose(gb[0], (probs - t)[0], rtol=1e-12)

    @pytest.mark.parametrize("dims", [(16, 64, 64, 10), (16, 16, 10)])
    def test_finite_difference_match(self, dims):
        rng = np.random.default_rng(6)
        model = init_mlp(dims, 7)
        x = rng.normal(size=(8, dims[0]))
        targets = rng.dirichlet(np.ones(dims[-1]), size=8)
        err = finite_difference_check(model, x, targets, n_coords=100, step=1e-5, seed=0)
        assert err < 1e-4

    def test_finite_difference_with_temperature_and_hard_term(self):
        rng = np.random.default_rng(7)
        model = init_mlp((5, 12, 4), 8)
        x = rng.normal(size=(6, 5))
        targets = rng.dirichlet(np.ones(4), size=6)
        hard = rng.integers(0, 4, size=6)

        def wrapped_loss():
            loss, gw, gb, _ = loss_and_grads(model, x, targets, temperature=2.0,
                                             hard_labels=hard, hard_label_weight=0.3)
            return loss, gw, gb

        loss, gw, gb = wrapped_loss()
        step = 1e-5
        coords = [(0, 1, 2), (1, 3, 1)]
        for layer, i, j in coords:
            orig = model.weights[layer][i, j]
            model.weights[layer][i, j] = orig + step
            up, *_ = wrapped_loss()
            model.weights[layer][i, j] = orig - step
            down, *_ = wrapped_loss()
            model.weights[layer][i, j] = orig
            numeric = (up - down) / (2 * step)
            assert numeric == pytest.approx(gw[layer][i, j], rel=1e-4, abs=1e-8)


class TestSgd:
    def test_zero_lr_leaves_parameters(self):
        model = init_mlp((3, 4, 2), 9)
        before = [w.copy() for w in model.weights]
        cfg = TrainConfig(lr=0.0, weight_decay=0.0)
        x = np.random.default_rng(8).normal(size=(4, 3))
        t = np.full((4, 2), 0.5)
        _, gw, gb, _ = loss_and_grads(model, x, t)
        sgd_step(model, gw, gb, SgdState.zeros_like(model), 0.0, cfg)
        for w0, w1 in zip(before, model.weights):
            np.testing.assert_array_equal(w0, w1)

    def test_non_finite_gradient_aborts(self):
        model = init_mlp((2, 2), 10)
        cfg = TrainConfig()
        gw = [np.array([[np.inf, 0.0], [0.0, 0.0]])]
        gb = [np.zeros(2)]
        with pytest.raises(FloatingPointError, match="non-finite gradient"):
            sgd_step(model, gw, gb, SgdState.zeros_like(model), 0.1, cfg)

    def test_momentum_accumulates(self):
        model = init_mlp((2, 2), 11)
        model.weights[0][:] = 1.0
        cfg = TrainConfig(momentum=0.9, weight_decay=0.0)
        state = SgdState.zeros_like(model)
        g = [np.ones((2, 2))]
        zeros = [np.zeros(2)]
        sgd_step(model, g, zeros, state, 0.1, cfg)
        first = model.weights[0][0, 0]
        sgd_step(model, g, zeros, state, 0.1, cfg)
        second = model.weights[0][0, 0]
        assert first == pytest.approx(0.9)
        assert second == pytest.approx(0.9 - 0.1 * 1.9)

    def test_lr_schedule_steps(self):
        cfg = TrainConfig(lr=0.05, lr_decay_epochs=(10, 20), lr_decay_factor=0.1)
        assert lr_at_epoch(cfg, 1) == 0.05
        assert lr_at_epoch(cfg, 10) == 0.05
        assert lr_at_epoch(cfg, 11) == pytest.approx(0.005)
        assert lr_at_epoch(cfg, 21) == pytest.approx(0.0005)


class TestTraining:
    def test_separable_blobs_reach_high_accuracy(self):
        rng = np.random.default_rng(12)
        centers = np.array([[-4.0, 0.0], [4.0, 0.0]])
        x = np.concatenate([c + 0.3 * rng.normal(size=(60, 2)) for c in centers])
        y = np.repeat([0, 1], 60)
        cfg = TrainConfig(lr=0.1, batch_size=16)
        model = train_classifier(x, y, (2, 8, 2), cfg, epochs=40, seed=0)
        preds = np.argmax(forward(model, x), axis=1)
        assert np.mean(preds == y) >= 0.99

    def test_zero_epochs_still_yields_valid_probs(self):
        x = np.random.default_rng(13).normal(size=(10, 3))
        y = np.zeros(10, dtype=int)
        model, probs = train_teacher(x, y, (3, 4, 2), TrainConfig(), 0, seed=0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-9)
        assert np.all(probs >= 0)

    def test_same_seed_reproduces_cached_probs(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(30, 4))
        y = rng.integers(0, 3, size=30)
        cfg = TrainConfig(batch_size=8)
        _, probs_a = train_teacher(x, y, (4, 6, 3), cfg, 5, seed=42)
        _, probs_b = train_teacher(x, y, (4, 6, 3), cfg, 5, seed=42)
        np.testing.assert_array_equal(probs_a, probs_b)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        model = init_mlp((5, 7, 3), 15)
        path = tmp_path / "model.bin"
        save_model(path, model)
        again = load_model(path)
        assert again.layer_dims == model.layer_dims
        for a, b in zip(model.weights + model.biases, again.weights + again.biases):
            np.testing.assert_array_equal(a, b)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ValueError, match="magic"):
            load_model(path)

    def test_copy_is_deep(self):
        model = init_mlp((2, 2), 16)
        clone = model.copy()
        clone.weights[0][0, 0] += 1.0
        assert model.weights[0][0, 0] != clone.weights[0][0, 0]


class TestTrainConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            TrainConfig(momentum=1.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(temperature=0.0)
        with pytest.raises(ValueError):
            TrainConfig(hard_label_weight=1.5)

    def test_desk_default_decay_epochs(self):
        cfg = TrainConfig.desk_default(60)
        assert cfg.lr_decay_epochs == (37, 45, 52)
