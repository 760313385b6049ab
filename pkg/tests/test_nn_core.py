import numpy as np
import pytest

from conftest import blob_dataset
from cortexkey.classical import gnb_fit, gnb_predict_batch
from cortexkey.errors import DataError, NumericError
from cortexkey.ingest import Dataset
from cortexkey.nn_core import (AdamState, MlpModel, TrainConfig, adam_step,
                               dropout_mask, gradient_check, mlp_forward,
                               relu, softmax, train, xent_loss)


class TestActivations:
    def test_relu_definition(self):
        assert relu(np.array([-1.0, 2.0])).tolist() == [0.0, 2.0]

    def test_softmax_sums_to_one_and_is_shift_invariant(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(20, 3)) * 10
        p = softmax(logits)
        assert np.all(p > 0) and np.all(p < 1)
        assert np.max(np.abs(p.sum(axis=1) - 1.0)) < 1e-6
        shifted = softmax(logits + 123.0)
        assert np.array_equal(np.argmax(p, axis=1), np.argmax(shifted, axis=1))

    def test_softmax_huge_logits_stable(self):
        p = softmax(np.array([[1000.0, 0.0, -1000.0]]))
        assert np.isfinite(p).all()
        assert p[0, 0] == pytest.approx(1.0)


class TestMlpForward:
    def _zero_model(self):
        model = MlpModel(in_dim=4, hidden_sizes=(3,), dropout_rate=0.0, seed=0)
        for layer in model.layers:
            layer.weights[:] = 0.0
            layer.bias[:] = 0.0
        return model

    def test_all_zero_weights_uniform(self):
        probs, _ = mlp_forward(self._zero_model(), np.ones(4))
        assert np.allclose(probs, [1 / 3] * 3)

    def test_infer_mode_is_bit_deterministic(self):
        model = MlpModel(in_dim=6, hidden_sizes=(5,), seed=3)
        x = np.random.default_rng(0).normal(size=6)
        p1, _ = mlp_forward(model, x, mode="infer")
        p2, _ = mlp_forward(model, x, mode="infer")
        assert np.array_equal(p1, p2)

    def test_dimension_mismatch(self):
        model = MlpModel(in_dim=6, hidden_sizes=(5,), seed=3)
        with pytest.raises(DataError):
            model.forward_batch(np.zeros((2, 7)))

    def test_train_mode_requires_rng(self):
        model = MlpModel(in_dim=4, hidden_sizes=(3,), dropout_rate=0.2, seed=1)
        with pytest.raises(DataError):
            model.forward_batch(np.zeros((1, 4)), mode="train")

    def test_no_hidden_layers_supported(self):
        model = MlpModel(in_dim=4, hidden_sizes=(), seed=1)
        probs, _ = mlp_forward(model, np.ones(4))
        assert probs.shape == (3,)


class TestXentLoss:
    def test_perfect_prediction_zero_loss(self):
        loss, grad = xent_loss(np.array([0.0, 1.0, 0.0]), 1)
        assert loss == 0.0
        assert np.allclose(grad, [0.0, 0.0, 0.0])

    def test_loss_one_at_e_inverse(self):
        p = np.array([1 - np.exp(-1.0), np.exp(-1.0)])
        loss, _ = xent_loss(p, 1)
        assert loss == pytest.approx(1.0, abs=1e-12)

    def test_l2_term_uses_weights_only(self):
        w = np.full((2, 2), 2.0)
        loss, _ = xent_loss(np.array([1.0, 0.0]), 0, weight_matrices=[w], l2_lambda=0.5)
        assert loss == pytest.approx(0.5 * 0.5 * 16.0)

    def test_clamp_avoids_log_zero(self):
        loss, _ = xent_loss(np.array([1.0, 0.0]), 1)
        assert np.isfinite(loss)
        assert loss == pytest.approx(-np.log(1e-12))

    def test_logit_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        logits = rng.normal(size=3)
        label = 2
        _, grad = xent_loss(softmax(logits[None])[0], label)
        h = 1e-5
        for j in range(3):
            bumped_p, bumped_m = logits.copy(), logits.copy()
            bumped_p[j] += h
            bumped_m[j] -= h
            lp, _ = xent_loss(softmax(bumped_p[None])[0], label)
            lm, _ = xent_loss(softmax(bumped_m[None])[0], label)
            numeric = (lp - lm) / (2 * h)
            rel = abs(grad[j] - numeric) / max(abs(grad[j]), abs(numeric), 1e-8)
            assert rel < 1e-4


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        p = [np.ones((2, 2))]
        state = AdamState.for_params(p)
        before = p[0].copy()
        adam_step(p, [np.zeros((2, 2))], state, 0.001)
        assert np.array_equal(p[0], before)

    def test_first_step_hand_computed(self):
        # bias correction makes m_hat = g and v_hat = g^2 on step one, so the
        # update is -lr * g / (|g| + eps)
        g = 0.5
        p = [np.zeros(3)]
        state = AdamState.for_params(p)
        adam_step(p, [np.full(3, g)], state, 0.001)
        expected = -0.001 * (g / (g + state.eps))
        assert np.allclose(p[0], expected, atol=1e-15)

    def test_identical_runs_identical_trajectories(self):
        def run():
            rng = np.random.default_rng(4)
            p = [rng.normal(size=(3, 2))]
            state = AdamState.for_params(p)
            for _ in range(25):
                adam_step(p, [rng.normal(size=(3, 2))], state, 0.01)
            return p[0]

        assert np.array_equal(run(), run())

    def test_shape_mismatch(self):
        p = [np.zeros((2, 2))]
        with pytest.raises(DataError):
            adam_step(p, [np.zeros(3)], AdamState.for_params(p), 0.001)


class TestDropout:
    def test_expectation_preserved(self):
        rng = np.random.default_rng(9)
        activation = 1.7
        draws = np.array([
            (dropout_mask(rng, (1,), 0.2) * activation)[0] for _ in range(10_000)
        ])
        assert abs(draws.mean() - activation) / activation < 0.02

    def test_infer_mode_applies_no_dropout(self):
        model = MlpModel(in_dim=4, hidden_sizes=(8,), dropout_rate=0.5, seed=2)
        x = np.ones((1, 4))
        a, _ = model.forward_batch(x, "infer")
        b, _ = model.forward_batch(x, "infer")
        assert np.array_equal(a, b)

    def test_train_mode_scales_surviving_units(self):
        rng = np.random.default_rng(3)
        mask = dropout_mask(rng, (1000,), 0.2)
        surviving = mask[mask > 0]
        assert np.allclose(surviving, 1.0 / 0.8)


class TestTrain:
    @staticmethod
    def _standardized_blobs():
        from cortexkey.ingest import standardize_dataset, standardizer_fit
        ds = blob_dataset(300, 20, seed=30)  # means 4 sigma apart
        return standardize_dataset(standardizer_fit(ds), ds), ds

    def test_blob_toy_reaches_95_percent_validation(self):
        ds_std, ds_raw = self._standardized_blobs()
        model = MlpModel(in_dim=20, hidden_sizes=(32, 16), dropout_rate=0.2, seed=42)
        model, history = train(model, ds_std, TrainConfig(seed=42))
        assert len(history.epochs) <= 100
        assert max(e.val_acc for e in history.epochs) >= 0.95
        # cross-check separability with an independent GNB oracle
        gnb = gnb_fit(ds_raw)
        gnb_acc = (gnb_predict_batch(gnb, ds_raw.features()) == ds_raw.labels()).mean()
        assert gnb_acc >= 0.95

    def test_training_loss_halves(self):
        ds_std, _ = self._standardized_blobs()
        model = MlpModel(in_dim=20, hidden_sizes=(32, 16), dropout_rate=0.2, seed=42)
        _, history = train(model, ds_std, TrainConfig(seed=42))
        assert history.epochs[-1].train_loss < 0.5 * history.epochs[0].train_loss

    def test_early_stop_patience_one_with_frozen_weights(self):
        ds = blob_dataset(60, 5, seed=31)
        model = MlpModel(in_dim=5, hidden_sizes=(4,), dropout_rate=0.0, seed=1)
        cfg = TrainConfig(learning_rate=0.0, early_stop_patience=1, seed=1,
                          dropout_rate=0.0)
        _, history = train(model, ds, cfg)
        assert len(history.epochs) == 2  # epoch 1 sets the best, epoch 2 stalls

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            train(MlpModel(in_dim=2, hidden_sizes=()), Dataset(()), TrainConfig())

    def test_seeded_training_bit_reproducible(self):
        def run():
            ds = blob_dataset(90, 6, seed=32)
            model = MlpModel(in_dim=6, hidden_sizes=(8,), dropout_rate=0.2, seed=5)
            model, _ = train(model, ds, TrainConfig(seed=5, max_epochs=10))
            return [p.copy() for p in model.parameters()]

        for a, b in zip(run(), run()):
            assert np.array_equal(a, b)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_loss_aborts_with_diagnostic(self):
        ds = blob_dataset(60, 4, seed=33)
        model = MlpModel(in_dim=4, hidden_sizes=(4,), dropout_rate=0.0, seed=2)
        cfg = TrainConfig(learning_rate=np.inf, dropout_rate=0.0, seed=2)
        with pytest.raises(NumericError):
            train(model, ds, cfg)

    def test_history_lengths_match_epochs_run(self):
        ds = blob_dataset(90, 6, seed=34)
        model = MlpModel(in_dim=6, hidden_sizes=(8,), dropout_rate=0.0, seed=6)
        _, history = train(model, ds, TrainConfig(seed=6, max_epochs=7,
                                                  dropout_rate=0.0))
        assert 1 <= len(history.epochs) <= 7
        lines = history.to_jsonl().strip().splitlines()
        assert len(lines) == len(history.epochs)
        import json
        first = json.loads(lines[0])
        assert set(first) == {"epoch", "train_loss", "val_loss", "train_acc", "val_acc"}

    def test_l2_shrinks_weights_but_not_biases(self):
        # with a large penalty and useless inputs, weights collapse toward 0
        # while biases stay free to match the class prior
        rng = np.random.default_rng(40)
        from conftest import make_window
        windows = tuple(
            make_window(rng.normal(size=(1, 4)), 0 if i < 40 else (1 if i < 60 else 2), ("z", i))
            for i in range(80))
        ds = Dataset(windows)
        model = MlpModel(in_dim=4, hidden_sizes=(), dropout_rate=0.0, seed=7)
        cfg = TrainConfig(learning_rate=0.02, l2_lambda=10.0, dropout_rate=0.0,
                          seed=7, max_epochs=500, early_stop_patience=500)
        model, _ = train(model, ds, cfg)
        out = model.layers[-1]
        assert np.abs(out.weights).max() < 0.05
        assert np.abs(out.bias).max() > 0.2


class TestGradientCheck:
    def test_mlp_10_8_3(self):
        model = MlpModel(in_dim=10, hidden_sizes=(8,), dropout_rate=0.0, seed=11)
        x = np.random.default_rng(11).normal(size=10)
        assert gradient_check(model, x, label=1) < 1e-4

    def test_zero_net_zero_input(self):
        model = MlpModel(in_dim=4, hidden_sizes=(3,), dropout_rate=0.0, seed=0)
        for layer in model.layers:
            layer.weights[:] = 0.0
            layer.bias[:] = 0.0
        assert gradient_check(model, np.zeros(4), label=0) < 1e-4

    def test_detects_corrupted_backward_pass(self):
        class Corrupted(MlpModel):
            def backward_batch(self, cache, dlogits):
                return [-g for g in super().backward_batch(cache, dlogits)]

        model = Corrupted(in_dim=6, hidden_sizes=(4,), dropout_rate=0.0, seed=3)
        x = np.random.default_rng(3).normal(size=6)
        assert gradient_check(model, x, label=2) > 1e-4

    def test_fixed_mask_dropout_path(self):
        model = MlpModel(in_dim=6, hidden_sizes=(5,), dropout_rate=0.3, seed=4)
        x = np.random.default_rng(4).normal(size=6)
        err = gradient_check(model, x, label=0, mode="train", dropout_seed=17)
        assert err < 1e-4

    def test_l2_gradient_included(self):
        model = MlpModel(in_dim=5, hidden_sizes=(4,), dropout_rate=0.0, seed=5)
        x = np.random.default_rng(5).normal(size=5)
        assert gradient_check(model, x, label=1, l2_lambda=0.01) < 1e-4

    def test_large_model_uses_seeded_subset(self):
        model = MlpModel(in_dim=50, hidden_sizes=(40, 30), dropout_rate=0.0, seed=6)
        x = np.random.default_rng(6).normal(size=50)
        err = gradient_check(model, x, label=1, max_checked=300)
        assert err < 1e-4
