import math

import numpy as np
import pytest

from arcgate import core, engine, zoo
from arcgate.engine import (ActivationLayer, AdamState, DenseLayer, MLPModel,
                            ModelSpec, Slot, TrainConfig, adamw_step, backward,
                            build_model, evaluate, forward, load_model,
                            save_model, softmax_cross_entropy, train)


def tiny_model(seed=11, granularity="layer_wise", strategy="soft_relu",
               spec=ModelSpec(3, (8, 5), 3)):
    cfg = TrainConfig(seed=seed, granularity=granularity, init_strategy=strategy)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return build_model(spec, cfg, rng)


class TestForward:
    def test_identity_network_passes_batch_through(self):
        layers = [DenseLayer(np.eye(4), np.zeros(4)),
                  ActivationLayer(core.preset("identity").raw_vector())]
        model = MLPModel(layers)
        batch = np.random.default_rng(0).normal(0, 1, (6, 4))
        logits, _ = forward(model, batch)
        assert np.array_equal(logits, batch)

    def test_zero_weights_pass_gated_biases_through(self):
        bias = np.array([0.0, 1.0, -2.0])
        layers = [DenseLayer(np.zeros((2, 3)), bias),
                  ActivationLayer(core.preset("soft_relu_init").raw_vector())]
        model = MLPModel(layers)
        logits, _ = forward(model, np.ones((4, 2)))
        expected = core.eval_F_batch(bias, core.preset("soft_relu_init"))
        assert np.array_equal(logits, np.tile(expected, (4, 1)))
        assert logits[0, 0] == 0.0  # zero bias stays exactly zero

    def test_deterministic_across_calls(self):
        model = tiny_model(seed=42)
        batch = np.random.default_rng(1).normal(0, 1, (5, 3))
        a, _ = forward(model, batch)
        b, _ = forward(tiny_model(seed=42), batch)
        assert np.array_equal(a, b)

    def test_shape_mismatch_rejected(self):
        model = tiny_model()
        with pytest.raises(ValueError):
            forward(model, np.zeros((4, 7)))

    def test_bit_identical_across_processes(self):
        import subprocess
        import sys
        snippet = (
            "import hashlib, numpy as np\n"
            "from arcgate import engine\n"
            "from arcgate.engine import ModelSpec, TrainConfig\n"
            "model = engine.build_model(ModelSpec(3, (8, 5), 3), TrainConfig(seed=42),\n"
            "                           np.random.default_rng(42))\n"
            "batch = np.random.default_rng(7).normal(0, 1, (6, 3))\n"
            "logits, _ = engine.forward(model, batch)\n"
            "print(hashlib.sha256(logits.tobytes()).hexdigest())\n"
        )
        digests = {subprocess.run([sys.executable, "-c", snippet], check=True,
                                  capture_output=True, text=True).stdout.strip()
                   for _ in range(2)}
        assert len(digests) == 1


class TestBackward:
    def test_single_dense_outer_product(self):
        # squared error on one sample: dL/dW = x^T (y_hat - y), classic form
        w = np.array([[0.5, -0.2], [0.1, 0.3], [-0.4, 0.2]])
        model = MLPModel([DenseLayer(w.copy(), np.zeros(2))])
        x = np.array([[1.0, 2.0, -1.0]])
        target = np.array([[0.3, -0.1]])
        logits, cache = forward(model, x)
        grad_logits = 2.0 * (logits - target)
        grads = backward(model, cache, grad_logits)
        expected_dw = x.T @ grad_logits
        assert np.allclose(grads[0], expected_dw, rtol=1e-12)
        assert np.allclose(grads[1], grad_logits.sum(axis=0), rtol=1e-12)

    def test_full_finite_difference_check(self):
        model = tiny_model(seed=11)
        for i, act in enumerate(model.activation_layers()):
            act.raw += np.array([0.3, -0.2, 0.1, 0.05, -0.1, 0.2, 0.15]) * (i + 1)
        rng = np.random.default_rng(5)
        x = rng.normal(0, 1, (10, 3))
        y = rng.integers(0, 3, 10)
        logits, cache = forward(model, x)
        _, grad_logits = softmax_cross_entropy(logits, y)
        grads = backward(model, cache, grad_logits)

        def loss_now():
            lg, _ = forward(model, x)
            return softmax_cross_entropy(lg, y)[0]

        for slot, g in zip(model.trainables(), grads):
            flat, gflat = slot.array.ravel(), g.ravel()
            for k in range(flat.size):
                h = 1e-6 * max(1.0, abs(flat[k]))
                keep = flat[k]
                flat[k] = keep + h
                up = loss_now()
                flat[k] = keep - h
                down = loss_now()
                flat[k] = keep
                fd = (up - down) / (2 * h)
                assert abs(fd - gflat[k]) <= max(1e-4 * abs(gflat[k]), 1e-9), slot.label

    def test_fixed_granularity_yields_no_activation_gradients(self):
        model = tiny_model(granularity="fixed")
        assert all("act" not in s.label for s in model.trainables())
        x = np.random.default_rng(2).normal(0, 1, (4, 3))
        logits, cache = forward(model, x)
        _, gl = softmax_cross_entropy(logits, np.array([0, 1, 2, 0]))
        grads = backward(model, cache, gl)
        assert len(grads) == len(model.trainables())  # dense w/b only

    def test_global_shared_accumulates_across_layers(self):
        model = tiny_model(granularity="global_shared")
        acts = model.activation_layers()
        assert len({id(a.raw) for a in acts}) == 1
        slots = model.trainables()
        assert sum("act" in s.label for s in slots) == 1
        x = np.random.default_rng(2).normal(0, 1, (4, 3))
        logits, cache = forward(model, x)
        _, gl = softmax_cross_entropy(logits, np.array([0, 1, 2, 0]))
        grads = backward(model, cache, gl)
        shared_grad = grads[[i for i, s in enumerate(slots) if "act" in s.label][0]]
        # must equal the sum of per-layer contributions from a layer_wise twin
        twin = tiny_model(granularity="layer_wise")
        for a, b in zip(twin.activation_layers(), acts):
            a.raw[:] = b.raw
        for dl_a, dl_b in zip(twin.layers, model.layers):
            if isinstance(dl_a, DenseLayer):
                dl_a.w[:] = dl_b.w
                dl_a.b[:] = dl_b.b
        lg, cache2 = forward(twin, x)
        _, gl2 = softmax_cross_entropy(lg, np.array([0, 1, 2, 0]))
        grads2 = backward(twin, cache2, gl2)
        slots2 = twin.trainables()
        acc = sum(grads2[i] for i, s in enumerate(slots2) if "act" in s.label)
        assert np.allclose(shared_grad, acc, rtol=1e-12, atol=1e-15)

    def test_stale_cache_rejected(self):
        model = tiny_model()
        with pytest.raises(ValueError):
            backward(model, [None] * 3, np.zeros((2, 3)))


class TestAdamW:
    def test_zero_grad_zero_decay_is_noop(self):
        slots = [Slot(np.array([2.5]), True, "w")]
        state = AdamState.init_like(slots)
        adamw_step(slots, [np.array([0.0])], state, lr=0.1, weight_decay=0.0, step=1)
        assert slots[0].array[0] == 2.5

    def test_first_step_magnitude(self):
        slots = [Slot(np.array([0.0]), False, "w")]
        state = AdamState.init_like(slots)
        adamw_step(slots, [np.array([1.0])], state, lr=0.1, weight_decay=0.0, step=1)
        assert slots[0].array[0] == pytest.approx(-0.1, rel=1e-7)

    def test_decoupled_decay(self):
        slots = [Slot(np.array([1.0]), True, "w")]
        state = AdamState.init_like(slots)
        adamw_step(slots, [np.array([0.0])], state, lr=0.1, weight_decay=0.01, step=1)
        assert slots[0].array[0] == pytest.approx(0.999, rel=1e-14)

    def test_decay_skips_exempt_slots(self):
        slots = [Slot(np.array([1.0]), False, "b")]
        state = AdamState.init_like(slots)
        adamw_step(slots, [np.array([0.0])], state, lr=0.1, weight_decay=0.01, step=1)
        assert slots[0].array[0] == 1.0

    def test_non_finite_gradient_aborts(self):
        slots = [Slot(np.array([1.0]), True, "w")]
        state = AdamState.init_like(slots)
        with pytest.raises(engine.NonFiniteGradientError):
            adamw_step(slots, [np.array([math.nan])], state, lr=0.1,
                       weight_decay=0.0, step=1)


def perceptron_separable(x, y, iters=2000):
    """Perceptron oracle: returns True iff it finds a separating hyperplane."""
    aug = np.hstack([x, np.ones((x.shape[0], 1))])
    signs = np.where(y == 0, -1.0, 1.0)
    w = np.zeros(aug.shape[1])
    for _ in range(iters):
        wrong = signs * (aug @ w) <= 0
        if not wrong.any():
            return True
        k = int(np.flatnonzero(wrong)[0])
        w += signs[k] * aug[k]
    return False


class TestTrain:
    def test_separable_blobs_reach_perfect_accuracy(self, blob_dataset):
        assert perceptron_separable(
            np.vstack([blob_dataset.x_train, blob_dataset.x_test]),
            np.concatenate([blob_dataset.y_train, blob_dataset.y_test]))
        config = TrainConfig(epochs=20, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=7)
        _, trace = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        assert trace[-1].test_acc == 1.0

    def test_same_seed_identical_traces(self, blob_dataset):
        config = TrainConfig(epochs=5, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=7)
        _, t1 = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        _, t2 = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        assert t1 == t2

    @pytest.mark.parametrize("strategy", engine.INIT_STRATEGIES)
    def test_loss_decreases_for_every_strategy(self, blob_dataset, strategy):
        config = TrainConfig(epochs=20, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=3, init_strategy=strategy)
        _, trace = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        assert trace[-1].train_loss < trace[0].train_loss

    def test_relu_baseline_freezes_activation_parameters(self, blob_dataset):
        config = TrainConfig(epochs=3, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=5, init_strategy="relu_baseline")
        model, trace = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        assert len(trace) == 3
        init_raw = core.preset("soft_relu_init").raw_vector()
        for act in model.activation_layers():
            assert act.baseline is not None and act.baseline.tag == "relu"
            assert np.array_equal(act.raw, init_raw)

    def test_fixed_mode_parameters_bit_frozen(self, blob_dataset):
        config = TrainConfig(epochs=5, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=5, granularity="fixed")
        model, _ = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        init_raw = core.preset("soft_relu_init").raw_vector()
        for act in model.activation_layers():
            assert np.array_equal(act.raw, init_raw)

    def test_global_shared_stays_tied_after_training(self, blob_dataset):
        config = TrainConfig(epochs=5, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=5, granularity="global_shared")
        model, _ = train(ModelSpec(2, (8, 6), 2), blob_dataset, config)
        acts = model.activation_layers()
        assert len({id(a.raw) for a in acts}) == 1
        assert not np.array_equal(acts[0].raw, core.preset("soft_relu_init").raw_vector())

    def test_layer_wise_vectors_can_diverge(self, blob_dataset):
        config = TrainConfig(epochs=10, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=5, granularity="layer_wise")
        model, _ = train(ModelSpec(2, (8, 6), 2), blob_dataset, config)
        a, b = model.activation_layers()
        assert not np.array_equal(a.raw, b.raw)

    def test_empty_dataset_rejected(self):
        empty = (np.zeros((0, 2)), np.zeros(0, dtype=int),
                 np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            train(ModelSpec(2, (4,), 2), empty, TrainConfig(epochs=1))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch_and_step(self):
        # overflow-scale features push the logits to inf once the first Adam
        # step inflates the weights
        rng = np.random.default_rng(0)
        x = rng.uniform(0.5, 1.0, (64, 2)) * 1e300
        y = rng.integers(0, 2, 64)
        config = TrainConfig(epochs=2, batch_size=16, learning_rate=1e12,
                             weight_decay=0.0, seed=5)
        with pytest.raises((engine.TrainingDivergedError, engine.NonFiniteGradientError)) as exc:
            train(ModelSpec(2, (8,), 2), (x, y, x, y), config)
        if isinstance(exc.value, engine.TrainingDivergedError):
            assert exc.value.epoch >= 1 and exc.value.step >= 1


@pytest.fixture(scope="module")
def trained(blob_dataset):
    config = TrainConfig(epochs=20, batch_size=16, learning_rate=0.01,
                         weight_decay=0.0, seed=7)
    model, _ = train(ModelSpec(2, (8,), 2), blob_dataset, config)
    return model


class TestEvaluate:
    def test_zero_sigma_equals_clean_accuracy(self, trained, blob_dataset):
        test = (blob_dataset.x_test, blob_dataset.y_test)
        assert evaluate(trained, test, 0.0, 1) == evaluate(trained, test, 0.0, 999)

    def test_huge_noise_drops_to_chance(self, trained, blob_dataset):
        test = (blob_dataset.x_test, blob_dataset.y_test)
        n = len(test[1])
        acc = evaluate(trained, test, 1000.0, 4)
        # binomial around 1/2 for two balanced classes
        assert abs(acc - 0.5) <= 3.0 * math.sqrt(0.25 / n)

    def test_seeded_noise_reproducible(self, trained, blob_dataset):
        test = (blob_dataset.x_test, blob_dataset.y_test)
        assert evaluate(trained, test, 0.3, 11) == evaluate(trained, test, 0.3, 11)
        assert evaluate(trained, test, 0.3, 11) != evaluate(trained, test, 0.3, 12) \
            or True  # different seeds may coincide on accuracy; no assertion either way

    def test_noise_seed_never_touches_model(self, blob_dataset):
        config = TrainConfig(epochs=3, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=7)
        m1, t1 = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        evaluate(m1, (blob_dataset.x_test, blob_dataset.y_test), 0.5, 123)
        m2, t2 = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        assert t1 == t2
        for l1, l2 in zip(m1.layers, m2.layers):
            if isinstance(l1, DenseLayer):
                assert np.array_equal(l1.w, l2.w)

    def test_negative_sigma_rejected(self, trained, blob_dataset):
        with pytest.raises(ValueError):
            evaluate(trained, (blob_dataset.x_test, blob_dataset.y_test), -0.1, 0)


class TestPersistence:
    def test_round_trip_bitexact(self, tmp_path, blob_dataset):
        config = TrainConfig(epochs=3, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=9)
        model, _ = train(ModelSpec(2, (8, 6), 2), blob_dataset, config)
        path = tmp_path / "model.agm"
        save_model(model, path)
        back = load_model(path)
        x = blob_dataset.x_test
        a, _ = forward(model, x)
        b, _ = forward(back, x)
        assert np.array_equal(a, b)

    def test_global_shared_retied_on_load(self, tmp_path, blob_dataset):
        config = TrainConfig(epochs=2, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=9, granularity="global_shared")
        model, _ = train(ModelSpec(2, (8, 6), 2), blob_dataset, config)
        path = tmp_path / "model.agm"
        save_model(model, path)
        back = load_model(path)
        acts = back.activation_layers()
        assert len({id(a.raw) for a in acts}) == 1

    def test_baseline_and_slope_survive(self, tmp_path):
        layers = [DenseLayer(np.eye(2), np.zeros(2)),
                  ActivationLayer(core.preset("soft_relu_init").raw_vector(),
                                  "fixed", zoo.ActivationKind("leaky_relu", 0.07))]
        path = tmp_path / "m.agm"
        save_model(MLPModel(layers), path)
        back = load_model(path)
        act = back.activation_layers()[0]
        assert act.baseline.tag == "leaky_relu"
        assert act.baseline.slope == 0.07

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.agm"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(engine.ModelFormatError):
            load_model(path)

    def test_truncated_rejected(self, tmp_path, blob_dataset):
        config = TrainConfig(epochs=1, batch_size=16, learning_rate=0.01,
                             weight_decay=0.0, seed=9)
        model, _ = train(ModelSpec(2, (8,), 2), blob_dataset, config)
        path = tmp_path / "model.agm"
        save_model(model, path)
        whole = path.read_bytes()
        (tmp_path / "cut.agm").write_bytes(whole[:-9])
        with pytest.raises(engine.ModelFormatError):
            load_model(tmp_path / "cut.agm")
        (tmp_path / "pad.agm").write_bytes(whole + b"xx")
        with pytest.raises(engine.ModelFormatError):
            load_model(tmp_path / "pad.agm")


def test_parameter_count_traversal():
    spec = ModelSpec(3, (8, 5), 3)
    assert tiny_model(granularity="layer_wise", spec=spec) \
        .learnable_activation_parameter_count() == 14
    assert tiny_model(granularity="global_shared", spec=spec) \
        .learnable_activation_parameter_count() == 7
    assert tiny_model(granularity="fixed", spec=spec) \
        .learnable_activation_parameter_count() == 0
    assert tiny_model(strategy="relu_baseline", spec=spec) \
        .learnable_activation_parameter_count() == 0
