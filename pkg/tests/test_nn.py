import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from action_signal.config.schema import DynamicsModelConfig
from action_signal.core.exceptions import (
    ConfigurationError,
    DataValidationError,
    DivergenceError,
    SequenceTooLongError,
    ShapeMismatchError,
)
from action_signal.nn.gradcheck import MAX_CHECKED_PARAMETERS, finite_difference_check
from action_signal.nn.layers import MultiHeadAttention, attention_mask, softmax_last
from action_signal.nn.losses import LossWeights, compute_losses
from action_signal.nn.model import BehaviorCloneModel, DynamicsModel, ModelOutputs
from action_signal.nn.optim import Adam, backward_and_step
from action_signal.nn.params import ParameterSet
from action_signal.nn.tensorfile import load_tensors, read_header, save_tensors
from action_signal.preprocessing.dataset import build_action_dataset


def make_model(config, prepared, scheme="StatesAndActions", seed=0, horizon=6):
    return DynamicsModel(
        config,
        n_channels=prepared.test.n_channels,
        n_demographics=prepared.test.n_demographics,
        horizon=horizon,
        scheme=scheme,
        seed=seed,
        stats_fingerprint=prepared.stats.fingerprint(),
    )


def double_severity_head(grads):
    grads["head.severity.W"] *= 2.0


# Attention


def test_attention_mask():
    valid = np.array([[False, True, True]])
    expected = np.array(
        [
            [True, False, False],
            [False, True, False],
            [False, True, True],
        ]
    )
    np.testing.assert_array_equal(attention_mask(valid)[0], expected)


def test_attention_matches_reference_loop(rng):
    params = ParameterSet()
    attn = MultiHeadAttention(params, "attn", dim=4, heads=2, rng=rng)
    x = rng.normal(size=(2, 3, 4))
    valid = np.array([[True, True, True], [False, True, True]])
    out = attn.forward(x, attention_mask(valid))

    def proj(name):
        return x @ params[f"attn.{name}.W"] + params[f"attn.{name}.b"]

    q, k, v = proj("q"), proj("k"), proj("v")
    expected = np.zeros_like(x)
    for b in range(2):
        merged = np.zeros((3, 4))
        for h in range(2):
            cols = slice(2 * h, 2 * h + 2)
            for i in range(3):
                allowed = [j for j in range(i + 1) if valid[b, j] or j == i]
                scores = np.array([q[b, i, cols] @ k[b, j, cols] / math.sqrt(2) for j in allowed])
                weights = softmax_last(scores)
                merged[i, cols] = sum(w * v[b, j, cols] for w, j in zip(weights, allowed))
        expected[b] = merged @ params["attn.o.W"] + params["attn.o.b"]
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_encoder_is_causal(tiny_model_config, prepared, rng):
    model = make_model(tiny_model_config, prepared)
    states = rng.normal(size=(3, 4, prepared.test.n_channels))
    demographics = rng.normal(size=(3, prepared.test.n_demographics))
    base = model.encoder_forward(states, demographics)
    for j in range(1, 4):
        mutated = states.copy()
        mutated[:, j:] += rng.normal(size=mutated[:, j:].shape) * 5.0
        out = model.encoder_forward(mutated, demographics)
        np.testing.assert_allclose(out[:, :j], base[:, :j], rtol=0, atol=1e-12)
        assert not np.allclose(out[:, j], base[:, j])


def test_prediction_ignores_states_after_anchor(tiny_model_config, prepared, test_records, rng):
    model = make_model(tiny_model_config, prepared)
    split = prepared.test
    for i in range(5):
        p, t = test_records.record_patient[i], test_records.record_anchor[i]
        start, end = split.offsets[p], split.offsets[p + 1]
        states = split.states.copy()
        states[start + t + 1 : end] = rng.normal(size=states[start + t + 1 : end].shape) * 10.0
        record = np.array([i])
        mutated = replace(test_records, split=replace(split, states=states)).subset(record)
        np.testing.assert_array_equal(
            model.predict(mutated), model.predict(test_records.subset(record))
        )


def test_predictions_do_not_depend_on_batching(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared)
    whole = model.predict(test_records)
    chunked = model.predict(test_records, batch_size=3)
    np.testing.assert_allclose(chunked, whole, rtol=0, atol=1e-12)


# Gradients


def test_dynamics_gradients_match_finite_differences(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared)
    batch = test_records.batch(np.arange(min(6, len(test_records))))
    result = finite_difference_check(model, batch)
    assert result.n_checked == model.params.n_parameters
    assert result.max_rel_error < 1e-4, result.worst_parameter


def test_behavior_clone_gradients_match_finite_differences(tiny_model_config, prepared):
    records = build_action_dataset(prepared.test, context_length=4)
    model = BehaviorCloneModel(
        tiny_model_config,
        prepared.test.n_channels,
        prepared.test.n_demographics,
        hidden_dim=8,
        seed=1,
    )
    result = finite_difference_check(model, records.batch(np.arange(min(6, len(records)))))
    assert result.max_rel_error < 1e-4, result.worst_parameter


def test_gradcheck_refuses_large_models(prepared):
    model = make_model(DynamicsModelConfig(), prepared)
    assert model.params.n_parameters > MAX_CHECKED_PARAMETERS
    with pytest.raises(ConfigurationError, match="at most"):
        finite_difference_check(model, batch=None)


def test_gradcheck_detects_wrong_gradient(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared)
    batch = test_records.batch(np.arange(min(4, len(test_records))))
    result = finite_difference_check(model, batch, grad_transform=double_severity_head)
    assert result.worst_parameter == "head.severity.W"
    assert result.max_rel_error > 0.5


# Losses and optimizer


def test_loss_matches_hand_computation():
    outputs = ModelOutputs(
        severity=np.array([0.5, -1.0]),
        state=np.array([[1.0, 0.0], [0.0, 2.0]]),
        terminal=np.array([0.0, 2.0]),
        adjacency=np.array([1.0, -1.0]),
    )
    targets = SimpleNamespace(
        target=np.array([0.0, 0.0]),
        current_state=np.zeros((2, 2)),
        terminal=np.array([1.0, 0.0]),
        adj_label=np.array([1.0, 0.0]),
        adj_weight=np.array([1.0, 0.0]),
    )
    weights = LossWeights(state=0.1, terminal=0.2, adjacency=0.3)
    result = compute_losses(outputs, targets, weights)

    severity = (0.25 + 1.0) / 2
    state = (1.0 + 4.0) / 4
    terminal = (math.log(2.0) + math.log(1.0 + math.exp(2.0))) / 2
    adjacency = math.log(1.0 + math.exp(-1.0))
    assert result.components["severity"] == pytest.approx(severity, abs=1e-12)
    assert result.components["state"] == pytest.approx(state, abs=1e-12)
    assert result.components["terminal"] == pytest.approx(terminal, abs=1e-12)
    assert result.components["adjacency"] == pytest.approx(adjacency, abs=1e-12)
    expected = severity + 0.1 * state + 0.2 * terminal + 0.3 * adjacency
    assert result.total == pytest.approx(expected, abs=1e-12)
    # Records without a feasible pair contribute no adjacency gradient
    assert result.d_adjacency[1] == 0.0


def test_adam_first_step_has_learning_rate_size():
    params = ParameterSet()
    params.add("x", np.array([1.0, -2.0, 3.0]))
    params.grads["x"][...] = [0.5, -40.0, 1e-3]
    Adam(params, learning_rate=0.01).step()
    np.testing.assert_allclose(params["x"], [0.99, -1.99, 2.99], rtol=0, atol=1e-6)
    assert params.step_count == 1


def test_adam_minimizes_quadratic():
    target = np.array([3.0, -1.0])
    params = ParameterSet()
    params.add("x", np.zeros(2))
    optimizer = Adam(params, learning_rate=0.05, total_steps=2000, cosine_decay=True)
    for _ in range(2000):
        params.grads["x"][...] = 2.0 * (params["x"] - target)
        optimizer.step()
    np.testing.assert_allclose(params["x"], target, atol=1e-2)


def test_cosine_decay_reaches_zero():
    params = ParameterSet()
    params.add("x", np.zeros(1))
    optimizer = Adam(params, learning_rate=0.1, total_steps=10, cosine_decay=True)
    assert optimizer.current_lr() == pytest.approx(0.1)
    params.step_count = 5
    assert optimizer.current_lr() == pytest.approx(0.05)
    params.step_count = 10
    assert optimizer.current_lr() == pytest.approx(0.0, abs=1e-15)


def test_divergence_leaves_parameters_untouched(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared)
    batch = test_records.batch(np.arange(4))
    bad = replace(batch, target=np.full(4, np.nan))
    before = model.params.snapshot()
    optimizer = Adam(model.params, learning_rate=0.1)
    with pytest.raises(DivergenceError) as excinfo:
        backward_and_step(model, bad, optimizer)
    assert "components" in excinfo.value.dump
    assert model.params.step_count == 0
    for name, value in before.items():
        np.testing.assert_array_equal(model.params[name], value)


def test_training_step_reduces_loss(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared)
    batch = test_records.batch(np.arange(min(16, len(test_records))))
    optimizer = Adam(model.params, learning_rate=1e-2)
    first = backward_and_step(model, batch, optimizer).total
    for _ in range(30):
        backward_and_step(model, batch, optimizer)
    assert model.loss(batch).total < first


# Shapes and checkpoints


def test_sequence_too_long(tiny_model_config, prepared, rng):
    model = make_model(tiny_model_config, prepared)
    states = rng.normal(size=(1, 5, prepared.test.n_channels))
    with pytest.raises(SequenceTooLongError, match="sequence too long"):
        model.encoder_forward(states, np.zeros((1, prepared.test.n_demographics)))


def test_action_shape_checked(tiny_model_config, prepared):
    model = make_model(tiny_model_config, prepared)
    embeddings = np.zeros((2, 4, tiny_model_config.embed_dim))
    with pytest.raises(ShapeMismatchError, match="action tensor shape mismatch"):
        model.dynamics_forward(embeddings, np.zeros((2, 5, 2)))


def test_checkpoint_round_trip(tiny_model_config, prepared, test_records, tmp_path):
    model = make_model(tiny_model_config, prepared, scheme="ActionsOnly", seed=4)
    path = model.save(tmp_path / "model.tensors", extra={"cell": "demo"})
    loaded = DynamicsModel.load(path)
    assert loaded.scheme == model.scheme
    assert read_header(path)["metadata"]["cell"] == "demo"
    np.testing.assert_array_equal(loaded.predict(test_records), model.predict(test_records))


def test_tensor_file_round_trip(tmp_path):
    tensors = {
        "weights": np.arange(6, dtype=np.float64).reshape(2, 3),
        "index": np.array([3, 1, 2], dtype=np.int64),
        "flags": np.array([True, False]),
    }
    path = save_tensors(tmp_path / "t.tensors", tensors, {"note": "x"})
    loaded, meta = load_tensors(path)
    assert meta == {"note": "x"}
    for name, value in tensors.items():
        assert loaded[name].dtype == value.dtype
        np.testing.assert_array_equal(loaded[name], value)

    data = path.read_bytes()
    path.write_bytes(data[:-4])
    with pytest.raises(DataValidationError, match="truncated"):
        load_tensors(path)
