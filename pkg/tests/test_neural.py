import numpy as np
import pytest

from ridkit.neural import (
    AdamState,
    MlpParams,
    MlpSpec,
    adam_step,
    init_adam,
    init_mlp,
    mlp_forward,
    mlp_from_jsonable,
    mlp_to_jsonable,
    mse_loss,
    train_regressor,
)


def test_zero_linear_model_outputs_zero():
    spec = MlpSpec(3, 2)
    params = MlpParams(spec, (np.zeros((3, 2)),), (np.zeros((1, 2)),))
    out = mlp_forward(params, np.random.default_rng(0).standard_normal((5, 3)))
    np.testing.assert_array_equal(out, np.zeros((5, 2)))


def test_identity_weight_linear_layer():
    spec = MlpSpec(2, 2)
    params = MlpParams(spec, (np.eye(2),), (np.zeros((1, 2)),))
    np.testing.assert_array_equal(mlp_forward(params, [[1.0, 2.0]]), [[1.0, 2.0]])


def test_hidden_layer_bias_determines_output_at_zero():
    # tanh net evaluated at x=0: output = w2.T tanh(b1) + b2
    spec = MlpSpec(1, 1, (2,), "tanh")
    w1 = np.array([[1.0, -1.0]])
    b1 = np.array([[0.5, 0.25]])
    w2 = np.array([[2.0], [1.0]])
    b2 = np.array([[0.1]])
    params = MlpParams(spec, (w1, w2), (b1, b2))
    expected = 2.0 * np.tanh(0.5) + 1.0 * np.tanh(0.25) + 0.1
    np.testing.assert_allclose(mlp_forward(params, [[0.0]]), [[expected]])


def test_mse_hand_values():
    rows, mean = mse_loss(np.array([[1.0, 2.0]]), np.array([[1.0, 2.0]]))
    assert mean == 0.0
    rows, mean = mse_loss(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
    assert mean == 25.0
    rows, mean = mse_loss(
        np.array([[1.0, 2.0], [0.0, 0.0]]), np.array([[1.0, 2.0], [3.0, 4.0]])
    )
    np.testing.assert_allclose(rows, [[0.0], [25.0]])
    assert mean == 12.5


def test_mse_symmetry_and_zero_iff_equal():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((6, 3))
    b = rng.standard_normal((6, 3))
    assert mse_loss(a, b)[1] == mse_loss(b, a)[1]
    assert mse_loss(a, a)[1] == 0.0
    assert mse_loss(a, b)[1] > 0.0


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))


def test_adam_first_step_hand_value():
    p = [np.zeros((2, 2))]
    g = [np.ones((2, 2))]
    state = init_adam(p, learning_rate=1e-3, weight_decay=0.0)
    new_p, new_state = adam_step(p, g, state)
    # t=1 bias correction makes m_hat = v_hat = 1, so delta = lr / (1 + eps)
    expected = -1e-3 * (1.0 / (1.0 + 1e-8))
    np.testing.assert_allclose(new_p[0], np.full((2, 2), expected), rtol=1e-12)
    assert new_state.step_count == 1


def test_adam_zero_grad_keeps_params():
    p = [np.full((2, 2), 0.7)]
    state = init_adam(p, weight_decay=0.0)
    new_p, _ = adam_step(p, [np.zeros((2, 2))], state)
    np.testing.assert_array_equal(new_p[0], p[0])


def test_adam_identical_params_get_identical_updates():
    p = [np.full((2, 1), 0.3), np.full((2, 1), 0.3)]
    g = [np.full((2, 1), 0.1), np.full((2, 1), 0.1)]
    state = init_adam(p)
    new_p, _ = adam_step(p, g, state)
    np.testing.assert_array_equal(new_p[0], new_p[1])


def test_adam_zero_lr_keeps_params():
    rng = np.random.default_rng(2)
    p = [rng.standard_normal((3, 3))]
    g = [rng.standard_normal((3, 3))]
    state = init_adam(p, learning_rate=0.0, weight_decay=0.1)
    new_p, _ = adam_step(p, g, state)
    np.testing.assert_array_equal(new_p[0], p[0])


def test_adam_state_validation():
    with pytest.raises(ValueError):
        AdamState(beta1=1.0)
    with pytest.raises(ValueError):
        AdamState(learning_rate=-1.0)


def test_glorot_init_bounds():
    spec = MlpSpec(10, 4, (8,))
    params = init_mlp(spec, np.random.default_rng(0))
    bound0 = np.sqrt(6.0 / (10 + 8))
    assert np.abs(params.weights[0]).max() <= bound0
    assert np.all(params.biases[0] == 0.0)


def test_train_regressor_fits_noiseless_linear_rule():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(400, 1))
    y = 2.0 * x
    params, trace = train_regressor(
        MlpSpec(1, 1, (16,)), (x, y), None, epochs=400, batch_size=64, seed=0,
        weight_decay=0.0,
    )
    _, final_mse = mse_loss(mlp_forward(params, x), y)
    assert final_mse < 1e-3
    assert len(trace) == 400


def test_train_regressor_constant_zero_target():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200, 2))
    y = np.zeros((200, 1))
    params, _ = train_regressor(
        MlpSpec(2, 1, (8,)), (x, y), None, epochs=100, batch_size=50, seed=0
    )
    _, m = mse_loss(mlp_forward(params, x), y)
    assert m < 1e-4


def test_train_regressor_recovers_mean_function_under_noise():
    # y = x + N(0, 0.1^2): validation MSE should sit near the noise floor and
    # the prediction error against the clean rule should be well below sigma
    rng = np.random.default_rng(7)
    sigma = 0.1
    x = rng.uniform(-1, 1, size=(4000, 1))
    y = x + sigma * rng.standard_normal((4000, 1))
    params, trace = train_regressor(
        MlpSpec(1, 1, (32,)), (x[:3500], y[:3500]), (x[3500:], y[3500:]),
        epochs=120, batch_size=128, seed=0,
    )
    assert trace[-1]["valid_mse"] == pytest.approx(sigma**2, rel=0.5)
    clean_err = np.sqrt(mse_loss(mlp_forward(params, x), x)[1])
    assert clean_err < sigma


def test_train_regressor_reproducible():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((100, 2))
    y = x[:, :1] - x[:, 1:]
    a = train_regressor(MlpSpec(2, 1, (8,)), (x, y), None, epochs=20, batch_size=32, seed=5)
    b = train_regressor(MlpSpec(2, 1, (8,)), (x, y), None, epochs=20, batch_size=32, seed=5)
    assert [r["train_mse"] for r in a[1]] == [r["train_mse"] for r in b[1]]


def test_train_regressor_empty_raises():
    with pytest.raises(ValueError):
        train_regressor(MlpSpec(1, 1), (np.zeros((0, 1)), np.zeros((0, 1))), None, 1, 8, 0)


def test_mlp_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(0, 1)
    with pytest.raises(ValueError):
        MlpSpec(1, 1, (4,), "sigmoid")


def test_mlp_serialization_round_trip():
    params = init_mlp(MlpSpec(3, 2, (5, 4), "relu"), np.random.default_rng(9))
    doc = mlp_to_jsonable(params)
    back = mlp_from_jsonable(doc)
    assert back.spec == params.spec
    for w1, w2 in zip(params.weights, back.weights):
        np.testing.assert_array_equal(w1, w2)
    assert doc["format_version"] == 1
