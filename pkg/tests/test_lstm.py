import numpy as np
import pandas as pd
import pytest
from scipy.special import expit

from aquatwin import lstm
from aquatwin.features import FeatureMatrix


def random_params(seed, H=4, D=2, scale=0.5):
    rng = np.random.default_rng(seed)
    p = lstm.LstmParams.init(H, D, rng)
    return p.with_flat(rng.normal(0.0, scale, p.flat().size))


def oracle_step(p, C, h, x):
    """Gate equations written out one unit at a time."""
    z = list(h) + list(x)
    H = len(h)
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    dot = lambda W, b, j: sum(W[j, k] * z[k] for k in range(len(z))) + b[j]
    f = [sig(dot(p.W_f, p.b_f, j)) for j in range(H)]
    i = [sig(dot(p.W_i, p.b_i, j)) for j in range(H)]
    ct = [np.tanh(dot(p.W_c, p.b_c, j)) for j in range(H)]
    o = [sig(dot(p.W_o, p.b_o, j)) for j in range(H)]
    C_new = [f[j] * C[j] + i[j] * ct[j] for j in range(H)]
    h_new = [o[j] * np.tanh(C_new[j]) for j in range(H)]
    return np.array(C_new), np.array(h_new)


def matrix(n, D=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, D))
    return FeatureMatrix(X, X @ np.arange(1.0, D + 1), [f"x{j}" for j in range(D)],
                         pd.date_range("2024-01-01", periods=n))


def test_make_sequences_counts_and_alignment():
    m = matrix(5)
    X, y = lstm.make_sequences(m, 2)
    assert X.shape == (3, 2, 2) and y.shape == (3,)
    assert y[0] == m.y[2]
    np.testing.assert_array_equal(X[1], m.X[1:3])
    with pytest.raises(ValueError):
        lstm.make_sequences(m, 5)


def test_make_sequences_random_shapes():
    m = matrix(40, D=3, seed=2)
    for L in (1, 7, 39):
        X, y = lstm.make_sequences(m, L)
        assert X.shape == (40 - L, L, 3) and y.shape == (40 - L,)
        for s in (0, len(y) - 1):
            np.testing.assert_array_equal(X[s], m.X[s:s + L])
            assert y[s] == m.y[s + L]


def test_cell_zero_params():
    p = lstm.LstmParams.zeros(3, 2)
    C0 = np.array([0.4, -1.0, 2.0])
    st = lstm.cell_forward(p, lstm.LstmState(C0, np.zeros(3)), [1.0, -2.0])
    np.testing.assert_allclose(st.f, 0.5)
    np.testing.assert_allclose(st.i, 0.5)
    np.testing.assert_allclose(st.o, 0.5)
    np.testing.assert_allclose(st.c_tilde, 0.0)
    np.testing.assert_allclose(st.C, 0.5 * C0)
    np.testing.assert_allclose(st.h, 0.5 * np.tanh(0.5 * C0))
    zero = lstm.cell_forward(p, lstm.LstmState(np.zeros(3), np.zeros(3)), [1.0, 1.0])
    assert np.all(zero.h == 0.0)


def test_cell_matches_oracle():
    for seed in range(5):
        p = random_params(seed, H=3, D=2)
        rng = np.random.default_rng(100 + seed)
        C, h, x = rng.normal(size=3), np.tanh(rng.normal(size=3)), rng.normal(size=2)
        st = lstm.cell_forward(p, lstm.LstmState(C, h), x)
        C_o, h_o = oracle_step(p, C, h, x)
        np.testing.assert_allclose(st.C, C_o, rtol=0, atol=1e-12)
        np.testing.assert_allclose(st.h, h_o, rtol=0, atol=1e-12)


def test_cell_dimension_mismatch():
    p = lstm.LstmParams.zeros(3, 2)
    with pytest.raises(ValueError):
        lstm.cell_forward(p, lstm.LstmState(np.zeros(3), np.zeros(3)), [1.0, 2.0, 3.0])


def test_gate_ranges_on_forward():
    p = random_params(7, H=5, D=2, scale=1.0)
    rng = np.random.default_rng(0)
    st = lstm.LstmState(np.zeros(5), np.zeros(5))
    for x in rng.normal(size=(20, 2)):
        st = lstm.cell_forward(p, st, x)
        for g in (st.f, st.i, st.o):
            assert np.all((g > 0) & (g < 1))
        assert np.all(np.abs(st.c_tilde) < 1) and np.all(np.abs(st.h) < 1)


def test_forward_sequence_compositions():
    p = lstm.LstmParams.zeros(4, 2)
    p.b_out = 3.5
    assert lstm.forward_sequence(p, np.ones((6, 2))) == 3.5
    q = random_params(3)
    x = np.array([[0.3, -0.7]])
    st = lstm.cell_forward(q, lstm.LstmState(np.zeros(4), np.zeros(4)), x[0])
    assert lstm.forward_sequence(q, x) == pytest.approx(float(st.h @ q.w_out + q.b_out), abs=1e-15)


def test_forward_three_steps_vs_oracle():
    p = random_params(11)
    X = np.random.default_rng(5).normal(size=(3, 2))
    C, h = np.zeros(4), np.zeros(4)
    for x in X:
        C, h = oracle_step(p, C, h, x)
    assert lstm.forward_sequence(p, X) == pytest.approx(float(h @ p.w_out + p.b_out), abs=1e-12)
    batch = lstm.forward_sequence(p, np.stack([X, X[::-1]]))
    assert batch[0] == pytest.approx(lstm.forward_sequence(p, X), abs=1e-15)


def test_loss_examples():
    assert lstm.loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert lstm.loss([0.0], [2.0]) == 4.0
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=9), rng.normal(size=9)
    assert lstm.loss(a, b) == pytest.approx(sum((a - b) ** 2) / 9, rel=1e-14)
    with pytest.raises(ValueError):
        lstm.loss([], [])


def test_backward_zero_at_exact_fit():
    p = random_params(4)
    X = np.random.default_rng(2).normal(size=(6, 3, 2))
    y = lstm.forward_sequence(p, X)
    value, grads = lstm.backward(p, X, y)
    assert value == 0.0
    assert all(np.all(g == 0.0) for g in grads.values())


def test_dense_bias_gradient_is_twice_mean_residual():
    p = random_params(9)
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(8, 3, 2)), rng.normal(size=8)
    _, grads = lstm.backward(p, X, y)
    assert grads["b_out"][0] == pytest.approx(2.0 * np.mean(lstm.forward_sequence(p, X) - y), abs=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_check(seed):
    p = random_params(seed)
    rng = np.random.default_rng(1000 + seed)
    errors = lstm.gradient_check(p, rng.normal(size=(5, 3, 2)), rng.normal(size=5))
    assert max(errors.values()) < 1e-4, errors


def test_train_lr_zero_keeps_params():
    m = matrix(30)
    init = random_params(1, H=4, D=2)
    model = lstm.train(m, lstm.TrainConfig(sequence_length=3, hidden_size=4, epochs=1, learning_rate=0.0),
                       init=init)
    np.testing.assert_array_equal(model.params.flat(), init.flat())


def test_train_reduces_loss_and_is_deterministic():
    m = matrix(200, seed=4)
    cfg = lstm.TrainConfig(sequence_length=3, hidden_size=6, epochs=15, learning_rate=0.1, seed=7)
    a = lstm.train(m, cfg)
    b = lstm.train(m, cfg)
    X, y = lstm.make_sequences(m, 3)
    untrained = lstm.LstmParams.init(6, 2, np.random.default_rng(7))
    Xs = a.scale_inputs(X)
    ys = a.y_scaling.transform(y)
    assert a.history["train"][-1] < lstm.loss(lstm.forward_sequence(untrained, Xs[:len(ys)]), ys)
    assert a.params.flat().tobytes() == b.params.flat().tobytes()
    assert len(a.history["validation"]) == 15


def test_train_divergence_names_epoch():
    m = matrix(60)
    with pytest.raises(lstm.TrainingDiverged, match="epoch"):
        lstm.train(m, lstm.TrainConfig(sequence_length=3, hidden_size=4, epochs=50, learning_rate=1e200))


def test_config_validation():
    with pytest.raises(ValueError):
        lstm.TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        lstm.TrainConfig(validation_fraction=0.6)


def test_predict_inverse_scaling_composition():
    m = matrix(80, seed=6)
    model = lstm.train(m, lstm.TrainConfig(sequence_length=4, hidden_size=4, epochs=3, learning_rate=0.1))
    window = m.X[10:14]
    z = lstm.forward_sequence(model.params, model.scale_inputs(window))
    assert lstm.predict(model, window) == pytest.approx(float(model.y_scaling.inverse(z)), abs=1e-12)
    batch = lstm.predict(model, np.stack([m.X[10:14], m.X[20:24]]))
    assert batch[0] == pytest.approx(lstm.predict(model, window), abs=1e-12)
    z_back = model.y_scaling.transform(lstm.predict(model, window))
    assert float(z_back) == pytest.approx(z, abs=1e-9)
    with pytest.raises(ValueError):
        lstm.predict(model, m.X[:3])


def test_checkpoint_roundtrip(tmp_path):
    m = matrix(50)
    model = lstm.train(m, lstm.TrainConfig(sequence_length=3, hidden_size=3, epochs=2))
    lstm.save_checkpoint(model, tmp_path / "m.json")
    back = lstm.load_checkpoint(tmp_path / "m.json")
    np.testing.assert_array_equal(back.params.flat(), model.params.flat())
    assert lstm.predict(back, m.X[:3]) == lstm.predict(model, m.X[:3])
