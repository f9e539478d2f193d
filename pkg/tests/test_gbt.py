import itertools

import numpy as np
import pandas as pd
import pytest

from aquatwin import gbt

PLAIN = gbt.GbtHyperParams(learning_rate=0.3, num_leaves=8, min_samples_leaf=2, num_boost_round=20)


def fixture(seed, n=120, F=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, F))
    y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2 - 0.5 * X[:, 2] + rng.normal(0, 0.1, n)
    return X, y


def test_constant_residuals_single_leaf():
    X = np.random.default_rng(0).normal(size=(40, 3))
    tree = gbt.grow_tree(X, np.full(40, 2.5), gbt.GbtHyperParams(reg_lambda=4.0))
    assert tree.n_leaves == 1
    assert tree.value[0] == pytest.approx(2.5 / (1 + 4.0 / 40), rel=1e-14)


def test_step_function_threshold_matches_brute_force():
    x = np.sort(np.random.default_rng(1).uniform(0, 10, 60))
    r = np.where(x <= 4.2, -1.0, 3.0)
    hp = gbt.GbtHyperParams(num_leaves=2, min_samples_leaf=1)
    tree = gbt.grow_tree(x[:, None], r, hp)
    assert tree.n_leaves == 2
    # brute force over every cut between consecutive points
    sse = [np.var(r[:k]) * k + np.var(r[k:]) * (60 - k) for k in range(1, 60)]
    k = int(np.argmin(sse)) + 1
    assert x[k - 1] < tree.threshold[0] < x[k]
    assert x[k - 1] <= 4.2 < x[k]


def test_gamma_refuses_stump():
    X, y = fixture(2)
    r = y - y.mean()
    tree = gbt.grow_tree(X, r, gbt.GbtHyperParams(gamma=1e9))
    assert tree.n_leaves == 1


def test_leaf_count_and_binary_structure():
    X, y = fixture(3, n=400)
    for leaves in (2, 5, 13):
        tree = gbt.grow_tree(X, y - y.mean(), gbt.GbtHyperParams(num_leaves=leaves, min_samples_leaf=3))
        assert tree.n_leaves <= leaves
        internal = tree.feature >= 0
        assert np.all(tree.left[internal] >= 0) and np.all(tree.right[internal] >= 0)
        assert internal.sum() == tree.n_leaves - 1


def test_depthwise_respects_max_depth():
    X, y = fixture(4, n=400)
    tree = gbt.grow_tree(X, y - y.mean(), gbt.xgboost_style(max_depth=3, min_samples_leaf=1))
    assert tree.depth <= 3 and tree.n_leaves <= 8


def test_min_samples_leaf():
    X, y = fixture(5, n=100)
    hp = gbt.GbtHyperParams(num_leaves=50, min_samples_leaf=9)
    tree = gbt.grow_tree(X, y - y.mean(), hp)
    leaf_of = np.array([0] * 100)
    # route rows and count per leaf
    node = np.zeros(100, dtype=int)
    for _ in range(tree.depth):
        f = tree.feature[node]
        inner = f >= 0
        go = X[np.arange(100), np.where(inner, f, 0)] <= tree.threshold[node]
        node = np.where(inner, np.where(go, tree.left[node], tree.right[node]), node)
    counts = np.bincount(node)
    assert counts[counts > 0].min() >= 9


def test_l1_soft_threshold_leaf():
    r = np.array([1.0, 2.0, 3.0])
    tree = gbt.grow_tree(np.zeros((3, 1)), r, gbt.GbtHyperParams(alpha=2.0, reg_lambda=1.0))
    assert tree.value[0] == pytest.approx((6.0 - 2.0) / (3 + 1.0))
    tree = gbt.grow_tree(np.zeros((3, 1)), r, gbt.GbtHyperParams(alpha=10.0))
    assert tree.value[0] == 0.0


def test_one_round_one_leaf_predicts_mean():
    X, y = fixture(6)
    hp = gbt.GbtHyperParams(learning_rate=1.0, num_leaves=1, num_boost_round=1)
    model = gbt.boost(X, y, hp)
    np.testing.assert_allclose(gbt.predict(model, X), y.mean(), atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_training_mse_non_increasing(seed):
    X, y = fixture(100 + seed)
    hp = gbt.GbtHyperParams(learning_rate=0.5, num_leaves=6, min_samples_leaf=3, num_boost_round=30)
    hist = gbt.boost(X, y, hp).history["train"]
    assert np.all(np.diff(hist) <= 1e-12 * hist[0])


def test_same_seed_identical_trees():
    X, y = fixture(7)
    hp = gbt.GbtHyperParams(feature_fraction=0.5, bagging_fraction=0.7, bagging_freq=2, seed=3,
                            num_boost_round=10)
    a, b = gbt.boost(X, y, hp), gbt.boost(X, y, hp)
    assert a.dump() == b.dump()


def test_permuting_rows_gives_identical_trees():
    X, y = fixture(8)
    perm = np.random.default_rng(0).permutation(len(y))
    a, b = gbt.boost(X, y, PLAIN), gbt.boost(X[perm], y[perm], PLAIN)
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.feature, tb.feature)
        np.testing.assert_array_equal(ta.threshold, tb.threshold)
        np.testing.assert_allclose(ta.value, tb.value, rtol=1e-12, atol=1e-15)


def test_early_stopping():
    X, y = fixture(9, n=300)
    hp = gbt.GbtHyperParams(learning_rate=0.5, num_boost_round=200, early_stopping_rounds=5, min_samples_leaf=1,
                            num_leaves=64)
    model = gbt.boost(X[:200], y[:200], hp, validation=(X[200:], y[200:]))
    val = model.history["validation"]
    assert len(val) < 200
    assert model.best_iteration == int(np.argmin(val)) + 1 == len(model.trees)
    assert len(val) - model.best_iteration == 5
    with pytest.raises(ValueError):
        gbt.boost(X, y, hp)


def test_predict_contract():
    X, y = fixture(10)
    model = gbt.boost(X, y, PLAIN)
    empty = gbt.GbtModel([], 4.0, PLAIN, ["a"])
    assert gbt.predict(empty, np.zeros((3, 1))).tolist() == [4.0] * 3
    batch = gbt.predict(model, X[:10])
    singles = [gbt.predict(model, X[i:i + 1])[0] for i in range(10)]
    np.testing.assert_allclose(batch, singles, rtol=0, atol=0)
    frame = pd.DataFrame(X, columns=["x0", "x1", "x2", "x3"])
    np.testing.assert_allclose(gbt.predict(model, frame[["x3", "x2", "x1", "x0"]]), gbt.predict(model, X))
    with pytest.raises(KeyError):
        gbt.predict(model, frame.drop(columns="x2"))


def test_single_stump_hand_trace():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([1.0, 1.0, 5.0, 5.0])
    hp = gbt.GbtHyperParams(learning_rate=0.5, num_leaves=2, min_samples_leaf=1, num_boost_round=1)
    model = gbt.boost(X, y, hp)
    # base 3, leaves -2 / +2, threshold 1.5
    assert model.trees[0].threshold[0] == 1.5
    np.testing.assert_allclose(gbt.predict(model, [[0.5], [2.5]]), [3 - 1.0, 3 + 1.0])


def test_dump_lists_thresholds():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    model = gbt.boost(X, [1.0, 1.0, 5.0, 5.0], gbt.GbtHyperParams(num_leaves=2, min_samples_leaf=1,
                                                                  num_boost_round=1), feature_names=["tmax"])
    text = model.dump()
    assert "node tmax <= 1.5" in text and text.count("leaf value=") == 2


def test_folds_chronological():
    folds = gbt.expanding_window_folds(100, 4)
    assert len(folds) == 4
    for tr, va in folds:
        assert tr.max() < va.min() and tr[0] == 0
    with pytest.raises(ValueError):
        gbt.expanding_window_folds(5, 3)
    with pytest.raises(ValueError):
        gbt.expanding_window_folds(100, 1)


def test_search_single_draw():
    X, y = fixture(11, n=90)
    res = gbt.randomized_search(X, y, {"learning_rate": [0.05]}, k=2, n_draws=1, seed=4,
                                base=gbt.GbtHyperParams(num_boost_round=5))
    assert res.best.learning_rate == 0.05 and res.best.seed == 4
    assert len(res.table) == 1


def test_search_picks_dominant_draw():
    X, y = fixture(12, n=150)
    base = gbt.GbtHyperParams(num_boost_round=15, min_samples_leaf=3)
    space = {"learning_rate": [0.3, 0.001]}
    res = gbt.randomized_search(X, y, space, k=3, n_draws=6, seed=1, base=base)
    folds = gbt.expanding_window_folds(150, 3)
    direct = {}
    for lr in (0.3, 0.001):
        hp = gbt.GbtHyperParams(num_boost_round=15, min_samples_leaf=3, learning_rate=lr)
        direct[lr] = np.mean([np.mean(np.abs(y[va] - gbt.predict(gbt.boost(X[tr], y[tr], hp), X[va])))
                              for tr, va in folds])
    assert set(res.table["learning_rate"]) == {0.3, 0.001}
    assert res.best.learning_rate == min(direct, key=direct.get)
    assert res.table["mean_mae"].min() == pytest.approx(min(direct.values()), rel=1e-12)


def test_search_parallel_matches_serial():
    X, y = fixture(13, n=90)
    base = gbt.GbtHyperParams(num_boost_round=4)
    a = gbt.randomized_search(X, y, k=2, n_draws=3, seed=2, base=base)
    b = gbt.randomized_search(X, y, k=2, n_draws=3, seed=2, base=base, n_jobs=2)
    pd.testing.assert_frame_equal(a.table, b.table)


def test_stack_member_equal_to_truth():
    y = np.random.default_rng(0).normal(size=30)
    P = np.column_stack([y + 1.0, y, y - 2.0])
    np.testing.assert_allclose(gbt.stack_weights(P, y), [0, 1, 0], atol=1e-12)
    np.testing.assert_allclose(gbt.stack_weights(P, y, loss="absolute"), [0, 1, 0], atol=1e-9)


def test_stack_identical_members():
    P = np.column_stack([np.arange(5.0)] * 2)
    assert gbt.stack_weights(P, np.ones(5)).tolist() == [0.5, 0.5]


def test_stack_against_grid_oracle():
    rng = np.random.default_rng(3)
    y = rng.normal(size=50)
    P = np.column_stack([y + rng.normal(0, 1, 50), 0.5 * y + rng.normal(0, 0.5, 50)])
    w = gbt.stack_weights(P, y)
    grid = np.linspace(0, 1, 100001)
    sse = [np.sum((a * P[:, 0] + (1 - a) * P[:, 1] - y) ** 2) for a in grid]
    a_star = grid[int(np.argmin(sse))]
    assert w[0] == pytest.approx(a_star, abs=2e-5)
    assert w.sum() == pytest.approx(1.0) and np.all(w >= 0)


def test_stack_three_members_kkt():
    rng = np.random.default_rng(4)
    y = rng.normal(size=80)
    P = np.column_stack([y + rng.normal(0, s, 80) for s in (0.5, 0.7, 3.0)])
    w = gbt.stack_weights(P, y)
    grad = 2 * P.T @ (P @ w - y)
    mu = grad[w > 1e-9].mean()
    assert np.allclose(grad[w > 1e-9], mu, atol=1e-8)
    assert np.all(grad[w <= 1e-9] >= mu - 1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_stacked_mae_not_worse_than_members_on_blend_window(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=60)
    P = np.column_stack([y + rng.standard_t(2, 60), y + rng.normal(0, 1, 60), y * 0.3])
    w = gbt.stack_weights(P, y, loss="absolute")
    blend = np.mean(np.abs(P @ w - y))
    assert blend <= min(np.mean(np.abs(P[:, j] - y)) for j in range(3)) + 1e-9


def test_predict_stacked_is_blend():
    X, y = fixture(14)
    a = gbt.boost(X, y, gbt.lightgbm_style(num_boost_round=5))
    b = gbt.boost(X, y, gbt.xgboost_style(num_boost_round=5))
    out = gbt.predict_stacked([a, b], [0.25, 0.75], X)
    np.testing.assert_allclose(out, 0.25 * gbt.predict(a, X) + 0.75 * gbt.predict(b, X))


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        gbt.GbtHyperParams(learning_rate=0.0)
    with pytest.raises(ValueError):
        gbt.GbtHyperParams(bagging_fraction=1.5)
    with pytest.raises(ValueError):
        gbt.GbtHyperParams(num_boost_round=0)
