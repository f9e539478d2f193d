"""Gradient-boosted regression trees for squared loss.

One engine grows trees either leaf-wise (best gain first, capped by
``num_leaves``) or depth-wise (level by level, capped by ``max_depth``).
Splits are exact over sorted unique feature values. Leaf values carry L2
shrinkage ``lambda`` and L1 soft-thresholding ``alpha``; a split is kept
only when its loss reduction exceeds ``gamma``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import linprog

DEFAULT_SEARCH_SPACE = {
    "learning_rate": [0.01, 0.05, 0.1],
    "num_leaves": [7, 15, 31],
    "max_depth": [3, 5, 7],
    "feature_fraction": [0.8, 1.0],
    "bagging_fraction": [0.8, 1.0],
    "reg_lambda": [0.0, 1.0, 5.0],
}


@dataclass(frozen=True)
class GbtHyperParams:
    learning_rate: float = 0.1
    num_leaves: int | None = 31
    max_depth: int | None = None
    growth: str = "leafwise"
    feature_fraction: float = 1.0
    bagging_fraction: float = 1.0
    bagging_freq: int = 0
    num_boost_round: int = 100
    min_samples_leaf: int = 5
    gamma: float = 0.0
    alpha: float = 0.0
    reg_lambda: float = 0.0
    early_stopping_rounds: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        for name in ("feature_fraction", "bagging_fraction"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.num_boost_round < 1:
            raise ValueError("num_boost_round must be >= 1")
        if self.growth not in ("leafwise", "depthwise"):
            raise ValueError(f"unknown growth mode {self.growth!r}")
        if self.num_leaves is not None and self.num_leaves < 1:
            raise ValueError("num_leaves must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if min(self.gamma, self.alpha, self.reg_lambda) < 0:
            raise ValueError("regularization terms must be non-negative")


def lightgbm_style(**kw) -> GbtHyperParams:
    """Leaf-wise growth capped by leaf count."""
    base = dict(growth="leafwise", num_leaves=31, max_depth=None)
    base.update(kw)
    return GbtHyperParams(**base)


def xgboost_style(**kw) -> GbtHyperParams:
    """Depth-wise growth capped by depth."""
    base = dict(growth="depthwise", num_leaves=None, max_depth=5)
    base.update(kw)
    return GbtHyperParams(**base)


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.depth):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]

    def dump(self, names: Sequence[str] | None = None, k: int = 0, indent: int = 0) -> str:
        pad = "  " * indent
        if self.feature[k] < 0:
            return f"{pad}leaf value={self.value[k]:.12g}\n"
        name = names[self.feature[k]] if names else f"x{self.feature[k]}"
        return (f"{pad}node {name} <= {self.threshold[k]:.12g}\n"
                + self.dump(names, int(self.left[k]), indent + 1)
                + self.dump(names, int(self.right[k]), indent + 1))


def _shrink(G, alpha):
    if alpha == 0.0:
        return G
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def _leaf_value(r: np.ndarray, hp: GbtHyperParams) -> float:
    G = math.fsum(r)
    return float(_shrink(G, hp.alpha)) / (len(r) + hp.reg_lambda)


def _best_split(X: np.ndarray, r: np.ndarray, idx: np.ndarray, feats: np.ndarray, hp: GbtHyperParams):
    """Best (gain, feature, threshold, left_idx, right_idx) for a node, or None."""
    m = idx.size
    msl = hp.min_samples_leaf
    if m < 2 * msl:
        return None
    # Pre-order by residual so tied feature values sum in a value-determined
    # order; trees then do not depend on training row order.
    idx = idx[np.argsort(r[idx], kind="stable")]
    Xn = X[np.ix_(idx, feats)]
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    rs = r[idx][order]
    cs = np.cumsum(rs, axis=0)
    G = cs[-1]
    lo, hi = msl - 1, m - msl
    GL = cs[lo:hi]
    GR = G[None, :] - GL
    nL = np.arange(lo + 1, hi + 1, dtype=float)[:, None]
    nR = m - nL
    lam, a = hp.reg_lambda, hp.alpha
    gain = (_shrink(GL, a) ** 2 / (nL + lam) + _shrink(GR, a) ** 2 / (nR + lam)
            - _shrink(G, a)[None, :] ** 2 / (m + lam))
    distinct = xs[lo:hi] < xs[lo + 1:hi + 1]
    gain = np.where(distinct, gain, -np.inf)
    if not np.isfinite(gain).any():
        return None
    # Feature-major flattening: ties go to the lowest feature, then lowest threshold.
    flat = np.argmax(gain.T)
    j, pos = divmod(int(flat), gain.shape[0])
    best = float(gain[pos, j])
    tol = 1e-12 * max(float(rs[:, 0] @ rs[:, 0]), 1e-300)
    if not best > hp.gamma + tol:
        return None
    k = lo + pos
    threshold = 0.5 * (xs[k, j] + xs[k + 1, j])
    if not xs[k, j] < threshold:
        threshold = xs[k, j]
    sel = order[:, j]
    return best - hp.gamma, int(feats[j]), float(threshold), idx[np.sort(sel[:k + 1])], idx[np.sort(sel[k + 1:])]


def grow_tree(X, residuals, hp: GbtHyperParams, rng: np.random.Generator | None = None,
              rows: np.ndarray | None = None) -> RegressionTree:
    """Fit one regression tree to ``residuals`` (the negative squared-loss gradient)."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(residuals, dtype=float)
    n, F = X.shape
    if n == 0:
        raise ValueError("cannot grow a tree on zero rows")
    rows = np.arange(n) if rows is None else np.asarray(rows)
    if hp.feature_fraction < 1.0:
        rng = rng or np.random.default_rng(hp.seed)
        k = max(1, int(round(hp.feature_fraction * F)))
        feats = np.sort(rng.choice(F, size=k, replace=False))
    else:
        feats = np.arange(F)

    feature, threshold, left, right, value, depth_of = [-1], [0.0], [-1], [-1], [_leaf_value(r[rows], hp)], [0]
    max_leaves = hp.num_leaves if hp.num_leaves is not None else math.inf
    max_depth = hp.max_depth if hp.max_depth is not None else math.inf
    counter = itertools.count()
    heap = []

    def consider(node, idx):
        if depth_of[node] >= max_depth:
            return
        split = _best_split(X, r, idx, feats, hp)
        if split is None:
            return
        key = -split[0] if hp.growth == "leafwise" else depth_of[node]
        heapq.heappush(heap, (key, next(counter), node, split))

    consider(0, rows)
    leaves = 1
    while heap and leaves < max_leaves:
        _, _, node, (_, f, thr, li, ri) = heapq.heappop(heap)
        for child_idx in (li, ri):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(_leaf_value(r[child_idx], hp))
            depth_of.append(depth_of[node] + 1)
        lc, rc = len(feature) - 2, len(feature) - 1
        feature[node], threshold[node], left[node], right[node] = f, thr, lc, rc
        leaves += 1
        consider(lc, li)
        consider(rc, ri)

    return RegressionTree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                          np.array(value, dtype=float), max(depth_of))


@dataclass
class GbtModel:
    trees: list[RegressionTree]
    base_score: float
    hyperparams: GbtHyperParams
    feature_names: list[str]
    history: dict[str, list[float]] = field(default_factory=dict)
    best_iteration: int | None = None

    def dump(self) -> str:
        out = [f"base_score={self.base_score:.12g} learning_rate={self.hyperparams.learning_rate}"]
        for k, tree in enumerate(self.trees):
            out.append(f"tree {k}")
            out.append(tree.dump(self.feature_names).rstrip("\n"))
        return "\n".join(out) + "\n"


def _as_array(X, feature_names: Sequence[str] | None) -> np.ndarray:
    if isinstance(X, pd.DataFrame):
        if feature_names is None:
            return X.to_numpy(dtype=float)
        missing = [c for c in feature_names if c not in X.columns]
        if missing:
            raise KeyError(f"missing feature column(s) {missing}")
        return X[list(feature_names)].to_numpy(dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    if feature_names is not None and X.shape[1] != len(feature_names):
        raise ValueError(f"X has {X.shape[1]} columns, model expects {len(feature_names)}")
    return X


def boost(X, y, hp: GbtHyperParams = GbtHyperParams(), validation=None,
          feature_names: Sequence[str] | None = None) -> GbtModel:
    """Squared-loss gradient boosting from a mean-of-target start.

    ``validation`` is an ``(X_val, y_val)`` pair; when
    ``hp.early_stopping_rounds`` is set, training stops once validation MSE
    has not improved for that many rounds and the ensemble is cut back to
    its best round. Rows are re-drawn every ``bagging_freq`` rounds when
    ``bagging_fraction < 1``.
    """
    if isinstance(X, pd.DataFrame) and feature_names is None:
        feature_names = list(X.columns)
    X = _as_array(X, None)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n == 0 or y.shape != (n,):
        raise ValueError("X and y must be non-empty and agree on rows")
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]

    Xv = yv = None
    if validation is not None:
        Xv = _as_array(validation[0], None)
        yv = np.asarray(validation[1], dtype=float)
    if hp.early_stopping_rounds is not None and (Xv is None or len(yv) == 0):
        raise ValueError("early stopping requested without validation rows")

    rng = np.random.default_rng(hp.seed)
    base = math.fsum(y) / n
    pred = np.full(n, base)
    pred_v = np.full(len(yv), base) if yv is not None else None
    trees: list[RegressionTree] = []
    history = {"train": [], "validation": []}
    rows = np.arange(n)
    best, best_round, since_best = math.inf, 0, 0
    bagging = hp.bagging_fraction < 1.0 and hp.bagging_freq > 0
    for rnd in range(hp.num_boost_round):
        if bagging and rnd % hp.bagging_freq == 0:
            size = max(1, int(round(hp.bagging_fraction * n)))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        tree = grow_tree(X, y - pred, hp, rng, rows)
        trees.append(tree)
        pred = pred + hp.learning_rate * tree.predict(X)
        history["train"].append(float(np.mean((y - pred) ** 2)))
        if yv is not None and len(yv):
            pred_v = pred_v + hp.learning_rate * tree.predict(Xv)
            v = float(np.mean((yv - pred_v) ** 2))
            history["validation"].append(v)
            if hp.early_stopping_rounds is not None:
                if v < best:
                    best, best_round, since_best = v, rnd + 1, 0
                else:
                    since_best += 1
                    if since_best >= hp.early_stopping_rounds:
                        break
    best_iteration = None
    if hp.early_stopping_rounds is not None:
        best_iteration = best_round
        trees = trees[:best_round]
    return GbtModel(trees, base, hp, names, history, best_iteration)


def predict(model: GbtModel, X) -> np.ndarray:
    """``base_score + learning_rate * sum of tree outputs``."""
    X = _as_array(X, model.feature_names)
    out = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        out += model.hyperparams.learning_rate * tree.predict(X)
    return out


def expanding_window_folds(n: int, k: int, min_train: int = 2) -> list[tuple[np.ndarray, np.ndarray]]:
    """``k`` chronological folds; each validates on the block right after its training prefix."""
    if k < 2:
        raise ValueError("need at least two folds")
    size = n // (k + 1)
    first_train = n - k * size
    if size < 2 or first_train < min_train:
        raise ValueError(f"{n} rows are too few for {k} folds")
    folds = []
    for i in range(k):
        end = first_train + i * size
        folds.append((np.arange(end), np.arange(end, end + size)))
    return folds


@dataclass
class SearchResult:
    best: GbtHyperParams
    table: pd.DataFrame


def _draw(space: Mapping[str, Sequence], rng: np.random.Generator) -> dict:
    return {key: space[key][int(rng.integers(len(space[key])))] for key in sorted(space)}


def _evaluate_draw(X, y, hp: GbtHyperParams, folds) -> list[float]:
    maes = []
    for tr, va in folds:
        model = boost(X[tr], y[tr], replace(hp, early_stopping_rounds=None))
        maes.append(float(np.mean(np.abs(y[va] - predict(model, X[va])))))
    return maes


def randomized_search(X, y, space: Mapping[str, Sequence] | None = None, k: int = 3, n_draws: int = 25,
                      seed: int = 0, base: GbtHyperParams = GbtHyperParams(),
                      n_jobs: int = 1) -> SearchResult:
    """Random draws from ``space`` scored by mean validation MAE over expanding-window folds.

    Each draw gets seed ``seed + draw``; ties resolve to the earliest draw.
    """
    X = _as_array(X, None)
    y = np.asarray(y, dtype=float)
    space = DEFAULT_SEARCH_SPACE if space is None else space
    folds = expanding_window_folds(len(y), k)
    rng = np.random.default_rng(seed)
    draws = [replace(base, **_draw(space, rng), seed=seed + d) for d in range(n_draws)]
    if n_jobs == 1:
        scores = [_evaluate_draw(X, y, hp, folds) for hp in draws]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            scores = list(pool.map(_evaluate_draw, *zip(*[(X, y, hp, folds) for hp in draws])))
    rows = []
    for d, (hp, maes) in enumerate(zip(draws, scores)):
        row = {"draw": d, **{key: getattr(hp, key) for key in sorted(space)}}
        row.update({f"fold{i}_mae": m for i, m in enumerate(maes)})
        row["mean_mae"] = float(np.mean(maes))
        rows.append(row)
    table = pd.DataFrame(rows)
    best = int(np.argmin(table["mean_mae"].to_numpy()))
    return SearchResult(draws[best], table)


def stack_weights(member_predictions, actuals, loss: str = "squared") -> np.ndarray:
    """Blend weights on the probability simplex for out-of-sample member predictions.

    ``loss="squared"`` gives the non-negative least-squares blend normalized
    to sum to one (exact, by enumerating supports); ``loss="absolute"``
    minimizes MAE by linear programming. Members that are all identical get
    equal weights.
    """
    P = np.asarray(member_predictions, dtype=float)
    y = np.asarray(actuals, dtype=float)
    if P.ndim != 2 or P.shape[1] < 2:
        raise ValueError("need predictions from at least two members as columns")
    n, m = P.shape
    if y.shape != (n,):
        raise ValueError("actuals disagree with prediction rows")
    if np.all(P == P[:, :1]):
        return np.full(m, 1.0 / m)
    if loss == "absolute":
        c = np.concatenate([np.zeros(m), np.ones(n)])
        A_ub = np.block([[P, -np.eye(n)], [-P, -np.eye(n)]])
        b_ub = np.concatenate([y, -y])
        A_eq = np.concatenate([np.ones(m), np.zeros(n)])[None, :]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0, None)] * (m + n), method="highs")
        if not res.success:
            raise RuntimeError(f"blend LP failed: {res.message}")
        w = np.clip(res.x[:m], 0.0, None)
        return w / w.sum()
    if loss != "squared":
        raise ValueError(f"unknown loss {loss!r}")
    if m > 10:
        raise ValueError("support enumeration is limited to 10 members")
    best_key, best_w = None, None
    scale = max(float(y @ y), 1e-300)
    for size in range(1, m + 1):
        for support in itertools.combinations(range(m), size):
            S = list(support)
            w = _simplex_lsq(P[:, S], y)
            if w is None or (w < -1e-12).any():
                continue
            full = np.zeros(m)
            full[S] = np.clip(w, 0.0, None)
            full /= full.sum()
            sse = float(np.sum((P @ full - y) ** 2))
            # among equally good blends prefer fewer members, then the flattest
            key = (round(sse / scale, 12), int(np.count_nonzero(full)), float(full @ full))
            if best_key is None or key < best_key:
                best_key, best_w = key, full
    return best_w


def _simplex_lsq(P: np.ndarray, y: np.ndarray) -> np.ndarray | None:
    """Minimum-norm least squares subject to ``sum(w) == 1`` (KKT system)."""
    k = P.shape[1]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = 2.0 * P.T @ P
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.concatenate([2.0 * P.T @ y, [1.0]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    w = sol[:k]
    if not np.isclose(w.sum(), 1.0):
        return None
    return w


def predict_stacked(models: Sequence[GbtModel], weights, X) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if len(models) != weights.size:
        raise ValueError("one weight per member model is required")
    return np.column_stack([predict(m, X) for m in models]) @ weights
