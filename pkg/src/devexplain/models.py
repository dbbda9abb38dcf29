"""Forward models f(x): linear least squares and boosted regression trees.

Both model kinds share a tiny protocol (``d_x``, batch prediction) so the
inverse-search and decomposition code never branches on kind except where
smoothness matters.  Residual statistics feed the likelihood; a perfect fit
is clamped away from sigma_e = 0 so the log-likelihood stays finite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import Dataset
from .errors import NumericalError, SingularFitError, ValidationError

_RANK_TOL = 1e-10
_SIGMA_CLAMP_FRAC = 1e-12

MODEL_SCHEMA = 1


@dataclass(frozen=True)
class LinearModel:
    """f(x) = intercept + coefficients . x"""

    intercept: float
    coefficients: np.ndarray

    kind = "linear"

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    @property
    def d_x(self) -> int:
        return self.coefficients.size

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        return self.intercept + x @ self.coefficients

    def predict_one(self, x: np.ndarray) -> float:
        return float(self.intercept + x @ self.coefficients)


@dataclass(frozen=True)
class _Tree:
    """Axis-aligned regression tree in flat arrays; feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.intp)
        feat = self.feature[node]
        while (feat >= 0).any():
            interior = feat >= 0
            col = x[np.arange(x.shape[0]), np.maximum(feat, 0)]
            go_left = col <= self.threshold[node]
            node = np.where(
                interior,
                np.where(go_left, self.left[node], self.right[node]),
                node,
            )
            feat = self.feature[node]
        return self.value[node]

    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)


@dataclass(frozen=True)
class GbtParams:
    n_trees: int = 300
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValidationError("n_trees must be >= 0")
        if self.n_trees > 0 and self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class GbtModel:
    """Stagewise squared-loss boosting: base_score + lr * sum of tree outputs."""

    trees: tuple[_Tree, ...]
    learning_rate: float
    base_score: float
    n_features: int

    kind = "gbt"

    @property
    def d_x(self) -> int:
        return self.n_features

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        out = np.full(x.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict_batch(x)
        return out

    def _flat_trees(self):
        # plain-list mirror of the trees, built once; scalar descent through
        # numpy arrays is ~10x slower, and the inverse search evaluates f at
        # single points tens of thousands of times
        cache = getattr(self, "_scalar_cache", None)
        if cache is None:
            cache = tuple(
                (
                    t.feature.tolist(),
                    t.threshold.tolist(),
                    t.left.tolist(),
                    t.right.tolist(),
                    t.value.tolist(),
                )
                for t in self.trees
            )
            object.__setattr__(self, "_scalar_cache", cache)
        return cache

    def predict_one(self, x: np.ndarray) -> float:
        xs = x.tolist() if isinstance(x, np.ndarray) else list(x)
        total = self.base_score
        lr = self.learning_rate
        for feature, threshold, left, right, value in self._flat_trees():
            node = 0
            f = feature[0]
            while f >= 0:
                node = left[node] if xs[f] <= threshold[node] else right[node]
                f = feature[node]
            total += lr * value[node]
        return total


PredictiveModel = LinearModel | GbtModel


def fit_linear(train: Dataset) -> LinearModel:
    """Least-squares fit of intercept + theta . x via QR on [1 | X].

    Raises
    ------
    SingularFitError
        If the design matrix is rank deficient; the error names the first
        column (intercept or feature) that is linearly dependent on the
        columns before it.
    """
    if train.n <= train.d_x:
        raise ValidationError(
            f"need more than d_x={train.d_x} observations, got {train.n}"
        )
    design = np.column_stack([np.ones(train.n), train.features])
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    bad = np.flatnonzero(diag <= _RANK_TOL * diag.max())
    if bad.size:
        j = int(bad[0])
        column = "intercept" if j == 0 else train.feature_names[j - 1]
        raise SingularFitError(
            f"design matrix is rank deficient at column {column!r}", column=column
        )
    beta = solve_triangular(r, q.T @ train.labels)
    return LinearModel(intercept=float(beta[0]), coefficients=beta[1:])


def _best_split(col: np.ndarray, residual: np.ndarray, min_leaf: int):
    """Max variance-reduction threshold for one feature, or None.

    Returns (gain, threshold); among equal gains the lowest threshold wins
    because argmax takes the first of the sorted candidates.
    """
    order = np.argsort(col, kind="stable")
    xs = col[order]
    rs = residual[order]
    n = xs.size
    if n < 2 * min_leaf:
        return None
    prefix = np.cumsum(rs)
    total = prefix[-1]
    sizes = np.arange(1, n)  # left-child sizes for a cut after position i-1
    valid = (xs[:-1] < xs[1:]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
    if not valid.any():
        return None
    left_sum = prefix[:-1]
    # SSE reduction = S_L^2/n_L + S_R^2/n_R - S^2/n, constant term dropped
    score = left_sum**2 / sizes + (total - left_sum) ** 2 / (n - sizes)
    score[~valid] = -np.inf
    best = int(np.argmax(score))
    gain = float(score[best] - total**2 / n)
    if gain <= 0:
        return None
    threshold = float((xs[best] + xs[best + 1]) / 2.0)
    return gain, threshold


def _grow_tree(x: np.ndarray, residual: np.ndarray, params: GbtParams) -> _Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def add_node() -> int:
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = add_node()
        value[node] = float(residual[idx].mean())
        if depth >= params.max_depth:
            return node
        best = None
        for f in range(x.shape[1]):  # lowest feature index wins ties
            cand = _best_split(x[idx, f], residual[idx], params.min_samples_leaf)
            if cand is not None and (best is None or cand[0] > best[1]):
                best = (f, cand[0], cand[1])
        if best is None:
            return node
        f, _, thr = best
        go_left = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(x.shape[0]), 0)
    return _Tree(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        value=np.array(value),
    )


def fit_gbt(train: Dataset, params: GbtParams = GbtParams()) -> GbtModel:
    """Gradient-boosted trees for squared loss.

    base_score is the label mean; each tree greedily fits the current
    residuals by variance reduction with midpoint thresholds, ties broken
    by lowest feature index then lowest threshold.
    """
    if train.n < 2 * params.min_samples_leaf:
        raise ValidationError(
            f"need at least {2 * params.min_samples_leaf} observations"
        )
    base = float(train.labels.mean())
    residual = train.labels - base
    trees = []
    for _ in range(params.n_trees):
        tree = _grow_tree(train.features, residual, params)
        residual = residual - params.learning_rate * tree.predict_batch(train.features)
        trees.append(tree)
    return GbtModel(
        trees=tuple(trees),
        learning_rate=params.learning_rate,
        base_score=base,
        n_features=train.d_x,
    )


def predict(model: PredictiveModel, x) -> float:
    """Evaluate f at one feature vector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.d_x:
        raise ValidationError(f"x has {x.size} entries, model expects {model.d_x}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("x contains non-finite entries")
    return model.predict_one(x)


def predict_batch(model: PredictiveModel, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.d_x:
        raise ValidationError(f"x has {x.shape[1]} columns, model expects {model.d_x}")
    return model.predict_batch(x)


@dataclass(frozen=True)
class ResidualStats:
    sigma_e_squared: float
    r_squared_train: float
    r_squared_test: float | None = None


def _r_squared(model: PredictiveModel, data: Dataset) -> float:
    pred = model.predict_batch(data.features)
    sse = float(np.sum((data.labels - pred) ** 2))
    sst = float(np.sum((data.labels - data.labels.mean()) ** 2))
    if sst == 0:
        raise NumericalError("labels have zero variance; R^2 is undefined")
    return 1.0 - sse / sst


def residual_stats(
    model: PredictiveModel, train: Dataset, test: Dataset | None = None
) -> ResidualStats:
    """sigma_e^2 = mean squared training residual; R^2 per split."""
    if train.n == 0:
        raise ValidationError("train set is empty")
    if train.d_x != model.d_x:
        raise ValidationError("train d_x does not match model")
    pred = model.predict_batch(train.features)
    sigma2 = float(np.mean((pred - train.labels) ** 2))
    return ResidualStats(
        sigma_e_squared=sigma2,
        r_squared_train=_r_squared(model, train),
        r_squared_test=_r_squared(model, test) if test is not None else None,
    )


def clamp_sigma_e_squared(sigma_e_squared: float, labels) -> float:
    """Likelihood-ready variance: max(sigma_e^2, 1e-12 * Var(y)).

    A perfect fit would make the likelihood term infinitely sharp; the clamp
    keeps the objective finite while still forcing f(x) ~= y_target at any
    realistic prior scale.
    """
    label_var = float(np.asarray(labels, dtype=float).var())
    if label_var <= 0:
        raise NumericalError("labels have zero variance; cannot scale likelihood")
    return max(float(sigma_e_squared), _SIGMA_CLAMP_FRAC * label_var)


def _tree_to_json(tree: _Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": [None if math.isnan(t) else t for t in tree.threshold],
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def _tree_from_json(doc: dict) -> _Tree:
    return _Tree(
        feature=np.array(doc["feature"], dtype=np.intp),
        threshold=np.array(
            [math.nan if t is None else float(t) for t in doc["threshold"]]
        ),
        left=np.array(doc["left"], dtype=np.intp),
        right=np.array(doc["right"], dtype=np.intp),
        value=np.array(doc["value"], dtype=float),
    )


def model_to_json(model: PredictiveModel) -> dict:
    if model.kind == "linear":
        return {
            "schema": MODEL_SCHEMA,
            "kind": "linear",
            "intercept": model.intercept,
            "coefficients": model.coefficients.tolist(),
        }
    return {
        "schema": MODEL_SCHEMA,
        "kind": "gbt",
        "learning_rate": model.learning_rate,
        "base_score": model.base_score,
        "n_features": model.n_features,
        "trees": [_tree_to_json(t) for t in model.trees],
    }


def model_from_json(doc: dict) -> PredictiveModel:
    if doc.get("schema") != MODEL_SCHEMA:
        raise ValidationError(f"unsupported model schema {doc.get('schema')!r}")
    kind = doc.get("kind")
    if kind == "linear":
        return LinearModel(
            intercept=float(doc["intercept"]),
            coefficients=np.array(doc["coefficients"], dtype=float),
        )
    if kind == "gbt":
        return GbtModel(
            trees=tuple(_tree_from_json(t) for t in doc["trees"]),
            learning_rate=float(doc["learning_rate"]),
            base_score=float(doc["base_score"]),
            n_features=int(doc["n_features"]),
        )
    raise ValidationError(f"unknown model kind {kind!r}")


def save_model(model: PredictiveModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model), fh)
        fh.write("\n")


def load_model(path: str | Path) -> PredictiveModel:
    with open(path) as fh:
        return model_from_json(json.load(fh))
