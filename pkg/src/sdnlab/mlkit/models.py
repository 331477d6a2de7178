"""From-scratch binary classifiers over standardized features."""

from __future__ import annotations

import math

import numpy as np

from .data import Dataset, DegenerateLabels, FeatureMismatch, Scaler

KINDS = ("logreg", "knn", "adaboost", "random_forest")
DEFAULTS = {
    "logreg": {"learning_rate": 0.1, "epochs": 500, "l2": 0.0},
    "knn": {"k": 5},
    "adaboost": {"n_estimators": 50},
    "random_forest": {"n_trees": 100, "bootstrap": True, "max_features": "sqrt",
                      "max_depth": None, "min_samples_split": 2},
}


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticRegression:
    """Full-batch gradient descent on mean cross-entropy, zero initialisation."""

    def __init__(self, learning_rate=0.1, epochs=500, l2=0.0):
        self.learning_rate = float(learning_rate)
        self.epochs = int(epochs)
        self.l2 = float(l2)
        self.w = None
        self.b = 0.0

    def init(self, d: int) -> "LogisticRegression":
        self.w = np.zeros(d)
        self.b = 0.0
        return self

    def fit(self, X, y, rng=None):
        n, d = X.shape
        self.init(d)
        for _ in range(self.epochs):
            err = sigmoid(X @ self.w + self.b) - y
            self.w -= self.learning_rate * (X.T @ err / n + self.l2 * self.w)
            self.b -= self.learning_rate * float(err.mean())
        return self

    def proba(self, X):
        return sigmoid(X @ self.w + self.b)

    def params(self):
        return {"w": self.w.tolist(), "b": self.b}

    def load(self, p):
        self.w = np.array(p["w"], dtype=np.float64)
        self.b = float(p["b"])
        return self


class KNearestNeighbors:
    """Fraction of the ``k`` nearest training rows (Euclidean) labelled 1."""

    def __init__(self, k=5):
        if int(k) < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)
        self.X = None
        self.y = None

    def fit(self, X, y, rng=None):
        self.X = np.array(X, dtype=np.float64)
        self.y = np.array(y, dtype=np.int64)
        return self

    def proba(self, X):
        k = min(self.k, len(self.y))
        d2 = ((X[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
        # stable sort: equidistant neighbours resolve to the earlier training row
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return self.y[nearest].mean(axis=1)

    def params(self):
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    def load(self, p):
        self.X = np.array(p["X"], dtype=np.float64).reshape(len(p["y"]), -1)
        self.y = np.array(p["y"], dtype=np.int64)
        return self


def best_stump(X, y_pm, w):
    """Weighted-error-minimising (feature, threshold, polarity) for labels in {-1, +1}.

    The stump predicts ``polarity`` when x > threshold and ``-polarity`` otherwise.
    """
    best = (math.inf, 0, 0.0, 1)
    total = w.sum()
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys, ws = X[order, j], y_pm[order], w[order]
        # error of polarity +1 with the cut after position i: positives at or below
        # the cut plus negatives above it
        pos_below = np.concatenate([[0.0], np.cumsum(ws * (ys > 0))])
        neg_below = np.concatenate([[0.0], np.cumsum(ws * (ys < 0))])
        neg_above = neg_below[-1] - neg_below
        err_plus = pos_below + neg_above
        err_minus = total - err_plus
        # valid cuts: before everything, after everything, or between distinct values
        cuts = np.concatenate([[True], xs[1:] != xs[:-1], [True]])
        for err, pol in ((err_plus, 1), (err_minus, -1)):
            e = np.where(cuts, err, np.inf)
            i = int(np.argmin(e))
            if e[i] < best[0] - 1e-15:
                if i == 0:
                    thr = xs[0] - 1.0
                elif i == len(xs):
                    thr = xs[-1] + 1.0
                else:
                    thr = (xs[i - 1] + xs[i]) / 2.0
                best = (float(e[i]), j, float(thr), pol)
    return best


class AdaBoost:
    """Discrete AdaBoost over decision stumps.

    ``proba`` is the alpha-weighted share of stumps voting for class 1, so
    it crosses 0.5 exactly where the ensemble's sign changes.
    """

    def __init__(self, n_estimators=50):
        self.n_estimators = int(n_estimators)
        self.stumps = []  # (feature, threshold, polarity, alpha)

    def fit(self, X, y, rng=None):
        n = len(y)
        y_pm = np.where(y == 1, 1.0, -1.0)
        w = np.full(n, 1.0 / n)
        self.stumps = []
        for _ in range(self.n_estimators):
            err, j, thr, pol = best_stump(X, y_pm, w)
            if err >= 0.5:
                break
            err = max(err, 1e-10)
            alpha = 0.5 * math.log((1.0 - err) / err)
            self.stumps.append((j, thr, pol, alpha))
            pred = np.where(X[:, j] > thr, pol, -pol)
            w = w * np.exp(-alpha * y_pm * pred)
            w /= w.sum()
            if err <= 1e-10:
                break
        if not self.stumps:
            # no stump beats chance: a single majority vote
            j, pol = 0, (1 if y_pm.sum() >= 0 else -1)
            self.stumps.append((j, -math.inf, pol, 1.0))
        return self

    def decision(self, X):
        f = np.zeros(X.shape[0])
        for j, thr, pol, alpha in self.stumps:
            f += alpha * np.where(X[:, j] > thr, pol, -pol)
        return f

    def proba(self, X):
        total = sum(s[3] for s in self.stumps)
        return np.clip((1.0 + self.decision(X) / total) / 2.0, 0.0, 1.0)

    def params(self):
        return {"stumps": [[j, thr, pol, a] for j, thr, pol, a in self.stumps]}

    def load(self, p):
        self.stumps = [(int(j), float(t), int(pol), float(a)) for j, t, pol, a in p["stumps"]]
        return self


def _gini_split(x, y):
    """Best threshold on one feature by weighted Gini impurity of the children."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    ones_left = np.cumsum(ys)[:-1]
    n_left = np.arange(1, n)
    n_right = n - n_left
    ones_right = ys.sum() - ones_left
    p_l = ones_left / n_left
    p_r = ones_right / n_right
    impurity = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
    impurity = np.where(xs[1:] != xs[:-1], impurity, np.inf)
    i = int(np.argmin(impurity))
    if not np.isfinite(impurity[i]):
        return math.inf, 0.0
    return float(impurity[i]), float((xs[i] + xs[i + 1]) / 2.0)


class DecisionTree:
    """CART classifier with Gini splits and a random feature subset at every node.

    Nodes live in flat arrays; a leaf has ``feature == -1`` and stores the
    majority class (ties go to 1).
    """

    def __init__(self, max_features=None, max_depth=None, min_samples_split=2):
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_split = int(min_samples_split)
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def _leaf(self, y):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(int(2 * y.sum() >= len(y)))
        return len(self.feature) - 1

    def fit(self, X, y, rng):
        d = X.shape[1]
        m = d if self.max_features is None else max(1, min(d, int(self.max_features)))
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        stack = [(np.arange(len(y)), 0, None, None)]
        while stack:
            idx, depth, parent, side = stack.pop()
            ys = y[idx]
            node = self._leaf(ys)
            if parent is not None:
                (self.left if side == 0 else self.right)[parent] = node
            pure = ys.min() == ys.max()
            if pure or len(idx) < self.min_samples_split or (
                    self.max_depth is not None and depth >= self.max_depth):
                continue
            feats = rng.choice(d, size=m, replace=False)
            best = (math.inf, -1, 0.0)
            for j in feats:
                imp, thr = _gini_split(X[idx, j], ys)
                if imp < best[0]:
                    best = (imp, int(j), thr)
            if best[1] < 0:
                continue
            _, j, thr = best
            go_left = X[idx, j] <= thr
            self.feature[node] = j
            self.threshold[node] = thr
            # right pushed first so the left subtree gets the lower node ids
            stack.append((idx[~go_left], depth + 1, node, 1))
            stack.append((idx[go_left], depth + 1, node, 0))
        return self

    def predict(self, X):
        feature = np.array(self.feature)
        threshold = np.array(self.threshold)
        left, right, value = np.array(self.left), np.array(self.right), np.array(self.value)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = feature[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, feature[nd]] <= threshold[nd]
            node[active] = np.where(go_left, left[nd], right[nd])
            active = feature[node] >= 0
        return value[node]

    def params(self):
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}

    def load(self, p):
        self.feature = [int(v) for v in p["feature"]]
        self.threshold = [float(v) for v in p["threshold"]]
        self.left = [int(v) for v in p["left"]]
        self.right = [int(v) for v in p["right"]]
        self.value = [int(v) for v in p["value"]]
        return self


def tree_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**63 - 1, size=n)]


class RandomForest:
    """Bagged Gini trees with sqrt(d) candidate features per split.

    The class is the majority vote; ``proba`` is the fraction of trees voting 1.
    """

    def __init__(self, n_trees=100, bootstrap=True, max_features="sqrt", max_depth=None,
                 min_samples_split=2):
        self.n_trees = int(n_trees)
        self.bootstrap = bool(bootstrap)
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_split = int(min_samples_split)
        self.trees = []

    def _mtry(self, d):
        if self.max_features == "sqrt":
            return max(1, int(math.isqrt(d)))
        if self.max_features is None:
            return d
        return int(self.max_features)

    def fit(self, X, y, seed=0):
        n, d = X.shape
        self.trees = []
        for s in tree_seeds(seed, self.n_trees):
            rng = np.random.default_rng(s)
            idx = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(self._mtry(d), self.max_depth, self.min_samples_split)
            self.trees.append(tree.fit(X[idx], y[idx], rng))
        return self

    def proba(self, X):
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def params(self):
        return {"trees": [t.params() for t in self.trees]}

    def load(self, p):
        self.trees = [DecisionTree().load(t) for t in p["trees"]]
        return self


def make_estimator(kind: str, hyperparams: dict):
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    unknown = set(hyperparams) - set(DEFAULTS[kind])
    if unknown:
        raise ValueError(f"unknown {kind} hyperparameters {sorted(unknown)}")
    hp = {**DEFAULTS[kind], **hyperparams}
    cls = {"logreg": LogisticRegression, "knn": KNearestNeighbors, "adaboost": AdaBoost,
           "random_forest": RandomForest}[kind]
    return cls(**hp), hp


class TrainedModel:
    """A fitted estimator bound to its feature names and training-split scaler."""

    def __init__(self, kind, estimator, scaler: Scaler, feature_names, hyperparams,
                 threshold=0.5, seed=0):
        self.kind = kind
        self.estimator = estimator
        self.scaler = scaler
        self.feature_names = tuple(feature_names)
        self.hyperparams = dict(hyperparams)
        self.threshold = float(threshold)
        self.seed = int(seed)

    def matrix(self, rows) -> np.ndarray:
        """Feature matrix in model order from a Dataset, mappings/records or an array."""
        names = self.feature_names
        if isinstance(rows, Dataset):
            return self.matrix(rows.select(names).X)
        if hasattr(rows, "as_dict") or isinstance(rows, dict):
            rows = [rows]
        if isinstance(rows, (list, tuple)) and rows and (hasattr(rows[0], "as_dict")
                                                         or isinstance(rows[0], dict)):
            out = []
            for r in rows:
                d = r.as_dict() if hasattr(r, "as_dict") else r
                missing = [n for n in names if n not in d or d[n] is None]
                if missing:
                    raise FeatureMismatch(f"row lacks model features {missing}")
                out.append([float(d[n]) for n in names])
            X = np.array(out, dtype=np.float64)
        else:
            X = np.atleast_2d(np.asarray(rows, dtype=np.float64))
            if X.shape[1] != len(names):
                raise FeatureMismatch(f"expected {len(names)} features, got {X.shape[1]}")
        if np.isnan(X).any():
            raise FeatureMismatch("absent value in a model feature")
        return X

    def predict_proba(self, rows) -> np.ndarray:
        return self.estimator.proba(self.scaler.transform(self.matrix(rows)))

    def predict(self, rows) -> np.ndarray:
        return (self.predict_proba(rows) >= self.threshold).astype(np.int64)


def fit(kind: str, train: Dataset, hyperparams: dict | None = None, seed: int = 0,
        threshold: float = 0.5) -> TrainedModel:
    """Standardize on ``train`` and fit a ``kind`` model on every column it carries."""
    if len(train) == 0 or train.y.min() == train.y.max():
        raise DegenerateLabels("training data must contain both labels")
    if train.X.shape[1] == 0:
        raise FeatureMismatch("no features to train on")
    est, hp = make_estimator(kind, hyperparams or {})
    scaler = Scaler.fit(train.X)
    Xs = scaler.transform(train.X)
    if kind == "random_forest":
        est.fit(Xs, train.y, seed)
    else:
        est.fit(Xs, train.y)
    return TrainedModel(kind, est, scaler, train.feature_names, hp, threshold, seed)
