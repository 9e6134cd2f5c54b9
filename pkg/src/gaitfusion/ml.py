"""Gait pattern classification on the 12-feature vectors.

Three classifiers, each implemented from first principles so their behaviour
is fully pinned down by this module: a random forest of CART/Gini trees with
per-node feature subsampling, an RBF-kernel SVM trained by sequential
minimal optimization (one-vs-rest for more than two classes), and a single
hidden layer perceptron with softmax output trained by fixed-step full-batch
gradient descent.

Evaluation is stratified k-fold cross-validation.  Min-max normalization is
fitted on the training fold only by default ("per_fold"); the "global_fit"
scope instead scales once on the full table before splitting, a common but
slightly leaky shortcut kept as an option for comparison.  Metrics come from
the pooled out-of-fold confusion matrix: accuracy is its trace over its
total, precision/recall/F1 are macro-averaged one-vs-rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError
from .stats import pearson

NORMALIZE_SCOPES = ("per_fold", "global_fit")


@dataclass(frozen=True)
class MlConfig:
    classifiers: tuple = ("rf", "svm", "mlp")
    n_trees: int = 100
    m_try: int = 0            # 0: floor(sqrt(n_features))
    svm_c: float = 1.0
    svm_gamma: float = 0.0    # 0: 1 / (n_features * var(X))
    mlp_hidden: int = 16
    mlp_lr: float = 0.3
    mlp_epochs: int = 1500
    cv_folds: int = 10
    seed: int = 0
    normalize_scope: str = "per_fold"
    top_k: int = 9

    def __post_init__(self):
        if self.normalize_scope not in NORMALIZE_SCOPES:
            raise ConfigError(f"normalize_scope must be one of {NORMALIZE_SCOPES}")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        unknown = set(self.classifiers) - {"rf", "svm", "mlp"}
        if unknown:
            raise ConfigError(f"unknown classifiers {sorted(unknown)}")


@dataclass(frozen=True)
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    class_names: tuple

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValidationError("X must be 2-D with one label per row")
        if self.X.shape[1] != len(self.feature_names):
            raise ValidationError("feature name count does not match X")
        if np.any((self.y < 0) | (self.y >= len(self.class_names))):
            raise ValidationError("labels must index class_names")


# ---------------------------------------------------------------------------
# min-max normalization

class MinMaxScaler:
    """Scale features to [0, 1] using ranges seen in fit()."""

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.mins_ = X.min(axis=0)
        span = X.max(axis=0) - self.mins_
        span[span == 0.0] = 1.0  # constant column maps to 0
        self.span_ = span
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mins_) / self.span_


# ---------------------------------------------------------------------------
# random forest

class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "label")

    def __init__(self, label=None):
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.label = label


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float(p @ p)


class DecisionTree:
    """CART classifier: Gini impurity, exhaustive threshold search over a
    random feature subset per node, grown until pure."""

    def __init__(self, n_classes, m_try, rng, min_samples_split=2):
        self.n_classes = n_classes
        self.m_try = m_try
        self.rng = rng
        self.min_samples_split = min_samples_split
        self.importance_raw = None

    def fit(self, X, y):
        self.importance_raw = np.zeros(X.shape[1])
        self._n_total = len(y)
        self.root = self._grow(X, y)
        return self

    def _majority(self, y):
        counts = np.bincount(y, minlength=self.n_classes)
        return int(np.argmax(counts))  # ties resolve to the lowest label

    def _grow(self, X, y):
        counts = np.bincount(y, minlength=self.n_classes)
        if len(y) < self.min_samples_split or np.max(counts) == len(y):
            return _Node(label=self._majority(y))
        node_gini = _gini(counts)
        feats = self.rng.choice(X.shape[1], size=self.m_try, replace=False)
        best = None  # (weighted_child_gini, feature, threshold)
        for f in feats:
            order = np.argsort(X[:, f], kind="mergesort")
            xs = X[order, f]
            ys = y[order]
            left = np.zeros(self.n_classes)
            right = counts.astype(float).copy()
            for i in range(len(ys) - 1):
                left[ys[i]] += 1
                right[ys[i]] -= 1
                if xs[i + 1] == xs[i]:
                    continue
                nl = i + 1
                nr = len(ys) - nl
                w = (nl * _gini(left) + nr * _gini(right)) / len(ys)
                if best is None or w < best[0] - 1e-15:
                    best = (w, int(f), 0.5 * (xs[i] + xs[i + 1]))
        if best is None or best[0] >= node_gini:
            return _Node(label=self._majority(y))
        w, f, thr = best
        self.importance_raw[f] += (len(y) / self._n_total) * (node_gini - w)
        mask = X[:, f] <= thr
        node = _Node()
        node.feature = f
        node.threshold = thr
        node.left = self._grow(X[mask], y[mask])
        node.right = self._grow(X[~mask], y[~mask])
        return node

    def predict_one(self, x):
        node = self.root
        while node.label is None:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def predict(self, X):
        return np.array([self.predict_one(x) for x in np.asarray(X, dtype=float)])


class RandomForest:
    """Bagged CART ensemble with majority vote.

    feature_importances_ is the impurity decrease accumulated over all
    trees, normalized to sum to one.
    """

    def __init__(self, n_classes, n_trees=100, m_try=0, seed=0):
        self.n_classes = n_classes
        self.n_trees = n_trees
        self.m_try = m_try
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        d = X.shape[1]
        m_try = self.m_try if self.m_try > 0 else max(1, int(math.isqrt(d)))
        rng = np.random.default_rng(self.seed)
        self.trees = []
        raw = np.zeros(d)
        for _ in range(self.n_trees):
            idx = rng.integers(0, len(y), size=len(y))
            tree = DecisionTree(self.n_classes, m_try, rng).fit(X[idx], y[idx])
            raw += tree.importance_raw
            self.trees.append(tree)
        total = raw.sum()
        self.feature_importances_ = raw / total if total > 0 else raw
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        votes = np.zeros((len(X), self.n_classes), dtype=int)
        for tree in self.trees:
            pred = tree.predict(X)
            for i, c in enumerate(pred):
                votes[i, c] += 1
        return np.argmax(votes, axis=1)  # vote ties resolve to the lowest label


# ---------------------------------------------------------------------------
# support vector machine

class _BinarySvm:
    """RBF-kernel SVM trained with simplified sequential minimal optimization
    to KKT tolerance; labels are +/-1."""

    def __init__(self, c, gamma, tol=1e-3, max_passes=5, max_sweeps=200, seed=0):
        self.c = c
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.max_sweeps = max_sweeps
        self.seed = seed

    def _kernel(self, A, B):
        d2 = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
              - 2.0 * A @ B.T)
        return np.exp(-self.gamma * np.maximum(d2, 0.0))

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        K = self._kernel(X, X)
        alpha = np.zeros(n)
        b = 0.0
        rng = np.random.default_rng(self.seed)
        passes = 0
        sweeps = 0
        while passes < self.max_passes and sweeps < self.max_sweeps:
            changed = 0
            for i in range(n):
                ei = float((alpha * y) @ K[:, i]) + b - y[i]
                if not ((y[i] * ei < -self.tol and alpha[i] < self.c)
                        or (y[i] * ei > self.tol and alpha[i] > 0)):
                    continue
                j = int(rng.integers(0, n - 1))
                if j >= i:
                    j += 1
                ej = float((alpha * y) @ K[:, j]) + b - y[j]
                ai_old, aj_old = alpha[i], alpha[j]
                if y[i] != y[j]:
                    lo = max(0.0, aj_old - ai_old)
                    hi = min(self.c, self.c + aj_old - ai_old)
                else:
                    lo = max(0.0, ai_old + aj_old - self.c)
                    hi = min(self.c, ai_old + aj_old)
                if lo == hi:
                    continue
                eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
                if eta >= 0:
                    continue
                aj = np.clip(aj_old - y[j] * (ei - ej) / eta, lo, hi)
                if abs(aj - aj_old) < 1e-7:
                    continue
                ai = ai_old + y[i] * y[j] * (aj_old - aj)
                b1 = b - ei - y[i] * (ai - ai_old) * K[i, i] \
                    - y[j] * (aj - aj_old) * K[i, j]
                b2 = b - ej - y[i] * (ai - ai_old) * K[i, j] \
                    - y[j] * (aj - aj_old) * K[j, j]
                if 0 < ai < self.c:
                    b = b1
                elif 0 < aj < self.c:
                    b = b2
                else:
                    b = 0.5 * (b1 + b2)
                alpha[i], alpha[j] = ai, aj
                changed += 1
            passes = passes + 1 if changed == 0 else 0
            sweeps += 1
        keep = alpha > 1e-12
        self.support_X = X[keep]
        self.support_ay = (alpha * y)[keep]
        self.b = b
        return self

    def decision(self, X):
        if len(self.support_X) == 0:
            return np.full(len(X), self.b)
        K = self._kernel(np.asarray(X, dtype=float), self.support_X)
        return K @ self.support_ay + self.b


class SvmClassifier:
    """One-vs-rest RBF SVM; binary problems use a single machine."""

    def __init__(self, n_classes, c=1.0, gamma=0.0, seed=0):
        self.n_classes = n_classes
        self.c = c
        self.gamma = gamma
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        gamma = self.gamma
        if gamma <= 0:
            var = float(X.var())
            gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        self.machines = []
        for c in range(self.n_classes):
            labels = np.where(y == c, 1.0, -1.0)
            m = _BinarySvm(self.c, gamma, seed=self.seed + c).fit(X, labels)
            self.machines.append(m)
        return self

    def predict(self, X):
        scores = np.column_stack([m.decision(X) for m in self.machines])
        return np.argmax(scores, axis=1)


# ---------------------------------------------------------------------------
# multilayer perceptron

class MlpClassifier:
    """One hidden tanh layer, softmax cross-entropy, fixed-step full-batch
    gradient descent for a fixed number of epochs.  If the objective is still
    moving at the end, `converged` stays False and `final_loss` reports where
    it stopped; training never raises for that."""

    def __init__(self, n_classes, hidden=16, lr=0.3, epochs=1500, seed=0):
        self.n_classes = n_classes
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        n, d = X.shape
        rng = np.random.default_rng(self.seed)
        lim1 = math.sqrt(6.0 / (d + self.hidden))
        lim2 = math.sqrt(6.0 / (self.hidden + self.n_classes))
        self.W1 = rng.uniform(-lim1, lim1, size=(d, self.hidden))
        self.b1 = np.zeros(self.hidden)
        self.W2 = rng.uniform(-lim2, lim2, size=(self.hidden, self.n_classes))
        self.b2 = np.zeros(self.n_classes)
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), y] = 1.0
        prev = math.inf
        loss = math.inf
        for _ in range(self.epochs):
            H = np.tanh(X @ self.W1 + self.b1)
            logits = H @ self.W2 + self.b2
            logits -= logits.max(axis=1, keepdims=True)
            expl = np.exp(logits)
            probs = expl / expl.sum(axis=1, keepdims=True)
            prev = loss
            loss = -float(np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300))))
            g_logits = (probs - onehot) / n
            gW2 = H.T @ g_logits
            gb2 = g_logits.sum(axis=0)
            gH = g_logits @ self.W2.T
            g_pre = gH * (1.0 - H * H)
            gW1 = X.T @ g_pre
            gb1 = g_pre.sum(axis=0)
            self.W2 -= self.lr * gW2
            self.b2 -= self.lr * gb2
            self.W1 -= self.lr * gW1
            self.b1 -= self.lr * gb1
        self.final_loss = loss
        self.converged = abs(prev - loss) < 1e-6
        return self

    def predict(self, X):
        H = np.tanh(np.asarray(X, dtype=float) @ self.W1 + self.b1)
        return np.argmax(H @ self.W2 + self.b2, axis=1)


# ---------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


@dataclass
class EvalResult:
    classifier: str
    metrics: Metrics
    confusion: np.ndarray
    fold_accuracy: list
    notes: dict = field(default_factory=dict)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    c = np.zeros((n_classes, n_classes), dtype=int)
    for t, p in zip(y_true, y_pred):
        c[int(t), int(p)] += 1
    return c


def classification_metrics(confusion: np.ndarray) -> Metrics:
    """Accuracy from the trace; macro one-vs-rest precision/recall/F1.

    A class never predicted contributes zero precision (and so zero F1) to
    the macro mean rather than dropping out.
    """
    c = np.asarray(confusion, dtype=float)
    total = c.sum()
    if total == 0:
        raise ValidationError("empty confusion matrix")
    accuracy = float(np.trace(c) / total)
    precisions, recalls, f1s = [], [], []
    for k in range(c.shape[0]):
        tp = c[k, k]
        fp = c[:, k].sum() - tp
        fn = c[k, :].sum() - tp
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
    return Metrics(accuracy=accuracy, precision=float(np.mean(precisions)),
                   recall=float(np.mean(recalls)), f1=float(np.mean(f1s)))


def stratified_folds(y, k: int, seed: int) -> list:
    """Deal shuffled per-class indices round-robin into k folds."""
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for c in np.unique(y):
        idx = np.nonzero(y == c)[0]
        rng.shuffle(idx)
        for i, sample in enumerate(idx):
            folds[i % k].append(int(sample))
    folds = [np.array(sorted(f), dtype=int) for f in folds]
    if any(len(f) == 0 for f in folds):
        raise ValidationError(f"{k} folds cannot all be filled with {len(y)} samples")
    return folds


def _build(name: str, n_classes: int, cfg: MlConfig, seed: int):
    if name == "rf":
        return RandomForest(n_classes, n_trees=cfg.n_trees, m_try=cfg.m_try,
                            seed=seed)
    if name == "svm":
        return SvmClassifier(n_classes, c=cfg.svm_c, gamma=cfg.svm_gamma,
                             seed=seed)
    if name == "mlp":
        return MlpClassifier(n_classes, hidden=cfg.mlp_hidden, lr=cfg.mlp_lr,
                             epochs=cfg.mlp_epochs, seed=seed)
    raise ConfigError(f"unknown classifier {name!r}")


def cross_validate(dataset: LabeledDataset, name: str,
                   cfg: MlConfig = MlConfig()) -> EvalResult:
    """Stratified k-fold evaluation of one classifier.

    Normalization is fitted inside each training fold unless the config asks
    for the global variant.  Every sample is predicted exactly once; metrics
    come from the pooled confusion matrix.
    """
    X, y = dataset.X, dataset.y
    n_classes = len(dataset.class_names)
    folds = stratified_folds(y, cfg.cv_folds, cfg.seed)
    global_scaler = None
    if cfg.normalize_scope == "global_fit":
        global_scaler = MinMaxScaler().fit(X)
    pooled_pred = np.empty(len(y), dtype=int)
    fold_acc = []
    notes = {}
    for fi, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        scaler = global_scaler or MinMaxScaler().fit(X[train_idx])
        Xtr = scaler.transform(X[train_idx])
        Xte = scaler.transform(X[test_idx])
        model = _build(name, n_classes, cfg, seed=cfg.seed + 1000 * fi)
        model.fit(Xtr, y[train_idx])
        pred = model.predict(Xte)
        pooled_pred[test_idx] = pred
        fold_acc.append(float(np.mean(pred == y[test_idx])))
        if name == "mlp" and not model.converged:
            notes.setdefault("mlp_not_converged", []).append(
                {"fold": fi, "final_loss": model.final_loss})
    confusion = confusion_matrix(y, pooled_pred, n_classes)
    return EvalResult(classifier=name, metrics=classification_metrics(confusion),
                      confusion=confusion, fold_accuracy=fold_acc, notes=notes)


def evaluate_all(dataset: LabeledDataset, cfg: MlConfig = MlConfig()) -> dict:
    return {name: cross_validate(dataset, name, cfg) for name in cfg.classifiers}


# ---------------------------------------------------------------------------
# feature ranking / selection

@dataclass(frozen=True)
class FeatureRank:
    name: str
    index: int
    correlation: float
    importance: float


def rank_features(dataset: LabeledDataset, cfg: MlConfig = MlConfig()) -> list:
    """Forest importance (normalized to sum 1) plus label correlation per
    feature, sorted by importance descending with index as tie-break."""
    rf = RandomForest(len(dataset.class_names), n_trees=cfg.n_trees,
                      m_try=cfg.m_try, seed=cfg.seed).fit(dataset.X, dataset.y)
    ranks = []
    for i, name in enumerate(dataset.feature_names):
        r = pearson(dataset.X[:, i], dataset.y.astype(float))
        ranks.append(FeatureRank(name=name, index=i, correlation=r,
                                 importance=float(rf.feature_importances_[i])))
    return sorted(ranks, key=lambda fr: (-fr.importance, fr.index))


def select_top(dataset: LabeledDataset, ranks: list, k: int) -> LabeledDataset:
    """Restrict the dataset to the k highest-ranked features (original
    column order preserved)."""
    keep = sorted(fr.index for fr in ranks[:k])
    return LabeledDataset(X=dataset.X[:, keep], y=dataset.y,
                          feature_names=tuple(dataset.feature_names[i] for i in keep),
                          class_names=dataset.class_names)
