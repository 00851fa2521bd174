"""Non-neural interpreters: a Gini decision tree, multinomial logistic
regression, and probability-averaging ensembles.

All of them expose ``fit(X, y)`` and ``predict_proba(X)``; ``predict_proba``
refuses to run before ``fit``.  Each one also has a seeded *initial state*,
reported by ``initial_proba(X)``, so it can stand in as model A before
interpretation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .nn import INIT_STD, _truncated_normal, softmax


class NotFittedError(RuntimeError):
    pass


class Classifier(Protocol):
    class_count: int
    fitted: bool

    def fit(self, X, y): ...

    def predict_proba(self, X) -> np.ndarray: ...

    def initial_proba(self, X) -> np.ndarray: ...


def gini_impurity(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("class counts must be nonnegative")
    total = counts.sum()
    if total == 0:
        raise ValueError("gini impurity of an empty node (all counts zero)")
    p = counts / total
    return float(1.0 - np.dot(p, p))


# --- decision tree ----------------------------------------------------------


@dataclass
class _Node:
    distribution: np.ndarray
    depth: int
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def _best_split(X: np.ndarray, y: np.ndarray, c: int, min_leaf: int):
    """Lowest weighted child Gini; ties go to the lowest feature, then threshold."""
    n = len(y)
    best = None  # (score, feature, threshold)
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left_counts = np.cumsum(onehot[order], axis=0)
        # candidate split after position i (left = [0..i]) where the value changes
        cut = np.nonzero(xs[1:] > xs[:-1])[0]
        if cut.size == 0:
            continue
        n_left = cut + 1
        ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        cut, n_left = cut[ok], n_left[ok]
        if cut.size == 0:
            continue
        lc = left_counts[cut]
        rc = left_counts[-1] - lc
        nl = n_left[:, None].astype(np.float64)
        nr = (n - n_left)[:, None].astype(np.float64)
        gl = 1.0 - ((lc / nl) ** 2).sum(axis=1)
        gr = 1.0 - ((rc / nr) ** 2).sum(axis=1)
        score = (nl[:, 0] * gl + nr[:, 0] * gr) / n
        i = int(np.nonzero(score <= score.min() + 1e-12)[0][0])  # lowest threshold among ties
        if best is None or score[i] < best[0] - 1e-12:
            threshold = 0.5 * (xs[cut[i]] + xs[cut[i] + 1])
            best = (float(score[i]), f, float(threshold))
    return best


class DecisionTree:
    """Greedy axis-aligned CART tree minimizing weighted child Gini impurity.

    Leaves store class-frequency distributions, which are what
    ``predict_proba`` returns.  Thresholds sit at midpoints between
    consecutive distinct feature values.
    """

    def __init__(self, class_count: int, max_depth: int = 12, min_samples_leaf: int = 2, seed: int = 0):
        if max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {max_depth}")
        if min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {min_samples_leaf}")
        self.class_count = int(class_count)
        self.max_depth = int(max_depth)
        self.min_samples_leaf = int(min_samples_leaf)
        self.seed = int(seed)
        self.nodes: list[_Node] = []

    @property
    def fitted(self) -> bool:
        return bool(self.nodes)

    def initial_distribution(self) -> np.ndarray:
        """Class distribution of the unfitted tree: a single root leaf whose
        frequencies are a seeded perturbation of uniform."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x7EE]))
        w = 1.0 + _truncated_normal(rng, self.class_count, INIT_STD)
        return w / w.sum()

    def fit(self, X, y) -> "DecisionTree":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or len(X) == 0:
            raise ValueError("decision tree needs a non-empty 2-D feature matrix")
        if len(y) != len(X):
            raise ValueError(f"{len(y)} labels for {len(X)} rows")
        if y.ndim != 1:
            raise ValueError("decision trees take hard labels only")
        y = y.astype(np.int64)
        c = self.class_count
        self.nodes = []
        stack = [(np.arange(len(y)), 0, None, None)]
        while stack:
            idx, depth, parent, side = stack.pop()
            counts = np.bincount(y[idx], minlength=c).astype(np.float64)
            node_id = len(self.nodes)
            self.nodes.append(_Node(counts / counts.sum(), depth))
            if parent is not None:
                setattr(self.nodes[parent], side, node_id)
            if depth >= self.max_depth or np.count_nonzero(counts) <= 1:
                continue
            split = _best_split(X[idx], y[idx], c, self.min_samples_leaf)
            if split is None:
                continue
            _, f, thr = split
            node = self.nodes[node_id]
            node.feature, node.threshold = f, thr
            go_left = X[idx, f] <= thr
            # right pushed first so the left subtree gets the lower node ids
            stack.append((idx[~go_left], depth + 1, node_id, "right"))
            stack.append((idx[go_left], depth + 1, node_id, "left"))
        return self

    def _leaf_ids(self, X: np.ndarray) -> np.ndarray:
        ids = np.zeros(len(X), dtype=np.int64)
        active = np.arange(len(X))
        while active.size:
            nodes = ids[active]
            still = []
            for nid in np.unique(nodes):
                node = self.nodes[nid]
                if node.is_leaf:
                    continue
                rows = active[nodes == nid]
                left = X[rows, node.feature] <= node.threshold
                ids[rows[left]] = node.left
                ids[rows[~left]] = node.right
                still.append(rows)
            active = np.concatenate(still) if still else np.empty(0, dtype=np.int64)
        return ids

    def initial_proba(self, X) -> np.ndarray:
        return np.tile(self.initial_distribution(), (len(X), 1))

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if not self.fitted:
            raise NotFittedError("decision tree is not fitted")
        dist = np.stack([n.distribution for n in self.nodes])
        return dist[self._leaf_ids(X)]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    @property
    def depth(self) -> int:
        return max((n.depth for n in self.nodes), default=0)


# --- logistic regression ----------------------------------------------------


class LogisticRegression:
    """Multinomial logistic regression trained by full-batch gradient descent."""

    def __init__(
        self,
        class_count: int,
        input_dim: int,
        learning_rate: float = 0.5,
        epochs: int = 200,
        seed: int = 0,
        init: str = "truncated_normal",
    ):
        if not learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
        if epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {epochs}")
        self.class_count = int(class_count)
        self.input_dim = int(input_dim)
        self.learning_rate = float(learning_rate)
        self.epochs = int(epochs)
        self.seed = int(seed)
        if init == "zeros":
            self.W = np.zeros((input_dim, class_count))
        elif init == "truncated_normal":
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x106]))
            self.W = _truncated_normal(rng, (input_dim, class_count), INIT_STD)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.b = np.zeros(class_count)
        self.loss_trace: list[float] = []
        self.fitted = False

    def _targets(self, y, n):
        y = np.asarray(y)
        if y.ndim == 1:
            T = np.zeros((n, self.class_count))
            T[np.arange(n), y.astype(np.int64)] = 1.0
            return T
        return y.astype(np.float64)

    def loss_and_grads(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        n = len(X)
        T = self._targets(y, n)
        z = X @ self.W + self.b
        zs = z - z.max(axis=1, keepdims=True)
        log_p = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
        loss = float(-(T * log_p).sum() / n)
        delta = (np.exp(log_p) - T) / n
        return loss, [X.T @ delta, delta.sum(axis=0)]

    def loss(self, X, y) -> float:
        return self.loss_and_grads(X, y)[0]

    def fit(self, X, y) -> "LogisticRegression":
        for epoch in range(self.epochs):
            loss, (gw, gb) = self.loss_and_grads(X, y)
            if not math.isfinite(loss):
                raise FloatingPointError(f"logistic regression: non-finite loss at epoch {epoch}")
            self.W -= self.learning_rate * gw
            self.b -= self.learning_rate * gb
            self.loss_trace.append(loss)
        self.fitted = True
        return self

    def initial_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return softmax(X @ self.W + self.b)

    def predict_proba(self, X) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("logistic regression is not fitted")
        return self.initial_proba(X)

    def gradient_check(self, X, y, h: float = 1e-5) -> float:
        _, grads = self.loss_and_grads(X, y)
        worst = 0.0
        for p, g in zip((self.W, self.b), grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = self.loss(X, y)
                flat[i] = orig - h
                down = self.loss(X, y)
                flat[i] = orig
                fd = (up - down) / (2.0 * h)
                worst = max(worst, abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-8))
        return worst


# --- ensemble ----------------------------------------------------------------


class EnsembleModel:
    """Arithmetic mean of member probability outputs."""

    def __init__(self, members: Sequence):
        if not members:
            raise ValueError("an ensemble needs at least one member")
        counts = {m.class_count for m in members}
        if len(counts) != 1:
            raise ValueError(f"ensemble members disagree on class count: {sorted(counts)}")
        self.members = list(members)
        self.class_count = counts.pop()

    @property
    def fitted(self) -> bool:
        return all(m.fitted for m in self.members)

    def fit(self, X, y) -> "EnsembleModel":
        for m in self.members:
            m.fit(X, y)
        return self

    def predict_proba(self, X) -> np.ndarray:
        return ensemble_predict(self, X)

    def initial_proba(self, X) -> np.ndarray:
        return _mean_rows([m.initial_proba(X) for m in self.members])


def _mean_rows(outputs) -> np.ndarray:
    # sorting member values per entry before summing makes the mean
    # bit-identical under any permutation of the members
    stacked = np.sort(np.stack([np.asarray(p, dtype=np.float64) for p in outputs]), axis=0)
    total = stacked[0].copy()
    for layer in stacked[1:]:
        total += layer
    return total / len(stacked)


def ensemble_predict(ensemble: EnsembleModel, X) -> np.ndarray:
    for i, m in enumerate(ensemble.members):
        if not m.fitted:
            raise NotFittedError(f"ensemble member {i} ({type(m).__name__}) is not fitted")
    return _mean_rows([m.predict_proba(X) for m in ensemble.members])
