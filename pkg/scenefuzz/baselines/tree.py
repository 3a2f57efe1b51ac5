"""Axis-aligned Gini decision tree over normalized scenario vectors, with leaf boxes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..constants import DT_MIN_IMPURITY_DECREASE, DT_MIN_SAMPLES_SPLIT

logger = logging.getLogger(__name__)


@dataclass
class Leaf:
    lower: np.ndarray
    upper: np.ndarray
    lower_strict: np.ndarray
    n: int
    n_violations: int

    @property
    def violation_fraction(self) -> float:
        return self.n_violations / self.n if self.n else 0.0

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        above = np.where(self.lower_strict, X > self.lower, X >= self.lower)
        return np.all(above & (X <= self.upper), axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.random((n, self.lower.size)) * (self.upper - self.lower)


@dataclass
class _Node:
    n: int
    n_violations: int
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None
    leaf: int = -1


def gini(n_pos: np.ndarray, n: np.ndarray) -> np.ndarray:
    p = np.divide(n_pos, n, out=np.zeros_like(n_pos, dtype=float), where=n > 0)
    return 2.0 * p * (1.0 - p)


@dataclass
class DecisionTree:
    """Binary CART on violation labels.

    A node splits only with at least ``ceil(min_samples_split * N)`` samples and when the
    weighted impurity decrease ``n_t / N * (g_t - n_l / n_t * g_l - n_r / n_t * g_r)``
    reaches ``min_impurity_decrease``. Left children take ``x <= threshold``.
    """

    min_samples_split: float = DT_MIN_SAMPLES_SPLIT
    min_impurity_decrease: float = DT_MIN_IMPURITY_DECREASE
    max_depth: Optional[int] = None
    leaves: list[Leaf] = field(default_factory=list)
    _root: Optional[_Node] = None
    _total: int = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if len(X) == 0:
            raise ValueError("cannot fit a tree on no data")
        self._total = len(X)
        self.leaves = []
        k = X.shape[1]
        min_split = max(2, math.ceil(round(self.min_samples_split * len(X), 9)))
        self._root = self._grow(
            X, y, np.zeros(k), np.ones(k), np.zeros(k, dtype=bool), 0, min_split
        )
        return self

    def _best_split(self, X: np.ndarray, y: np.ndarray) -> tuple[int, float, float]:
        n = len(y)
        parent = float(gini(np.array([y.sum()]), np.array([n]))[0])
        best = (-1, 0.0, 0.0)
        for j in range(X.shape[1]):
            order = np.argsort(X[:, j], kind="stable")
            xs, ys = X[order, j], y[order]
            distinct = np.flatnonzero(xs[1:] > xs[:-1])
            if distinct.size == 0:
                continue
            left_n = distinct + 1.0
            left_pos = np.cumsum(ys)[distinct]
            right_n = n - left_n
            right_pos = ys.sum() - left_pos
            child = (left_n * gini(left_pos, left_n) + right_n * gini(right_pos, right_n)) / n
            decrease = n / self._total * (parent - child)
            i = int(np.argmax(decrease))
            if decrease[i] > best[2]:
                cut = distinct[i]
                best = (j, 0.5 * (xs[cut] + xs[cut + 1]), float(decrease[i]))
        return best

    def _grow(self, X, y, lower, upper, strict, depth, min_split) -> _Node:
        node = _Node(len(y), int(y.sum()))
        can_split = (
            len(y) >= min_split
            and 0 < node.n_violations < len(y)
            and (self.max_depth is None or depth < self.max_depth)
        )
        if can_split:
            feature, threshold, decrease = self._best_split(X, y)
            if feature >= 0 and decrease >= self.min_impurity_decrease:
                go_left = X[:, feature] <= threshold
                left_upper = upper.copy()
                left_upper[feature] = threshold
                right_lower, right_strict = lower.copy(), strict.copy()
                right_lower[feature] = threshold
                right_strict[feature] = True
                node.feature, node.threshold = feature, threshold
                node.left = self._grow(
                    X[go_left], y[go_left], lower, left_upper, strict, depth + 1, min_split
                )
                node.right = self._grow(
                    X[~go_left],
                    y[~go_left],
                    right_lower,
                    upper,
                    right_strict,
                    depth + 1,
                    min_split,
                )
                return node
        node.leaf = len(self.leaves)
        leaf = Leaf(lower.copy(), upper.copy(), strict.copy(), node.n, node.n_violations)
        self.leaves.append(leaf)
        return node

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def root_split(self) -> Optional[tuple[int, float]]:
        if self._root is None or self._root.leaf >= 0:
            return None
        return self._root.feature, self._root.threshold

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index of each row by threshold descent."""
        if self._root is None:
            raise RuntimeError("tree is not fitted")
        out = np.empty(len(np.atleast_2d(X)), dtype=int)
        for i, x in enumerate(np.atleast_2d(X)):
            node = self._root
            while node.leaf < 0:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out[i] = node.leaf
        return out

    def critical_leaves(self) -> list[int]:
        """Leaves whose violation fraction exceeds the fraction over the whole data set."""
        total_pos = sum(leaf.n_violations for leaf in self.leaves)
        overall = total_pos / self._total if self._total else 0.0
        return [i for i, leaf in enumerate(self.leaves) if leaf.violation_fraction > overall]

    def in_critical_region(self, X: np.ndarray) -> np.ndarray:
        critical = set(self.critical_leaves())
        if self.n_leaves == 1:
            return np.ones(len(np.atleast_2d(X)), dtype=bool)
        return np.array([leaf in critical for leaf in self.apply(X)], dtype=bool)
