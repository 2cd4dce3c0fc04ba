"""CART classification tree with Gini impurity and midpoint thresholds."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from obia.classifiers.samples import SampleSet

# a split must reduce weighted Gini by more than this to count as an improvement
MIN_GAIN = 1e-12


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


@dataclass
class CartNode:
    counts: np.ndarray
    prediction: str
    impurity: float
    feature: int = -1
    threshold: float = float("nan")
    left: "CartNode | None" = None
    right: "CartNode | None" = None
    split_impurity: float = float("nan")  # weighted Gini of the children

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class CartTree:
    root: CartNode
    classes: tuple[str, ...]
    schema: tuple[str, ...]
    max_depth: int
    min_leaf: int

    def nodes(self):
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            if not node.is_leaf:
                stack.append((node.right, depth + 1))
                stack.append((node.left, depth + 1))

    @property
    def depth(self) -> int:
        return max(d for _, d in self.nodes())

    @property
    def n_leaves(self) -> int:
        return sum(1 for node, _ in self.nodes() if node.is_leaf)

    def predict_many(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.array([cart_predict(self, row) for row in x], dtype=object)

    def to_dict(self) -> dict:
        def enc(node):
            d = {"counts": node.counts.tolist(), "prediction": node.prediction, "impurity": node.impurity}
            if not node.is_leaf:
                d.update(feature=node.feature, threshold=node.threshold,
                         split_impurity=node.split_impurity,
                         left=enc(node.left), right=enc(node.right))
            return d

        return {"format": "obia-cart/1", "classes": list(self.classes), "schema": list(self.schema),
                "max_depth": self.max_depth, "min_leaf": self.min_leaf, "root": enc(self.root)}

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CartTree":
        doc = json.loads(text)
        if doc.get("format") != "obia-cart/1":
            raise ValueError("not a CART model document")

        def dec(d):
            node = CartNode(np.array(d["counts"], dtype=np.int64), d["prediction"], d["impurity"])
            if "left" in d:
                node.feature, node.threshold = d["feature"], d["threshold"]
                node.split_impurity = d["split_impurity"]
                node.left, node.right = dec(d["left"]), dec(d["right"])
            return node

        return cls(dec(doc["root"]), tuple(doc["classes"]), tuple(doc["schema"]),
                   doc["max_depth"], doc["min_leaf"])


def _leaf_prediction(counts, classes):
    # classes are sorted by name, argmax takes the first maximum
    return classes[int(np.argmax(counts))]


def best_split(x: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int):
    """Exhaustive search; returns (feature, threshold, weighted gini) or None.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    n, d = x.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    total = onehot.sum(axis=0)
    best = None
    for j in range(d):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = total - left
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            wg = (nl - np.sum(left * left, axis=1) / nl + nr - np.sum(right * right, axis=1) / nr) / n
        wg = np.where(valid, wg, np.inf)
        i = int(np.argmin(wg))
        if best is None or wg[i] < best[2]:
            lo, hi = xs[i], xs[i + 1]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            best = (j, float(thr), float(wg[i]))
    return best


def cart_train(samples: SampleSet, max_depth: int = 8, min_leaf: int = 1) -> CartTree:
    """Greedy recursive partitioning minimizing weighted Gini impurity."""
    if len(samples) == 0:
        raise ValueError("cannot train on an empty sample set")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
    classes = samples.classes
    index = {c: i for i, c in enumerate(classes)}
    y_all = np.array([index[c] for c in samples.labels], dtype=np.int64)
    x_all = samples.features
    k = len(classes)

    def build(rows, depth):
        counts = np.bincount(y_all[rows], minlength=k)
        node = CartNode(counts, _leaf_prediction(counts, classes), gini(counts))
        if node.impurity == 0.0 or depth >= max_depth or rows.size < 2 * min_leaf:
            return node
        split = best_split(x_all[rows], y_all[rows], k, min_leaf)
        if split is None or not split[2] < node.impurity - MIN_GAIN:
            return node
        j, thr, wg = split
        go_left = x_all[rows, j] <= thr
        node.feature, node.threshold, node.split_impurity = j, thr, wg
        node.left = build(rows[go_left], depth + 1)
        node.right = build(rows[~go_left], depth + 1)
        return node

    root = build(np.arange(len(samples)), 0)
    return CartTree(root, classes, samples.schema, max_depth, min_leaf)


def cart_predict(tree: CartTree, x) -> str:
    """Descend from the root: ``x[feature] <= threshold`` goes left."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != len(tree.schema):
        raise ValueError(f"expected {len(tree.schema)} features, got {x.size}")
    node = tree.root
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.prediction
