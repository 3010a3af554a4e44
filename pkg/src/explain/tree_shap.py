"""
Exact path-dependent TreeSHAP for the boosted ensemble.

The value of a feature subset S for one tree is the cover-weighted conditional
expectation: at a split on a feature in S the case's own branch is followed
(MISSING values take the default direction), otherwise both children are
averaged with weights proportional to their covers. The Shapley values of this
set function are computed in polynomial time by tracking, along each
root-to-leaf path, the fraction of subsets that reach the leaf with and
without every path feature.
"""

from typing import List, Tuple

import numpy as np

from src.gbt.model import GbtModel
from src.gbt.tree import RegressionTree


class _Path:
    """Unique-feature path with the permutation weights of every prefix size."""
    __slots__ = ("features", "zero", "one", "weight")

    def __init__(self, features: List[int], zero: List[float], one: List[float], weight: List[float]):
        self.features = features
        self.zero = zero
        self.one = one
        self.weight = weight

    def extend(self, zero_fraction: float, one_fraction: float, feature: int) -> "_Path":
        depth = len(self.features)
        features = self.features + [feature]
        zero = self.zero + [zero_fraction]
        one = self.one + [one_fraction]
        weight = self.weight + [1.0 if depth == 0 else 0.0]
        for i in range(depth - 1, -1, -1):
            weight[i + 1] += one_fraction * weight[i] * (i + 1) / (depth + 1)
            weight[i] = zero_fraction * weight[i] * (depth - i) / (depth + 1)
        return _Path(features, zero, one, weight)

    def unwind(self, index: int) -> "_Path":
        depth = len(self.features) - 1
        one_fraction, zero_fraction = self.one[index], self.zero[index]
        weight = list(self.weight)
        next_one = weight[depth]
        for i in range(depth - 1, -1, -1):
            if one_fraction != 0.0:
                previous = weight[i]
                weight[i] = next_one * (depth + 1) / ((i + 1) * one_fraction)
                next_one = previous - weight[i] * zero_fraction * (depth - i) / (depth + 1)
            else:
                weight[i] = weight[i] * (depth + 1) / (zero_fraction * (depth - i))
        keep = lambda xs: xs[:index] + xs[index + 1:]  # noqa: E731
        return _Path(keep(self.features), keep(self.zero), keep(self.one), weight[:depth])

    def unwound_sum(self, index: int) -> float:
        depth = len(self.features) - 1
        one_fraction, zero_fraction = self.one[index], self.zero[index]
        next_one = self.weight[depth]
        total = 0.0
        if one_fraction != 0.0:
            for i in range(depth - 1, -1, -1):
                share = next_one / ((i + 1) * one_fraction)
                total += share
                next_one = self.weight[i] - share * zero_fraction * (depth - i)
        else:
            for i in range(depth - 1, -1, -1):
                total += self.weight[i] / (zero_fraction * (depth - i))
        return total * (depth + 1)


def hot_child(tree: RegressionTree, node: int, x: np.ndarray) -> int:
    """Child a case follows at an internal node (default child for MISSING)."""
    value = x[tree.features[node]]
    if np.isnan(value):
        return int(tree.children_default[node])
    return int(tree.children_left[node] if value < tree.thresholds[node] else tree.children_right[node])


def tree_shap_single(tree: RegressionTree, x: np.ndarray, phi: np.ndarray) -> None:
    """Add the SHAP values of one tree for row ``x`` into ``phi``."""
    covers = tree.node_sample_weight

    def recurse(node: int, path: _Path, zero_fraction: float, one_fraction: float, feature: int):
        path = path.extend(zero_fraction, one_fraction, feature)
        left = tree.children_left[node]
        if left == -1:
            value = tree.values[node]
            for i in range(1, len(path.features)):
                phi[path.features[i]] += path.unwound_sum(i) * (path.one[i] - path.zero[i]) * value
            return
        split = int(tree.features[node])
        hot = hot_child(tree, node, x)
        cold = int(tree.children_right[node]) if hot == left else int(left)
        incoming_zero, incoming_one = 1.0, 1.0
        if split in path.features:
            k = path.features.index(split)
            incoming_zero, incoming_one = path.zero[k], path.one[k]
            path = path.unwind(k)
        recurse(hot, path, incoming_zero * covers[hot] / covers[node], incoming_one, split)
        recurse(cold, path, incoming_zero * covers[cold] / covers[node], 0.0, split)

    recurse(0, _Path([], [], [], []), 1.0, 1.0, -1)


def expected_value(model: GbtModel) -> float:
    """Base value: base score plus every tree's cover-weighted mean output."""
    return model.base_score + sum(tree.expected_value() for tree in model.trees)


def tree_shap(model: GbtModel, row) -> Tuple[np.ndarray, float]:
    """
    SHAP values of one case.

    Parameters
    ----------
    model : GbtModel
        Trained ensemble.
    row : array-like
        Feature values, NaN for MISSING; width must match the model.

    Returns
    -------
    (numpy.ndarray, float)
        Per-feature SHAP values and the base value. Their sum equals the
        model's prediction for ``row``.

    Raises
    ------
    ContractError
        If the row width does not match the model.
    """
    x = model._check_width(row)[0]
    phi = np.zeros(model.n_features)
    for tree in model.trees:
        if tree.n_nodes > 1:
            tree_shap_single(tree, x, phi)
    return phi, expected_value(model)
