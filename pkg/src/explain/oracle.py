"""
Brute-force Shapley values by subset enumeration, used to verify TreeSHAP.
"""

from math import factorial
from typing import Collection

import numpy as np

from src.explain.tree_shap import hot_child
from src.gbt.model import GbtModel
from src.gbt.tree import RegressionTree
from src.utils.errors import ContractError

MAX_ORACLE_FEATURES = 20


def conditional_expectation(tree: RegressionTree, x: np.ndarray, subset: Collection[int]) -> float:
    """
    Cover-weighted expectation of the tree output given the features in ``subset``.

    A split on a feature of the subset follows the case's branch (the default
    child for MISSING); any other split averages both children by cover.
    """
    covers = tree.node_sample_weight

    def value(node: int) -> float:
        left = tree.children_left[node]
        if left == -1:
            return float(tree.values[node])
        if tree.features[node] in subset:
            return value(hot_child(tree, node, x))
        right = tree.children_right[node]
        return (covers[left] * value(left) + covers[right] * value(right)) / covers[node]

    return value(0)


def shapley_oracle(model: GbtModel, row, max_features: int = MAX_ORACLE_FEATURES) -> np.ndarray:
    """
    Exact Shapley values of the cover-weighted value function.

    Every subset of the model's M features is valued once. A tree only sees its
    own split features, so each tree's values are tabulated over the subsets of
    those features and looked up for all 2^M subsets.

    Parameters
    ----------
    model : GbtModel
        Trained ensemble.
    row : array-like
        Feature values, NaN for MISSING.
    max_features : int
        Refusal bound on M.

    Returns
    -------
    numpy.ndarray
        One value per feature.

    Raises
    ------
    ContractError
        If the row width differs from the model or M exceeds ``max_features``.
    """
    x = model._check_width(row)[0]
    m = model.n_features
    if m > max_features:
        raise ContractError(f"shapley_oracle enumerates 2^M subsets and accepts at most {max_features} "
                            f"features, got M = {m}")
    phi = np.zeros(m)
    if m == 0:
        return phi

    masks = np.arange(1 << m, dtype=np.int64)
    v = np.full(masks.size, model.base_score)
    for tree in model.trees:
        used = sorted({int(f) for f in tree.features if f >= 0})
        table = np.array([
            conditional_expectation(tree, x, {used[k] for k in range(len(used)) if (s >> k) & 1})
            for s in range(1 << len(used))
        ])
        local = np.zeros(masks.size, dtype=np.int64)
        for k, feature in enumerate(used):
            local |= ((masks >> feature) & 1) << k
        v += table[local]

    sizes = np.zeros(masks.size, dtype=np.int64)
    for j in range(m):
        sizes += (masks >> j) & 1
    weights = np.array([factorial(s) * factorial(m - s - 1) / factorial(m) for s in range(m)])
    for j in range(m):
        without = masks[((masks >> j) & 1) == 0]
        phi[j] = float(np.sum(weights[sizes[without]] * (v[without | (1 << j)] - v[without])))
    return phi
