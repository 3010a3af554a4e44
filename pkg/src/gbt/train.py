"""
Second-order boosting of regression trees for the squared-error objective.

For every tree the gradients are ``g = prediction - y`` and the hessians are 1.
A node with gradient sum G and hessian sum H gets the weight
``-eta * S(G) / (H + lambda)``, where ``S`` soft-thresholds by ``alpha``. A split
into (L, R) has the gain::

    1/2 * [S(G_L)^2/(H_L+lambda) + S(G_R)^2/(H_R+lambda) - S(G)^2/(H+lambda)] - gamma

Split search is exact: every boundary between consecutive distinct values of a
feature is a candidate, and the node's MISSING rows are tried on both sides.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.data.case_matrix import CaseMatrix
from src.gbt.model import GbtModel
from src.gbt.params import Hyperparams
from src.gbt.tree import RegressionTree
from src.utils.errors import ContractError
from src.utils.run_log import RunLog

run_log = RunLog()


def soft_threshold(G, alpha: float):
    """L1 shrinkage of a gradient sum: ``sign(G) * max(|G| - alpha, 0)``."""
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def leaf_weight(G: float, H: float, hp: Hyperparams) -> float:
    """Shrunk optimal weight of a node, as stored in the tree."""
    return float(-hp.eta * soft_threshold(G, hp.reg_alpha) / (H + hp.reg_lambda))


def _score(G, H, hp: Hyperparams):
    return soft_threshold(G, hp.reg_alpha) ** 2 / (H + hp.reg_lambda)


@dataclass
class SplitCandidate:
    feature: int
    threshold: float
    default_left: bool
    gain: float


class TreeGrower:
    """
    Level-wise grower for one tree.

    Parameters
    ----------
    X : numpy.ndarray
        Training features, NaN for MISSING.
    g, h : numpy.ndarray
        Gradients and hessians of all training rows.
    hp : Hyperparams
        Regularization and depth settings.
    level_features : list of numpy.ndarray
        Candidate features for each depth level, ascending ids.
    """

    def __init__(self, X: np.ndarray, g: np.ndarray, h: np.ndarray, hp: Hyperparams,
                 level_features: List[np.ndarray]):
        self.X = X
        self.g = g
        self.h = h
        self.hp = hp
        self.level_features = level_features

    def _split_on_feature(self, rows: np.ndarray, j: int, G: float, H: float, parent: float) \
            -> Optional[SplitCandidate]:
        hp = self.hp
        x = self.X[rows, j]
        missing = np.isnan(x)
        present = rows[~missing]
        if present.size < 2:
            return None
        xs_order = np.argsort(x[~missing], kind="stable")
        xs = x[~missing][xs_order]
        boundary = np.nonzero(xs[1:] > xs[:-1])[0]
        if boundary.size == 0:
            return None
        GL = np.cumsum(self.g[present][xs_order])[boundary]
        HL = np.cumsum(self.h[present][xs_order])[boundary]
        Gm = float(self.g[rows[missing]].sum())
        Hm = float(self.h[rows[missing]].sum())

        best = None
        # missing-left is tried first, so equal gains keep the default on the left
        directions = (True, False) if Hm > 0 else (None,)
        for default_left in directions:
            left_G = GL + Gm if default_left else GL
            left_H = HL + Hm if default_left else HL
            right_G, right_H = G - left_G, H - left_H
            gain = 0.5 * (_score(left_G, left_H, hp) + _score(right_G, right_H, hp) - parent) - hp.gamma
            valid = ((left_H >= hp.min_child_weight) & (right_H >= hp.min_child_weight)
                     & (left_H > 0) & (right_H > 0) & (gain > 0))
            if not np.any(valid):
                continue
            gain = np.where(valid, gain, -np.inf)
            k = int(np.argmax(gain))
            if best is None or gain[k] > best.gain:
                threshold = 0.5 * (xs[boundary[k]] + xs[boundary[k] + 1])
                if threshold <= xs[boundary[k]]:
                    threshold = xs[boundary[k] + 1]
                if default_left is None:
                    # no MISSING rows here: they follow the child with the larger cover
                    default_left = bool(left_H[k] >= right_H[k])
                best = SplitCandidate(int(j), float(threshold), bool(default_left), float(gain[k]))
        return best

    def find_split(self, rows: np.ndarray, depth: int) -> Optional[SplitCandidate]:
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        parent = _score(G, H, self.hp)
        best = None
        for j in self.level_features[depth]:
            candidate = self._split_on_feature(rows, int(j), G, H, parent)
            if candidate is not None and (best is None or candidate.gain > best.gain):
                best = candidate
        return best

    def grow(self, rows: np.ndarray) -> RegressionTree:
        hp = self.hp
        left, right, default, features, thresholds, values, covers = [], [], [], [], [], [], []

        def new_node(node_rows):
            for column, value in ((left, -1), (right, -1), (default, -1), (features, -1), (thresholds, np.nan),
                                  (values, 0.0), (covers, float(self.h[node_rows].sum()))):
                column.append(value)
            return len(left) - 1

        frontier = [(new_node(rows), rows)]
        for depth in range(hp.max_depth + 1):
            next_frontier = []
            for node, r in frontier:
                split = self.find_split(r, depth) if depth < hp.max_depth else None
                if split is None:
                    values[node] = leaf_weight(float(self.g[r].sum()), float(self.h[r].sum()), hp)
                    continue
                x = self.X[r, split.feature]
                goes_left = np.where(np.isnan(x), split.default_left, x < split.threshold)
                left_rows, right_rows = r[goes_left], r[~goes_left]
                li = new_node(left_rows)
                ri = new_node(right_rows)
                left[node], right[node] = li, ri
                default[node] = li if split.default_left else ri
                features[node], thresholds[node] = split.feature, split.threshold
                next_frontier.extend([(li, left_rows), (ri, right_rows)])
            frontier = next_frontier
            if not frontier:
                break
        return RegressionTree(left, right, default, features, thresholds, values, covers)


def _sample_features(rng: np.random.Generator, pool: np.ndarray, fraction: float) -> np.ndarray:
    if fraction >= 1.0:
        return pool
    k = max(1, int(round(fraction * len(pool))))
    return np.sort(rng.choice(pool, size=k, replace=False))


def train(data: CaseMatrix, hp: Hyperparams) -> GbtModel:
    """
    Fit a boosted ensemble on a case matrix.

    Parameters
    ----------
    data : CaseMatrix
        Training cases, at least 2, with at least one non-missing feature cell.
    hp : Hyperparams
        Boosting settings; ``hp.seed`` drives the row and column sampling.

    Returns
    -------
    GbtModel
        ``base_score`` is the label mean. Constant labels give a model with no trees.

    Raises
    ------
    ContractError
        Fewer than two cases or no observed feature value.
    """
    n = data.n_cases
    if n < 2:
        raise ContractError(f"training needs at least 2 cases, got {n}")
    if data.n_features == 0 or data.missing.all():
        raise ContractError("training needs at least one non-missing feature value")
    X = data.as_nan()
    y = data.labels
    base_score = float(np.mean(y))
    names = data.catalog.names
    fingerprint = data.catalog.fingerprint()
    if np.all(y == y[0]):
        run_log.add(f"all {n} labels equal {y[0]:g}: model is the base score only")
        return GbtModel(base_score, [], data.n_features, fingerprint, names, hp)

    rng = np.random.default_rng(hp.seed)
    all_features = np.arange(data.n_features)
    h = np.ones(n)
    prediction = np.full(n, base_score)
    trees = []
    for _ in range(hp.n_trees):
        g = prediction - y
        if hp.subsample < 1.0:
            k = max(1, int(round(hp.subsample * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        else:
            rows = np.arange(n)
        tree_features = _sample_features(rng, all_features, hp.col_sample_by_tree)
        level_features = [_sample_features(rng, tree_features, hp.col_sample_by_level) for _ in range(hp.max_depth)]
        tree = TreeGrower(X, g, h, hp, level_features).grow(rows)
        prediction += tree.predict(X)
        trees.append(tree)

    rmse = float(np.sqrt(np.mean((prediction - y) ** 2)))
    run_log.add(f"trained {len(trees)} trees on {n} cases x {data.n_features} features "
                f"({sum(t.n_splits for t in trees)} splits, training RMSE {rmse:.4f})")
    return GbtModel(base_score, trees, data.n_features, fingerprint, names, hp)
