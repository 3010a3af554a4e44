"""
Regression tree stored as flat node arrays.

Node ``i`` is a leaf iff ``children_left[i] == -1``. An internal node sends a case
left iff ``x[features[i]] < thresholds[i]``; a MISSING (NaN) value goes to
``children_default[i]``. ``values`` holds the leaf weight (EF points, shrinkage
already applied) at leaves and the cover-weighted mean of the subtree at internal
nodes; ``node_sample_weight`` is the training hessian sum (cover) of each node.
"""

from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from src.utils.errors import ArtifactError, ContractError


class TreeNode(NamedTuple):
    """Read-only view of one node."""
    node_id: int
    feature_id: int
    threshold: float
    default_left: bool
    left: int
    right: int
    cover: float
    value: float

    @property
    def is_leaf(self) -> bool:
        return self.left == -1


class RegressionTree:
    """
    Binary regression tree with default directions for missing values.

    Attributes
    ----------
    children_left, children_right : numpy.ndarray of int
        Child indices, -1 at leaves.
    children_default : numpy.ndarray of int
        Child taken by MISSING values, -1 at leaves.
    features : numpy.ndarray of int
        Split feature, -1 at leaves.
    thresholds : numpy.ndarray of float
        Split threshold, NaN at leaves.
    values : numpy.ndarray of float
        Leaf weight, or cover-weighted subtree mean at internal nodes.
    node_sample_weight : numpy.ndarray of float
        Cover of every node.
    """

    def __init__(self, children_left, children_right, children_default, features, thresholds, values,
                 node_sample_weight):
        self.children_left = np.asarray(children_left, dtype=np.int64)
        self.children_right = np.asarray(children_right, dtype=np.int64)
        self.children_default = np.asarray(children_default, dtype=np.int64)
        self.features = np.asarray(features, dtype=np.int64)
        self.thresholds = np.asarray(thresholds, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64).copy()
        self.node_sample_weight = np.asarray(node_sample_weight, dtype=np.float64)
        self._fill_internal_values()
        for array in (self.children_left, self.children_right, self.children_default, self.features,
                      self.thresholds, self.values, self.node_sample_weight):
            array.setflags(write=False)

    def _fill_internal_values(self):
        # children always have larger indices than their parent
        for i in range(self.n_nodes - 1, -1, -1):
            left, right = self.children_left[i], self.children_right[i]
            if left != -1:
                cover = self.node_sample_weight[left] + self.node_sample_weight[right]
                self.values[i] = (self.node_sample_weight[left] * self.values[left]
                                  + self.node_sample_weight[right] * self.values[right]) / cover

    @classmethod
    def leaf(cls, value: float, cover: float) -> "RegressionTree":
        return cls([-1], [-1], [-1], [-1], [np.nan], [value], [cover])

    @property
    def n_nodes(self) -> int:
        return len(self.children_left)

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.children_left != -1))

    @property
    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.children_left[i] != -1:
                depth[self.children_left[i]] = depth[self.children_right[i]] = depth[i] + 1
        return int(depth.max()) if self.n_nodes else 0

    def node(self, i: int) -> TreeNode:
        return TreeNode(i, int(self.features[i]), float(self.thresholds[i]),
                        bool(self.children_default[i] == self.children_left[i] and self.children_left[i] != -1),
                        int(self.children_left[i]), int(self.children_right[i]),
                        float(self.node_sample_weight[i]), float(self.values[i]))

    def leaves(self) -> np.ndarray:
        return np.nonzero(self.children_left == -1)[0]

    def expected_value(self) -> float:
        """Cover-weighted mean leaf weight (the tree's path-dependent expectation)."""
        return float(self.values[0])

    def next_nodes(self, nodes: np.ndarray, X: np.ndarray) -> np.ndarray:
        """One routing step for the cases ``X`` currently at ``nodes`` (leaves stay put)."""
        internal = self.children_left[nodes] != -1
        out = nodes.copy()
        if not np.any(internal):
            return out
        rows = np.nonzero(internal)[0]
        at = nodes[rows]
        x = X[rows, self.features[at]]
        go = np.where(x < self.thresholds[at], self.children_left[at], self.children_right[at])
        out[rows] = np.where(np.isnan(x), self.children_default[at], go)
        return out

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X`` (NaN marks MISSING)."""
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            moved = self.next_nodes(nodes, X)
            if np.array_equal(moved, nodes):
                return nodes
            nodes = moved

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.values[self.apply(X)]

    def path_features(self, X: np.ndarray, n_features: int) -> np.ndarray:
        """Boolean (n_rows, n_features): does the row's decision path split on the feature."""
        used = np.zeros((X.shape[0], n_features), dtype=bool)
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            internal = self.children_left[nodes] != -1
            if not np.any(internal):
                return used
            used[rows[internal], self.features[nodes[internal]]] = True
            nodes = self.next_nodes(nodes, X)

    def check_covers(self, tolerance: float = 1e-9) -> None:
        """Raise ContractError unless every cover is positive and children sum to the parent."""
        if np.any(self.node_sample_weight <= 0):
            raise ContractError("tree has a node with non-positive cover")
        for i in range(self.n_nodes):
            left, right = self.children_left[i], self.children_right[i]
            if left != -1:
                total = self.node_sample_weight[left] + self.node_sample_weight[right]
                if abs(total - self.node_sample_weight[i]) > tolerance * max(1.0, self.node_sample_weight[i]):
                    raise ContractError(f"node {i}: child covers {total} != parent cover {self.node_sample_weight[i]}")

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            node = self.node(i)
            if node.is_leaf:
                nodes.append({'id': i, 'leaf': node.value, 'cover': node.cover})
            else:
                nodes.append({'id': i, 'feature_id': node.feature_id, 'threshold': node.threshold,
                              'default_left': node.default_left, 'left': node.left, 'right': node.right,
                              'cover': node.cover})
        return {'nodes': nodes}

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionTree":
        nodes = sorted(data['nodes'], key=lambda n: n['id'])
        if [n['id'] for n in nodes] != list(range(len(nodes))):
            raise ArtifactError("tree nodes must be numbered 0..n-1")
        rows = []
        for n in nodes:
            if 'leaf' in n:
                rows.append((-1, -1, -1, -1, np.nan, n['leaf'], n['cover']))
            else:
                default = n['left'] if n['default_left'] else n['right']
                rows.append((n['left'], n['right'], default, n['feature_id'], n['threshold'], 0.0, n['cover']))
        return cls(*(list(column) for column in zip(*rows)))

    def dump(self, names: Optional[Sequence[str]] = None, precision: int = 4) -> str:
        """Indented text rendering, one node per line."""
        lines: List[str] = []

        def visit(i: int, depth: int):
            node = self.node(i)
            pad = "  " * depth
            if node.is_leaf:
                lines.append(f"{pad}{i}: leaf={node.value:.{precision}f} cover={node.cover:g}")
                return
            name = names[node.feature_id] if names is not None else f"f{node.feature_id}"
            missing = "left" if node.default_left else "right"
            lines.append(f"{pad}{i}: [{name} < {node.threshold:.{precision}g}] missing={missing} "
                         f"cover={node.cover:g}")
            visit(node.left, depth + 1)
            visit(node.right, depth + 1)

        visit(0, 0)
        return "\n".join(lines)
