"""
Boosted ensemble: prediction, coverage importance and the JSON model format.
"""

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.data.case_matrix import CaseMatrix
from src.gbt.params import Hyperparams
from src.gbt.tree import RegressionTree
from src.utils.config import Config
from src.utils.errors import ArtifactError, ContractError
from src.utils.general_func import read_json, sha256_text, write_json


class GbtModel:
    """
    Additive tree ensemble: ``prediction = base_score + sum(tree.predict)``.

    Parameters
    ----------
    base_score : float
        Mean training label.
    trees : sequence of RegressionTree
        Trees in boosting order; shrinkage is already in their leaf weights.
    n_features : int
        Row width the model expects.
    catalog_fingerprint : str
        Fingerprint of the training catalog.
    feature_names : sequence of str, optional
        Catalog names, used by :meth:`dump_tree` and the plots.
    hyperparams : Hyperparams, optional
        Settings used for training.
    """

    def __init__(self, base_score: float, trees: Sequence[RegressionTree], n_features: int,
                 catalog_fingerprint: str = "", feature_names: Optional[Sequence[str]] = None,
                 hyperparams: Optional[Hyperparams] = None):
        self.base_score = float(base_score)
        self.trees: Tuple[RegressionTree, ...] = tuple(trees)
        self.n_features = int(n_features)
        self.catalog_fingerprint = catalog_fingerprint
        self.feature_names = list(feature_names) if feature_names is not None else None
        self.hyperparams = hyperparams

    @property
    def eta(self) -> Optional[float]:
        return self.hyperparams.eta if self.hyperparams else None

    def _check_width(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ContractError(f"row width {X.shape[1]} does not match the model's {self.n_features} features")
        return X

    def check_catalog(self, data: CaseMatrix) -> None:
        if data.n_features != self.n_features:
            raise ContractError(f"case matrix has {data.n_features} features, model expects {self.n_features}")
        if self.catalog_fingerprint and data.catalog.fingerprint() != self.catalog_fingerprint:
            raise ContractError("case matrix catalog differs from the model's training catalog")

    def predict(self, X) -> np.ndarray:
        """
        Predict EF for every row of ``X`` (NaN marks MISSING).

        Raises
        ------
        ContractError
            If the row width differs from the model's feature count.
        """
        X = self._check_width(X)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out

    def predict_row(self, row) -> float:
        return float(self.predict(row)[0])

    def predict_cases(self, data: CaseMatrix) -> np.ndarray:
        self.check_catalog(data)
        return self.predict(data.as_nan())

    def dump_tree(self, index: int = 0) -> str:
        """Text rendering of tree ``index`` with feature names."""
        if not self.trees:
            return f"(no trees) base_score={self.base_score:.4f}"
        return self.trees[index].dump(self.feature_names)

    def to_dict(self) -> dict:
        return {
            'schema_version': 1,
            'base_score': self.base_score,
            'n_features': self.n_features,
            'catalog_fingerprint': self.catalog_fingerprint,
            'feature_names': self.feature_names,
            'hyperparams': self.hyperparams.to_dict() if self.hyperparams else None,
            'trees': [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GbtModel":
        if data.get('schema_version', 1) != 1:
            raise ArtifactError(f"unsupported model schema_version {data.get('schema_version')!r}")
        hp = data.get('hyperparams')
        return cls(data['base_score'], [RegressionTree.from_dict(t) for t in data['trees']], data['n_features'],
                   data.get('catalog_fingerprint', ""), data.get('feature_names'),
                   Hyperparams.from_dict(hp) if hp else None)

    def fingerprint(self) -> str:
        return sha256_text(json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")))

    def save(self, path: str) -> str:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str) -> "GbtModel":
        try:
            return cls.from_dict(read_json(path))
        except (KeyError, TypeError) as e:
            raise ArtifactError(f"{path}: malformed model ({e})") from e


@dataclass
class CoverageImportance:
    """Per-feature fraction of (case, tree) decision paths that use the feature."""
    fractions: np.ndarray
    names: List[str]
    threshold: float

    def ranked(self) -> List[Tuple[str, float]]:
        """Features with coverage >= threshold, descending, ties by feature id."""
        order = np.lexsort((np.arange(len(self.fractions)), -self.fractions))
        return [(self.names[j], float(self.fractions[j])) for j in order if self.fractions[j] >= self.threshold]

    def to_dict(self) -> dict:
        return {
            'schema_version': 1,
            'threshold': self.threshold,
            'coverage': [{'feature': name, 'fraction': value} for name, value in self.ranked()],
        }


def coverage_importance(model: GbtModel, data: CaseMatrix, threshold: Optional[float] = None) -> CoverageImportance:
    """
    Coverage of every feature over the decision paths of ``data``.

    Parameters
    ----------
    model : GbtModel
        Trained ensemble.
    data : CaseMatrix
        Cases routed through every tree, usually the training split.
    threshold : float, optional
        Minimum coverage listed by :meth:`CoverageImportance.ranked`;
        defaults to ``importance.coverage_threshold``.

    Returns
    -------
    CoverageImportance
    """
    model.check_catalog(data)
    threshold = Config().get_coverage_threshold() if threshold is None else threshold
    X = data.as_nan()
    counts = np.zeros(model.n_features)
    for tree in model.trees:
        counts += tree.path_features(X, model.n_features).sum(axis=0)
    total = data.n_cases * len(model.trees)
    fractions = counts / total if total else counts
    return CoverageImportance(fractions, data.catalog.names, threshold)
