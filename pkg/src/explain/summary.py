"""
Ranking and per-feature views of a SHAP matrix.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.data.case_matrix import CaseMatrix
from src.explain.shap_matrix import ShapMatrix
from src.gbt.model import CoverageImportance
from src.utils.config import Config
from src.utils.errors import ContractError


@dataclass
class ShapSummary:
    """
    Mean absolute SHAP per feature with the data needed by the scatter plots.

    Attributes
    ----------
    feature_names : list of str
    mean_abs : numpy.ndarray
        Mean |SHAP| of every feature (zeros for an empty matrix).
    ranking : list of int
        Feature ids by descending mean |SHAP|, ties by feature id.
    feature_values : numpy.ndarray
        Case feature values, NaN for MISSING.
    shap_values : numpy.ndarray
        The SHAP matrix values.
    top_k : int
        Number of features the summary reports.
    """
    feature_names: List[str]
    mean_abs: np.ndarray
    ranking: List[int]
    feature_values: np.ndarray
    shap_values: np.ndarray
    top_k: int

    def top(self, k: Optional[int] = None) -> List[str]:
        k = self.top_k if k is None else k
        return [self.feature_names[j] for j in self.ranking[:k]]

    def pairs(self, name: str) -> List[Tuple[Optional[float], float]]:
        """(feature value or None for MISSING, SHAP value) for every case."""
        j = self.feature_names.index(name)
        return [(None if np.isnan(v) else float(v), float(s))
                for v, s in zip(self.feature_values[:, j], self.shap_values[:, j])]

    def to_dict(self) -> dict:
        return {
            'schema_version': 1,
            'top_k': self.top_k,
            'ranking': [{'feature': self.feature_names[j], 'mean_abs_shap': float(self.mean_abs[j])}
                        for j in self.ranking[:self.top_k]],
        }


def rank_by_mean_abs(values: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Column mean |values| and the descending order (ties by column index)."""
    n_features = values.shape[1]
    mean_abs = np.abs(values).mean(axis=0) if values.shape[0] else np.zeros(n_features)
    order = np.lexsort((np.arange(n_features), -mean_abs))
    return mean_abs, [int(j) for j in order]


def summarize(shap: ShapMatrix, data: CaseMatrix, top_k: Optional[int] = None) -> ShapSummary:
    """
    Rank features by mean |SHAP| and pair every SHAP value with its feature value.

    Parameters
    ----------
    shap : ShapMatrix
    data : CaseMatrix
        The cases ``shap`` was computed on.
    top_k : int, optional
        Defaults to ``importance.shap_top_k``.

    Raises
    ------
    ContractError
        If the two matrices are not aligned.
    """
    shap.check_aligned(data)
    top_k = Config().get_shap_top_k() if top_k is None else top_k
    if top_k < 0:
        raise ContractError(f"top_k must be >= 0, got {top_k}")
    mean_abs, ranking = rank_by_mean_abs(shap.values)
    return ShapSummary(list(shap.feature_names), mean_abs, ranking, data.as_nan(), shap.values, top_k)


def importance_overlap(coverage: CoverageImportance, summary: ShapSummary) -> Dict[str, List[str]]:
    """
    Compare the coverage ranking (above its threshold) with the SHAP top-k.

    Returns
    -------
    dict
        ``shared`` and ``shap_only`` in SHAP rank order, ``coverage_only`` in
        coverage rank order.
    """
    by_coverage = [name for name, _ in coverage.ranked()]
    by_shap = summary.top()
    coverage_set, shap_set = set(by_coverage), set(by_shap)
    return {
        'shared': [name for name in by_shap if name in coverage_set],
        'shap_only': [name for name in by_shap if name not in coverage_set],
        'coverage_only': [name for name in by_coverage if name not in shap_set],
    }


def group_mean_difference(shap: ShapMatrix, data: CaseMatrix, feature: str, group_a: float,
                          group_b: float) -> float:
    """Mean SHAP of ``feature`` over cases where it equals ``group_a`` minus the mean where it equals ``group_b``."""
    shap.check_aligned(data)
    values = data.column(feature)
    phi = shap.column(feature)
    in_a, in_b = values == group_a, values == group_b
    if not in_a.any() or not in_b.any():
        raise ContractError(f"{feature}: both groups need at least one case")
    return float(phi[in_a].mean() - phi[in_b].mean())
