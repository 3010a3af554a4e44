"""
Builders shared by the test modules.
"""

import numpy as np

from src.data.case_matrix import CaseMatrix
from src.data.catalog import FeatureCatalog
from src.gbt.params import Hyperparams
from src.gbt.train import train


def numeric_catalog(m: int) -> FeatureCatalog:
    return FeatureCatalog.from_names([(f"LB_F{j}", "numeric") for j in range(m)])


def case_matrix(X, y, catalog: FeatureCatalog = None) -> CaseMatrix:
    """Cases from a float array with NaN for MISSING; one case per patient."""
    X = np.asarray(X, dtype=np.float64)
    catalog = catalog or numeric_catalog(X.shape[1])
    ids = [(f"P{i:06d}", "2015-01-01") for i in range(X.shape[0])]
    return CaseMatrix.from_nan_array(catalog, X, y, ids)


def random_cases(rng: np.random.Generator, n: int, m: int, missing_rate: float = 0.2) -> CaseMatrix:
    """Random features with an additive, interacting EF signal and MISSING cells."""
    X = rng.normal(size=(n, m))
    y = 50.0 + 8.0 * X[:, 0] - 5.0 * (X[:, 1 % m] > 0.3) + 3.0 * X[:, 0] * X[:, m - 1] + rng.normal(0, 2, n)
    X[rng.random((n, m)) < missing_rate] = np.nan
    return case_matrix(X, np.clip(y, 0.0, 100.0))


def random_model(rng: np.random.Generator, m: int, n_cases: int = 60, max_trees: int = 5, max_depth: int = 3):
    """A small trained ensemble and its training cases."""
    data = random_cases(rng, n_cases, m)
    hp = Hyperparams(n_trees=int(rng.integers(1, max_trees + 1)), max_depth=int(rng.integers(1, max_depth + 1)),
                     eta=0.5, subsample=1.0, reg_lambda=0.5, min_child_weight=1.0, seed=int(rng.integers(1000)))
    return train(data, hp), data
