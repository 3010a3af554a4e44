"""
Input rows for the embeddings.

Raw-feature rows have MISSING cells imputed with the training-split column median
and are then standardised per column with the training statistics. SHAP rows are
used as they are: all columns share the EF-point unit.
"""

import numpy as np
from sklearn.impute import SimpleImputer
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler

from src.data.case_matrix import CaseMatrix
from src.explain.shap_matrix import ShapMatrix
from src.utils.errors import ContractError


def raw_feature_transformer(train: CaseMatrix) -> Pipeline:
    """Median imputation followed by standardisation, fitted on ``train``."""
    if train.n_cases == 0:
        raise ContractError("raw-feature preprocessing needs a non-empty training split")
    pipeline = Pipeline([
        ('impute', SimpleImputer(strategy="median", keep_empty_features=True)),
        ('scale', StandardScaler()),
    ])
    return pipeline.fit(train.as_nan())


def raw_space(data: CaseMatrix, train: CaseMatrix) -> np.ndarray:
    """Imputed, standardised feature rows of ``data``."""
    if data.catalog != train.catalog:
        raise ContractError("cases and training split use different catalogs")
    return raw_feature_transformer(train).transform(data.as_nan())


def shap_space(shap: ShapMatrix) -> np.ndarray:
    return np.array(shap.values, dtype=np.float64)
