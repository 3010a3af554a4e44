"""
SHAP values of a whole case matrix and their on-disk form.

A SHAP directory holds ``shap.csv`` (same layout as ``cases.csv``: case id
columns, one column per feature, then ``ef``) and ``shap_meta.json`` with the
base value and the fingerprints of the model and catalog.
"""

import os
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.data.case_matrix import LABEL_COLUMN, CaseId, CaseMatrix
from src.explain.tree_shap import expected_value, tree_shap_single
from src.gbt.model import GbtModel
from src.utils.errors import ArtifactError, ContractError
from src.utils.general_func import chunk_bounds, ensure_dir, parallel_map, read_json, sha256_file, write_json
from src.utils.run_log import RunLog

run_log = RunLog()

SHAP_FILE = "shap.csv"
META_FILE = "shap_meta.json"


class ShapMatrix:
    """
    Per-case, per-feature SHAP values in EF points.

    Parameters
    ----------
    values : array-like, shape (n_cases, M)
    base_value : float
        Base score plus the trees' cover-weighted means.
    feature_names : sequence of str
    case_ids : sequence of (patient_id, echo_date)
    labels : array-like, shape (n_cases,)
        EF of each case, carried for plotting and neighbourhood statistics.
    model_fingerprint, catalog_fingerprint : str
    """

    def __init__(self, values, base_value: float, feature_names: Sequence[str], case_ids: Sequence[CaseId],
                 labels, model_fingerprint: str = "", catalog_fingerprint: str = ""):
        self.feature_names = list(feature_names)
        self.values = np.asarray(values, dtype=np.float64).reshape(-1, len(self.feature_names))
        self.base_value = float(base_value)
        self.case_ids: Tuple[CaseId, ...] = tuple((str(p), str(d)) for p, d in case_ids)
        self.labels = np.asarray(labels, dtype=np.float64).reshape(-1)
        if not (self.values.shape[0] == len(self.case_ids) == self.labels.shape[0]):
            raise ContractError(f"shap matrix: {self.values.shape[0]} rows, {len(self.case_ids)} case ids, "
                                f"{self.labels.shape[0]} labels")
        self.model_fingerprint = model_fingerprint
        self.catalog_fingerprint = catalog_fingerprint

    @property
    def n_cases(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.feature_names.index(name)]
        except ValueError:
            raise ContractError(f"feature {name!r} is not in the SHAP matrix") from None

    def check_aligned(self, data: CaseMatrix) -> None:
        """Raise ContractError unless ``data`` holds the same cases and features."""
        if data.catalog.names != self.feature_names:
            raise ContractError("SHAP matrix and case matrix have different features")
        if data.case_ids != self.case_ids:
            raise ContractError("SHAP matrix and case matrix hold different cases")

    def reconstruction(self) -> np.ndarray:
        """``base_value + row sums``: the model predictions by local accuracy."""
        return self.base_value + self.values.sum(axis=1)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.feature_names)
        frame.insert(0, "echo_date", [d for _, d in self.case_ids])
        frame.insert(0, "patient_id", [p for p, _ in self.case_ids])
        frame[LABEL_COLUMN] = self.labels
        return frame

    def save(self, directory: str) -> dict:
        ensure_dir(directory)
        path = os.path.join(directory, SHAP_FILE)
        try:
            self.to_frame().to_csv(path, index=False, lineterminator="\n")
        except OSError as e:
            raise ArtifactError(f"{path}: cannot write ({e.strerror or e})") from e
        meta = {
            'schema_version': 1,
            'base_value': self.base_value,
            'n_cases': self.n_cases,
            'n_features': self.n_features,
            'model_fingerprint': self.model_fingerprint,
            'catalog_fingerprint': self.catalog_fingerprint,
            'checksums': {SHAP_FILE: sha256_file(path)},
        }
        write_json(os.path.join(directory, META_FILE), meta)
        return meta

    @classmethod
    def load(cls, directory: str) -> "ShapMatrix":
        meta = read_json(os.path.join(directory, META_FILE))
        path = os.path.join(directory, SHAP_FILE)
        expected = meta.get('checksums', {}).get(SHAP_FILE)
        if expected is not None and sha256_file(path) != expected:
            raise ArtifactError(f"{path}: checksum mismatch")
        try:
            frame = pd.read_csv(path, dtype={"patient_id": str, "echo_date": str}, keep_default_na=False,
                                float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as e:
            raise ArtifactError(f"{path}: cannot read ({e})") from e
        columns = list(frame.columns)
        if columns[:2] != ["patient_id", "echo_date"] or columns[-1] != LABEL_COLUMN:
            raise ArtifactError(f"{path}: expected patient_id, echo_date, features..., {LABEL_COLUMN}")
        names = columns[2:-1]
        values = frame[names].to_numpy(dtype=np.float64) if names else np.zeros((len(frame), 0))
        return cls(values, meta['base_value'], names, list(zip(frame["patient_id"], frame["echo_date"])),
                   frame[LABEL_COLUMN].to_numpy(dtype=np.float64), meta.get('model_fingerprint', ""),
                   meta.get('catalog_fingerprint', ""))


def _explain_rows(model: GbtModel, X: np.ndarray) -> np.ndarray:
    out = np.zeros((X.shape[0], model.n_features))
    trees = [tree for tree in model.trees if tree.n_nodes > 1]
    for i in range(X.shape[0]):
        for tree in trees:
            tree_shap_single(tree, X[i], out[i])
    return out


def explain_dataset(model: GbtModel, data: CaseMatrix, threads: int = 1) -> ShapMatrix:
    """
    TreeSHAP values of every case.

    Cases are split into contiguous chunks explained in parallel; rows come back
    in input order, so the result does not depend on ``threads``.

    Parameters
    ----------
    model : GbtModel
        Trained ensemble.
    data : CaseMatrix
        Cases sharing the model's catalog.
    threads : int
        Worker threads.

    Returns
    -------
    ShapMatrix

    Raises
    ------
    ContractError
        If the catalog differs from the model's.
    """
    model.check_catalog(data)
    X = data.as_nan()
    chunks = chunk_bounds(data.n_cases, threads)
    parts: List[np.ndarray] = parallel_map(lambda bounds: _explain_rows(model, X[bounds[0]:bounds[1]]), chunks,
                                           threads)
    values = np.vstack(parts) if parts else np.zeros((0, model.n_features))
    shap = ShapMatrix(values, expected_value(model), data.catalog.names, data.case_ids, data.labels,
                      model.fingerprint(), data.catalog.fingerprint())
    if shap.n_cases:
        error = float(np.max(np.abs(shap.reconstruction() - model.predict(X))))
        run_log.add(f"explained {shap.n_cases} cases over {len(model.trees)} trees "
                    f"(max local accuracy error {error:.2e})")
    else:
        run_log.add("explained 0 cases")
    return shap


def load_shap(directory: str, model: Optional[GbtModel] = None) -> ShapMatrix:
    """Read a SHAP directory; with ``model`` given, its fingerprint must match."""
    shap = ShapMatrix.load(directory)
    if model is not None and shap.model_fingerprint and shap.model_fingerprint != model.fingerprint():
        raise ContractError(f"{directory}: SHAP values were computed with a different model")
    return shap
