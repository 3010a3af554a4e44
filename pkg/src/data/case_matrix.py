"""
Case matrix: one row per echo report, feature cells with explicit missingness and the EF label.

On disk a case matrix is a directory holding ``catalog.json``, ``cases.csv`` and
``manifest.json``. In ``cases.csv`` the first two columns are ``patient_id`` and
``echo_date``, then one column per catalog feature, and the last column ``ef`` is
the label. An empty field is a MISSING cell.
"""

import os
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.data.catalog import FeatureCatalog
from src.utils.errors import ArtifactError, ContractError
from src.utils.general_func import ensure_dir, read_json, sha256_file, write_json

CaseId = Tuple[str, str]

CATALOG_FILE = "catalog.json"
CASES_FILE = "cases.csv"
MANIFEST_FILE = "manifest.json"
LABEL_COLUMN = "ef"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class CaseMatrix:
    """
    Immutable feature matrix with a separate missingness mask.

    Parameters
    ----------
    catalog : FeatureCatalog
        Column definitions; ``len(catalog)`` is the width.
    values : array-like, shape (n_cases, M)
        Feature values. Cells flagged in ``missing`` are ignored and stored as 0.
    missing : array-like of bool, shape (n_cases, M)
        True where the cell is MISSING.
    labels : array-like, shape (n_cases,)
        EF scores in percent.
    case_ids : sequence of (patient_id, echo_date)
        Unique case identifiers; dates are ISO ``YYYY-MM-DD`` strings.
    """

    def __init__(self, catalog: FeatureCatalog, values, missing, labels, case_ids: Sequence[CaseId]):
        n_features = len(catalog)
        values = np.array(values, dtype=np.float64).reshape(-1, n_features) if n_features else \
            np.zeros((len(case_ids), 0))
        missing = np.array(missing, dtype=bool).reshape(values.shape)
        labels = np.array(labels, dtype=np.float64).reshape(-1)
        case_ids = [(str(p), str(d)) for p, d in case_ids]

        if not (values.shape[0] == labels.shape[0] == len(case_ids)):
            raise ContractError(
                f"case matrix: {values.shape[0]} feature rows, {labels.shape[0]} labels, {len(case_ids)} case ids")
        values[missing] = 0.0
        if not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise ContractError(f"case matrix: non-finite value in row {row}, feature {catalog.entries[col].name!r}")
        if labels.size and (not np.all(np.isfinite(labels)) or labels.min() < 0.0 or labels.max() > 100.0):
            raise ContractError("case matrix: labels must be finite and within [0, 100]")
        if len(set(case_ids)) != len(case_ids):
            raise ContractError("case matrix: case ids are not unique")

        self.catalog = catalog
        self.values = _frozen(values)
        self.missing = _frozen(missing)
        self.labels = _frozen(labels)
        self.case_ids: Tuple[CaseId, ...] = tuple(case_ids)

    @classmethod
    def from_nan_array(cls, catalog: FeatureCatalog, features, labels, case_ids) -> "CaseMatrix":
        """Build a matrix from a float array where NaN marks MISSING."""
        features = np.asarray(features, dtype=np.float64).reshape(-1, len(catalog))
        return cls(catalog, np.nan_to_num(features, nan=0.0), np.isnan(features), labels, case_ids)

    @property
    def n_cases(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def as_nan(self) -> np.ndarray:
        """Feature values as a new float array with NaN in MISSING cells (the model input form)."""
        out = self.values.copy()
        out[self.missing] = np.nan
        return out

    def column(self, name: str) -> np.ndarray:
        """One feature column with NaN for MISSING."""
        j = self.catalog.index_of(name)
        out = self.values[:, j].copy()
        out[self.missing[:, j]] = np.nan
        return out

    @property
    def patient_ids(self) -> List[str]:
        return [p for p, _ in self.case_ids]

    def subset(self, rows: Sequence[int]) -> "CaseMatrix":
        """Rows ``rows`` in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        return CaseMatrix(self.catalog, self.values[rows], self.missing[rows], self.labels[rows],
                          [self.case_ids[i] for i in rows])

    def with_values(self, values) -> "CaseMatrix":
        """Same cases and missingness with replaced values (used by winsorization)."""
        return CaseMatrix(self.catalog, values, self.missing, self.labels, self.case_ids)

    def __eq__(self, other) -> bool:
        return (isinstance(other, CaseMatrix)
                and self.catalog == other.catalog
                and self.case_ids == other.case_ids
                and np.array_equal(self.missing, other.missing)
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.labels, other.labels))

    def __repr__(self) -> str:
        return f"CaseMatrix({self.n_cases} cases x {self.n_features} features)"

    def to_frame(self) -> pd.DataFrame:
        """The ``cases.csv`` table as a DataFrame (NaN for MISSING)."""
        frame = pd.DataFrame(self.as_nan(), columns=self.catalog.names)
        frame.insert(0, "echo_date", [d for _, d in self.case_ids])
        frame.insert(0, "patient_id", self.patient_ids)
        frame[LABEL_COLUMN] = self.labels
        return frame

    def save(self, directory: str, provenance: Optional[dict] = None) -> dict:
        """
        Persist the matrix as a case directory.

        Parameters
        ----------
        directory : str
            Target directory, created if needed.
        provenance : dict, optional
            Seeds and upstream checksums recorded in the manifest.

        Returns
        -------
        dict
            The manifest written to ``manifest.json``.
        """
        ensure_dir(directory)
        catalog_path = os.path.join(directory, CATALOG_FILE)
        cases_path = os.path.join(directory, CASES_FILE)
        write_json(catalog_path, self.catalog.to_dict())
        try:
            self.to_frame().to_csv(cases_path, index=False, na_rep="", lineterminator="\n")
        except OSError as e:
            raise ArtifactError(f"{cases_path}: cannot write ({e.strerror or e})") from e
        manifest = {
            'schema_version': 1,
            'n_cases': self.n_cases,
            'n_features': self.n_features,
            'n_missing': int(self.missing.sum()),
            'checksums': {
                CATALOG_FILE: sha256_file(catalog_path),
                CASES_FILE: sha256_file(cases_path),
            },
            'provenance': provenance or {},
        }
        write_json(os.path.join(directory, MANIFEST_FILE), manifest)
        return manifest

    @classmethod
    def load(cls, directory: str) -> "CaseMatrix":
        """
        Read a case directory written by :meth:`save`, verifying checksums.

        Raises
        ------
        ArtifactError
            Missing files, checksum mismatch or a malformed table.
        """
        manifest = read_json(os.path.join(directory, MANIFEST_FILE))
        for name, expected in manifest.get('checksums', {}).items():
            actual = sha256_file(os.path.join(directory, name))
            if actual != expected:
                raise ArtifactError(f"{os.path.join(directory, name)}: checksum mismatch")
        catalog = FeatureCatalog.from_dict(read_json(os.path.join(directory, CATALOG_FILE)))
        cases_path = os.path.join(directory, CASES_FILE)
        names = catalog.names
        try:
            frame = pd.read_csv(cases_path, dtype={"patient_id": str, "echo_date": str},
                                keep_default_na=False, na_values=[""], float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as e:
            raise ArtifactError(f"{cases_path}: cannot read ({e})") from e
        expected_columns = ["patient_id", "echo_date"] + names + [LABEL_COLUMN]
        if list(frame.columns) != expected_columns:
            raise ArtifactError(f"{cases_path}: header does not match {CATALOG_FILE}")
        features = frame[names].to_numpy(dtype=np.float64) if names else np.zeros((len(frame), 0))
        return cls.from_nan_array(catalog, features, frame[LABEL_COLUMN].to_numpy(dtype=np.float64),
                                  list(zip(frame["patient_id"], frame["echo_date"])))
