"""
Raw event tables: the in-memory EventStore and its CSV directory format.

Each of the nine category tables has the header ``patient_id,date,code,value``;
``echo.csv`` has ``patient_id,date,ef_percent``. Dates are ISO ``YYYY-MM-DD``.
An empty ``value`` means the event carries no value (drug and diagnosis codes).
"""

import os
from typing import Dict, Optional

import numpy as np
import pandas as pd

from src.data.catalog import CATEGORIES
from src.utils.errors import ArtifactError, ContractError
from src.utils.general_func import ensure_dir, read_json, sha256_file, write_json
from src.utils.run_log import RunLog

run_log = RunLog()

TABLE_COLUMNS = ["patient_id", "date", "code", "value"]
ECHO_COLUMNS = ["patient_id", "date", "ef_percent"]
ECHO = "ECHO"
MANIFEST_FILE = "manifest.json"


def table_file(name: str) -> str:
    """File name of a table inside a raw directory (``vl.csv``, ``echo.csv``)."""
    return f"{name.lower()}.csv"


def typed_table(frame: Optional[pd.DataFrame]) -> pd.DataFrame:
    """Event table with the canonical columns, dtypes and a fresh index."""
    if frame is None:
        frame = pd.DataFrame(columns=TABLE_COLUMNS)
    frame = frame.loc[:, TABLE_COLUMNS].reset_index(drop=True)
    return frame.astype({"patient_id": str, "date": str, "code": str, "value": np.float64})


def typed_echo(frame: Optional[pd.DataFrame]) -> pd.DataFrame:
    """Echo table with the canonical columns and dtypes."""
    if frame is None:
        frame = pd.DataFrame(columns=ECHO_COLUMNS)
    frame = frame.loc[:, ECHO_COLUMNS].reset_index(drop=True)
    return frame.astype({"patient_id": str, "date": str, "ef_percent": np.float64})


class EventStore:
    """
    Raw per-patient event tables plus the echo reports.

    Attributes
    ----------
    tables : dict of str -> pandas.DataFrame
        One table per category in ``CATEGORIES``.
    echo : pandas.DataFrame
        Echo reports with the EF label.
    truth : pandas.DataFrame or None
        Generator ground truth per echo report (latent covariates); never written
        to disk and ignored by equality.
    """

    def __init__(self, tables: Optional[Dict[str, pd.DataFrame]] = None, echo: Optional[pd.DataFrame] = None,
                 truth: Optional[pd.DataFrame] = None):
        tables = tables or {}
        unknown = sorted(set(tables) - set(CATEGORIES))
        if unknown:
            raise ContractError(f"unknown event table {unknown[0]!r}")
        self.tables = {c: typed_table(tables.get(c)) for c in CATEGORIES}
        self.echo = typed_echo(echo)
        self.truth = truth

    @classmethod
    def empty(cls) -> "EventStore":
        return cls()

    def table(self, category: str) -> pd.DataFrame:
        return self.tables[category]

    def replace(self, tables: Optional[Dict[str, pd.DataFrame]] = None, echo: Optional[pd.DataFrame] = None) -> "EventStore":
        """Copy with some tables swapped; ground truth is carried over."""
        merged = dict(self.tables)
        merged.update(tables or {})
        return EventStore(merged, self.echo if echo is None else echo, self.truth)

    def row_counts(self) -> Dict[str, int]:
        counts = {c: len(t) for c, t in self.tables.items()}
        counts[ECHO] = len(self.echo)
        return counts

    @property
    def patient_ids(self):
        ids = set(self.echo["patient_id"])
        for t in self.tables.values():
            ids.update(t["patient_id"])
        return sorted(ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStore):
            return False
        return self.echo.equals(other.echo) and all(self.tables[c].equals(other.tables[c]) for c in CATEGORIES)

    def __repr__(self) -> str:
        return f"EventStore({sum(len(t) for t in self.tables.values())} events, {len(self.echo)} echo reports)"


def _write_csv(frame: pd.DataFrame, path: str):
    try:
        frame.to_csv(path, index=False, na_rep="", lineterminator="\n")
    except OSError as e:
        raise ArtifactError(f"{path}: cannot write ({e.strerror or e})") from e


def write_raw_tables(store: EventStore, directory: str) -> dict:
    """
    Write the nine category CSVs, ``echo.csv`` and a manifest.

    Parameters
    ----------
    store : EventStore
        Tables to write.
    directory : str
        Output directory, created if needed.

    Returns
    -------
    dict
        Manifest with the row count and SHA-256 of every file.

    Raises
    ------
    ArtifactError
        If a file cannot be written; the message names it.
    """
    ensure_dir(directory)
    entries = {}
    frames = [(c, store.tables[c]) for c in CATEGORIES] + [(ECHO, store.echo)]
    for name, frame in frames:
        path = os.path.join(directory, table_file(name))
        _write_csv(frame, path)
        entries[name] = {'file': table_file(name), 'rows': int(len(frame)), 'sha256': sha256_file(path)}
    manifest = {'schema_version': 1, 'tables': entries}
    write_json(os.path.join(directory, MANIFEST_FILE), manifest)
    run_log.add(f"wrote raw tables to {directory}: " + ", ".join(f"{k}={v['rows']}" for k, v in entries.items()))
    return manifest


def _read_csv(path: str, string_columns) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype={c: str for c in string_columns}, keep_default_na=False,
                           na_values=[""], float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ArtifactError(f"{path}: cannot read ({e})") from e


def read_raw_tables(directory: str, verify: bool = True) -> EventStore:
    """
    Read a raw directory written by :func:`write_raw_tables`.

    With ``verify`` the manifest checksums are checked when a manifest is present;
    hand-made directories without one are accepted.
    """
    manifest_path = os.path.join(directory, MANIFEST_FILE)
    if verify and os.path.exists(manifest_path):
        for name, entry in read_json(manifest_path).get('tables', {}).items():
            path = os.path.join(directory, entry['file'])
            if sha256_file(path) != entry['sha256']:
                raise ArtifactError(f"{path}: checksum mismatch")
    tables = {}
    for c in CATEGORIES:
        frame = _read_csv(os.path.join(directory, table_file(c)), ("patient_id", "date", "code"))
        if list(frame.columns) != TABLE_COLUMNS:
            raise ArtifactError(f"{os.path.join(directory, table_file(c))}: expected header {','.join(TABLE_COLUMNS)}")
        tables[c] = frame
    echo_path = os.path.join(directory, table_file(ECHO))
    echo = _read_csv(echo_path, ("patient_id", "date"))
    if list(echo.columns) != ECHO_COLUMNS:
        raise ArtifactError(f"{echo_path}: expected header {','.join(ECHO_COLUMNS)}")
    return EventStore(tables, echo)
