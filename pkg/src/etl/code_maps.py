"""
Exact code lookup tables (NDC -> ATC, ICD-9 -> ICD-10) and code normalization.

Map directories hold two tab-separated files with a header row:
``ndc_to_atc.tsv`` (``ndc<TAB>atc``) and ``icd9_to_icd10.tsv`` (``icd9<TAB>icd10``).
"""

import os
from dataclasses import dataclass, field
from typing import Dict, Tuple

import pandas as pd

from src.data.catalog import DIAGNOSIS_CATEGORIES, DRUG_CATEGORIES
from src.synth import vocabulary
from src.synth.raw_tables import EventStore
from src.utils.errors import ArtifactError, ConfigError
from src.utils.general_func import ensure_dir
from src.utils.run_log import RunLog

run_log = RunLog()

NDC_FILE = "ndc_to_atc.tsv"
ICD_FILE = "icd9_to_icd10.tsv"


def _as_function(frame: pd.DataFrame, source: str, target: str, path: str) -> Dict[str, str]:
    mapping: Dict[str, str] = {}
    for src_code, dst_code in zip(frame[source], frame[target]):
        if mapping.get(src_code, dst_code) != dst_code:
            raise ConfigError(f"{path}: code {src_code!r} maps to both {mapping[src_code]!r} and {dst_code!r}")
        mapping[src_code] = dst_code
    return mapping


def _read_tsv(path: str, columns) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ArtifactError(f"{path}: cannot read ({e})") from e
    if list(frame.columns) != list(columns):
        raise ArtifactError(f"{path}: expected header {'<TAB>'.join(columns)}")
    return frame


class CodeMaps:
    """
    NDC -> ATC and ICD-9 -> ICD-10 lookups.

    Both mappings are functions; a source code listed twice with different
    targets is rejected.
    """

    def __init__(self, ndc_to_atc: Dict[str, str] = None, icd9_to_icd10: Dict[str, str] = None):
        self.ndc_to_atc = dict(ndc_to_atc or {})
        self.icd9_to_icd10 = dict(icd9_to_icd10 or {})

    @classmethod
    def from_frames(cls, ndc: pd.DataFrame, icd: pd.DataFrame, origin: str = "<memory>") -> "CodeMaps":
        return cls(_as_function(ndc, "ndc", "atc", f"{origin}/{NDC_FILE}"),
                   _as_function(icd, "icd9", "icd10", f"{origin}/{ICD_FILE}"))

    @classmethod
    def load(cls, directory: str) -> "CodeMaps":
        """Read the two TSV tables from a map directory."""
        ndc = _read_tsv(os.path.join(directory, NDC_FILE), ("ndc", "atc"))
        icd = _read_tsv(os.path.join(directory, ICD_FILE), ("icd9", "icd10"))
        maps = cls.from_frames(ndc, icd, directory)
        run_log.add(f"loaded code maps from {directory}: {len(maps.ndc_to_atc)} NDC, {len(maps.icd9_to_icd10)} ICD-9")
        return maps

    @classmethod
    def synthetic(cls) -> "CodeMaps":
        """Tables matching the synthetic cohort vocabulary."""
        return cls.from_frames(vocabulary.ndc_to_atc_table(), vocabulary.icd9_to_icd10_table(), "synthetic")

    def save(self, directory: str) -> Tuple[str, str]:
        ensure_dir(directory)
        paths = (os.path.join(directory, NDC_FILE), os.path.join(directory, ICD_FILE))
        frames = (pd.DataFrame(sorted(self.ndc_to_atc.items()), columns=["ndc", "atc"]),
                  pd.DataFrame(sorted(self.icd9_to_icd10.items()), columns=["icd9", "icd10"]))
        for path, frame in zip(paths, frames):
            try:
                frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
            except OSError as e:
                raise ArtifactError(f"{path}: cannot write ({e.strerror or e})") from e
        return paths

    def lookup_for(self, category: str) -> Dict[str, str]:
        if category in DRUG_CATEGORIES:
            return self.ndc_to_atc
        if category in DIAGNOSIS_CATEGORIES:
            return self.icd9_to_icd10
        raise KeyError(category)


@dataclass
class UnmappedReport:
    """Dropped codes per category with their event counts."""
    unmapped: Dict[str, Dict[str, int]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(sum(codes.values()) for codes in self.unmapped.values())

    def to_dict(self) -> dict:
        return {
            'schema_version': 1,
            'total_events_dropped': self.total,
            'unmapped': self.unmapped,
        }


def normalize_codes(store: EventStore, maps: CodeMaps) -> Tuple[EventStore, UnmappedReport]:
    """
    Replace drug codes by ATC classes and diagnosis codes by ICD-10 codes.

    Events whose code has no mapping are dropped and counted.

    Parameters
    ----------
    store : EventStore
        Raw events.
    maps : CodeMaps
        Lookup tables.

    Returns
    -------
    (EventStore, UnmappedReport)
        The normalized store and the per-category count of every dropped code.
    """
    tables = {}
    report = UnmappedReport()
    for category in DRUG_CATEGORIES + DIAGNOSIS_CATEGORIES:
        table = store.table(category)
        mapped = table["code"].map(maps.lookup_for(category))
        keep = mapped.notna()
        dropped = table.loc[~keep, "code"].value_counts()
        if len(dropped):
            report.unmapped[category] = {str(code): int(n) for code, n in sorted(dropped.items())}
        out = table.loc[keep].copy()
        out["code"] = mapped[keep].astype(str)
        tables[category] = out
    run_log.add(f"normalized codes: {report.total} events with unmapped codes dropped")
    return store.replace(tables), report
