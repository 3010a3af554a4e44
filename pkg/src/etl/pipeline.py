"""
ETL driver: raw event tables in, split and winsorized case matrices out.

Order of operations:
    1. normalize codes (NDC -> ATC, ICD-9 -> ICD-10), dropping unmapped codes
    2. drop rare codes per (category, code)
    3. build the catalog and the cases
    4. split into train / valid / test
    5. learn winsor bounds on train, apply them to every split
"""

import os
from dataclasses import dataclass
from typing import Dict, Optional

from src.data.case_matrix import CaseMatrix
from src.data.split import split_dataset
from src.etl.cases import EtlConfig, build_cases, build_catalog
from src.etl.code_maps import CodeMaps, UnmappedReport, normalize_codes
from src.etl.rules import Winsorizer, filter_rare_codes
from src.synth.raw_tables import EventStore
from src.utils.general_func import ensure_dir, write_json
from src.utils.run_log import RunLog

run_log = RunLog()

SPLITS = ("train", "valid", "test")
BOUNDS_FILE = "bounds.json"
UNMAPPED_FILE = "unmapped_report.json"


@dataclass
class EtlResult:
    splits: Dict[str, CaseMatrix]
    winsorizer: Winsorizer
    unmapped: UnmappedReport
    config: EtlConfig

    def save(self, directory: str, provenance: Optional[dict] = None) -> Dict[str, str]:
        """
        Write ``<split>/`` case directories, ``bounds.json`` and ``unmapped_report.json``.

        Returns
        -------
        dict
            Artifact name -> path of every file written.
        """
        ensure_dir(directory)
        written = {}
        for name in SPLITS:
            split_dir = os.path.join(directory, name)
            self.splits[name].save(split_dir, provenance={**(provenance or {}), 'split': name,
                                                          'split_seed': self.config.split.seed})
            for f in ("catalog.json", "cases.csv", "manifest.json"):
                written[f"{name}/{f}"] = os.path.join(split_dir, f)
        names = self.splits["train"].catalog.names
        written[BOUNDS_FILE] = write_json(os.path.join(directory, BOUNDS_FILE), self.winsorizer.to_dict(names))
        written[UNMAPPED_FILE] = write_json(os.path.join(directory, UNMAPPED_FILE), self.unmapped.to_dict())
        return written


def run_etl(store: EventStore, maps: CodeMaps, config: EtlConfig, threads: int = 1) -> EtlResult:
    """
    Apply the three cleaning rules, build the cases and split them.

    Parameters
    ----------
    store : EventStore
        Raw events and echo reports.
    maps : CodeMaps
        Code lookup tables.
    config : EtlConfig
        Rules, windowing and split.
    threads : int
        Worker threads for case construction.

    Returns
    -------
    EtlResult
    """
    normalized, unmapped = normalize_codes(store, maps)
    filtered = filter_rare_codes(normalized, config.min_code_count)
    catalog = build_catalog(filtered, config)
    cases = build_cases(filtered, config, catalog, threads=threads)
    train, valid, test = split_dataset(cases, config.split)

    numeric = catalog.ids_of_kind("numeric")
    winsorizer = Winsorizer(config.winsor_lo, config.winsor_hi, numeric).fit(train.as_nan())
    splits = {}
    for name, part in zip(SPLITS, (train, valid, test)):
        clipped = winsorizer.transform(part.as_nan())
        splits[name] = CaseMatrix.from_nan_array(catalog, clipped, part.labels, part.case_ids)
    run_log.add(f"winsorized {len(winsorizer.bounds_)} numeric features at "
                f"[{config.winsor_lo}, {config.winsor_hi}] percentiles (bounds from train)")
    return EtlResult(splits, winsorizer, unmapped, config)
