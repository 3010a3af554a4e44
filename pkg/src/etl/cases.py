"""
Case construction: echo selection, windowed aggregation and the feature catalog.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.data.case_matrix import CaseMatrix
from src.data.catalog import CATEGORIES, CODE_CATEGORIES, FeatureCatalog, feature_name
from src.data.split import SplitSpec
from src.synth.raw_tables import EventStore
from src.utils.config import Config, as_number, check_keys, check_schema_version
from src.utils.errors import ConfigError
from src.utils.general_func import chunk_bounds, parallel_map
from src.utils.run_log import RunLog

run_log = RunLog()

# Aggregation rules a category may use, first entry is the default
RULES_BY_CATEGORY = {
    "DEMO": ("copy", "nearest"),
    "VL": ("nearest", "mean", "latest"),
    "LB": ("nearest", "mean", "latest"),
    "OR": ("nearest", "mean", "latest"),
    "MD": ("count", "presence"),
    "MF": ("count", "presence"),
    "MO": ("count", "presence"),
    "PL": ("presence", "count"),
    "DI": ("presence", "count"),
}
KIND_OF_RULE = {"copy": "numeric", "nearest": "numeric", "mean": "numeric", "latest": "numeric",
                "count": "count", "presence": "binary"}


@dataclass(frozen=True)
class EtlConfig:
    """Preprocessing rules, case windowing and the split; defaults come from ``etl`` in config.json."""
    min_code_count: int = 20
    winsor_lo: float = 1.0
    winsor_hi: float = 99.0
    window_days: int = 45
    independence_days: int = 180
    aggregation: Dict[str, str] = field(default_factory=lambda: {c: r[0] for c, r in RULES_BY_CATEGORY.items()})
    split: SplitSpec = field(default_factory=SplitSpec)

    def __post_init__(self):
        as_number(self.min_code_count, "$.min_code_count", 0, None, integer=True)
        as_number(self.winsor_lo, "$.winsor_lo", 0.0, 100.0, lo_open=True, hi_open=True)
        as_number(self.winsor_hi, "$.winsor_hi", 0.0, 100.0, lo_open=True, hi_open=True)
        if self.winsor_lo >= self.winsor_hi:
            raise ConfigError(f"$.winsor_lo: must be below winsor_hi ({self.winsor_lo} >= {self.winsor_hi})")
        as_number(self.window_days, "$.window_days", 0, None, lo_open=True, integer=True)
        as_number(self.independence_days, "$.independence_days", self.window_days, None, integer=True)
        for category, rule in self.aggregation.items():
            if category not in RULES_BY_CATEGORY:
                raise ConfigError(f"$.aggregation.{category}: unknown category")
            if rule not in RULES_BY_CATEGORY[category]:
                raise ConfigError(f"$.aggregation.{category}: must be one of "
                                  f"{', '.join(RULES_BY_CATEGORY[category])}, got {rule!r}")

    def rule(self, category: str) -> str:
        return self.aggregation.get(category, RULES_BY_CATEGORY[category][0])

    @classmethod
    def from_dict(cls, data: dict, path: str = "$") -> "EtlConfig":
        allowed = list(cls.__dataclass_fields__) + ["schema_version"]
        check_keys(data, allowed, path)
        check_schema_version(data, path)
        defaults = Config().get_etl_defaults()
        merged = {k: v for k, v in defaults.items() if k in cls.__dataclass_fields__}
        merged.update({k: v for k, v in data.items() if k != "schema_version"})
        aggregation = dict(defaults.get("aggregation", {}))
        aggregation.update(data.get("aggregation", {}))
        merged["aggregation"] = aggregation
        merged["split"] = SplitSpec.from_dict(data.get("split", {}), f"{path}.split")
        try:
            return cls(**merged)
        except ConfigError as e:
            raise ConfigError(str(e).replace("$", path, 1)) from None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["schema_version"] = 1
        data["split"] = self.split.to_dict()
        return data


def build_catalog(store: EventStore, config: EtlConfig) -> FeatureCatalog:
    """
    Catalog of every code and measurement name present in the store.

    Features are grouped by category in the fixed category order and sorted by
    name within a category.
    """
    specs: List[Tuple[str, str]] = []
    for category in CATEGORIES:
        codes = sorted(set(store.table(category)["code"]))
        kind = KIND_OF_RULE[config.rule(category)]
        specs.extend((feature_name(category, code), kind) for code in codes)
    return FeatureCatalog.from_names(specs)


def select_echoes(days: Sequence[int], independence_days: int) -> List[int]:
    """
    Greedy scan over ascending echo days.

    A report starts a case only if it is more than ``independence_days`` after the
    last selected report.

    Returns
    -------
    list of int
        Positions of the selected reports.
    """
    selected, last = [], None
    for i, day in enumerate(days):
        if last is None or day - last > independence_days:
            selected.append(i)
            last = day
    return selected


def _to_days(dates: pd.Series) -> np.ndarray:
    if len(dates) == 0:
        return np.zeros(0, dtype=np.int64)
    return pd.to_datetime(dates, format="%Y-%m-%d").to_numpy().astype("datetime64[D]").astype(np.int64)


class _PatientEvents:
    """Catalog-indexed events of one patient, concatenated in category order."""

    def __init__(self, days, columns, values):
        self.days = days
        self.columns = columns
        self.values = values


def _first_per_column(columns: np.ndarray, order: np.ndarray):
    cols_sorted = columns[order]
    unique, first = np.unique(cols_sorted, return_index=True)
    return unique, order[first]


class _CaseBuilder:
    def __init__(self, catalog: FeatureCatalog, config: EtlConfig):
        self.catalog = catalog
        self.config = config
        m = len(catalog)
        self.rule = np.array([config.rule(e.category) for e in catalog.entries], dtype=object)
        self.empty_row = np.where(np.isin(self.rule, ("count", "presence")), 0.0, np.nan) if m else np.zeros(0)

    def cases_for(self, events: _PatientEvents, echo_days: np.ndarray) -> np.ndarray:
        window = self.config.window_days
        rows = np.tile(self.empty_row, (len(echo_days), 1))
        if len(events.days) == 0:
            return rows
        rule = self.rule[events.columns]
        has_value = ~np.isnan(events.values)
        row_order = np.arange(len(events.days))

        copy_rows = np.nonzero((rule == "copy") & has_value)[0]
        if copy_rows.size:
            cols, first = _first_per_column(events.columns, copy_rows)
            rows[:, cols] = events.values[first]

        for k, echo_day in enumerate(echo_days):
            delta = events.days - echo_day
            in_window = np.abs(delta) <= window
            x = rows[k]

            pick = np.nonzero(in_window & has_value & (rule == "nearest"))[0]
            if pick.size:
                order = pick[np.lexsort((row_order[pick], events.days[pick], np.abs(delta[pick]), events.columns[pick]))]
                cols, first = _first_per_column(events.columns, order)
                x[cols] = events.values[first]

            pick = np.nonzero(in_window & has_value & (rule == "latest"))[0]
            if pick.size:
                order = pick[np.lexsort((row_order[pick], -events.days[pick], events.columns[pick]))]
                cols, first = _first_per_column(events.columns, order)
                x[cols] = events.values[first]

            pick = np.nonzero(in_window & has_value & (rule == "mean"))[0]
            if pick.size:
                cols, inverse = np.unique(events.columns[pick], return_inverse=True)
                sums = np.bincount(inverse, weights=events.values[pick])
                x[cols] = sums / np.bincount(inverse)

            pick = np.nonzero(in_window & np.isin(rule, ("count", "presence")))[0]
            if pick.size:
                cols, counts = np.unique(events.columns[pick], return_counts=True)
                x[cols] = np.where(self.rule[cols] == "count", counts, 1.0)
        return rows


def _group_events(store: EventStore, catalog: FeatureCatalog) -> Dict[str, _PatientEvents]:
    index = {name: j for j, name in enumerate(catalog.names)}
    parts = []
    for category in CATEGORIES:
        table = store.table(category)
        if not len(table):
            continue
        columns = np.array([index.get(feature_name(category, c), -1) for c in table["code"]], dtype=np.int64)
        frame = pd.DataFrame({
            "patient_id": table["patient_id"].to_numpy(),
            "day": _to_days(table["date"]),
            "column": columns,
            "value": table["value"].to_numpy(dtype=np.float64),
        })
        parts.append(frame[frame["column"] >= 0])
    if not parts:
        return {}
    events = pd.concat(parts, ignore_index=True)
    grouped = {}
    for patient_id, group in events.groupby("patient_id", sort=True):
        grouped[patient_id] = _PatientEvents(group["day"].to_numpy(), group["column"].to_numpy(),
                                             group["value"].to_numpy())
    return grouped


def build_cases(store: EventStore, config: EtlConfig, catalog: FeatureCatalog, threads: int = 1) -> CaseMatrix:
    """
    Turn echo reports and their surrounding events into a case matrix.

    Per patient the echo reports are scanned in date order and kept with
    :func:`select_echoes`. Each case aggregates the patient's events within
    ``window_days`` of the echo date:

    * ``nearest``: value closest in time (ties: earlier date, then first row)
    * ``latest``: value with the latest date in the window
    * ``mean``: mean of the values in the window
    * ``count``: number of events; ``presence``: 1 if any event
    * ``copy`` (demographics): first recorded value, regardless of the window

    Numeric features without an event are MISSING; binary and count features are 0.

    Parameters
    ----------
    store : EventStore
        Normalized and filtered events.
    config : EtlConfig
        Window, independence gap and aggregation rules.
    catalog : FeatureCatalog
        Columns of the result; events with codes outside it are ignored.
    threads : int
        Worker threads over patients; the result does not depend on it.

    Returns
    -------
    CaseMatrix
        Rows sorted by (patient_id, echo_date).
    """
    events = _group_events(store, catalog)
    echo = store.echo.assign(day=_to_days(store.echo["date"]))
    echo = echo.sort_values(["patient_id", "day"], kind="mergesort")
    patients = [(pid, group) for pid, group in echo.groupby("patient_id", sort=True)]
    builder = _CaseBuilder(catalog, config)
    empty = _PatientEvents(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))

    def build_range(bounds):
        lo, hi = bounds
        out = []
        for pid, group in patients[lo:hi]:
            days = group["day"].to_numpy()
            keep = select_echoes(days, config.independence_days)
            rows = builder.cases_for(events.get(pid, empty), days[keep])
            out.append((pid, group["date"].to_numpy()[keep], group["ef_percent"].to_numpy()[keep], rows))
        return out

    chunks = chunk_bounds(len(patients), max(1, threads) * 4)
    results = [r for part in parallel_map(build_range, chunks, threads) for r in part]

    m = len(catalog)
    features = np.vstack([r[3] for r in results]) if results else np.zeros((0, m))
    labels = np.concatenate([r[2] for r in results]) if results else np.zeros(0)
    case_ids = [(pid, str(d)) for pid, dates, _, _ in results for d in dates]
    matrix = CaseMatrix.from_nan_array(catalog, features, labels, case_ids)
    run_log.add(f"built {matrix.n_cases} cases from {len(store.echo)} echo reports of {len(patients)} patients "
                f"({m} features, window {config.window_days} d, independence {config.independence_days} d)")
    return matrix
