"""
Synthetic heart-failure cohort with planted effects on the ejection fraction.

Every patient draws latent covariates (gender, age, baseline vitals and labs,
order findings, conditions, drugs) from an independent stream seeded by
``(seed, patient_index)``. Each echo report's EF is::

    base_ef + sum(effect.contribution(latent)) + N(0, noise_sd), clamped to [5, 85]

Events are clustered around the echo dates so the 45-day window usually finds
them, plus background events spread over the date range at the configured yearly
rates. A share of the code events is drawn from a long-tail pool (removed later by
the rare-code rule) or from unmapped junk codes, and a share of vitals and labs
are gross outliers (clipped later by winsorization).
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from src.data.catalog import CATEGORIES
from src.synth import vocabulary as vocab
from src.synth.raw_tables import ECHO_COLUMNS, TABLE_COLUMNS, EventStore
from src.utils.config import Config, as_number, check_keys, check_schema_version
from src.utils.errors import ConfigError
from src.utils.general_func import chunk_bounds, parallel_map
from src.utils.run_log import RunLog

run_log = RunLog()

FUNCTIONAL_FORMS = ("linear", "binary_shift")
EF_MIN, EF_MAX = 5.0, 85.0
WINDOW_SPREAD = 45
NEAR_MISS_SPREAD = 60
WITHIN_PATIENT_SD = 0.2


def _rebased(error: ConfigError, path: str) -> ConfigError:
    return ConfigError(str(error).replace("$", path, 1))


@dataclass(frozen=True)
class PlantedEffect:
    """
    Ground-truth effect of one covariate on EF.

    ``linear`` adds ``effect_on_ef`` per population standard deviation of the
    covariate; ``binary_shift`` adds ``effect_on_ef`` when the covariate equals
    ``active_value``.
    """
    feature_name: str
    effect_on_ef: float
    functional_form: str = "binary_shift"
    active_value: float = 1.0

    def __post_init__(self):
        as_number(self.effect_on_ef, "$.effect_on_ef")
        as_number(self.active_value, "$.active_value")
        if self.functional_form not in FUNCTIONAL_FORMS:
            raise ConfigError(f"$.functional_form: must be one of {', '.join(FUNCTIONAL_FORMS)}, "
                              f"got {self.functional_form!r}")
        try:
            vocab.latent_of(self.feature_name)
        except KeyError:
            raise ConfigError(f"$.feature_name: {self.feature_name!r} is not a generated feature") from None

    @property
    def latent(self) -> str:
        return vocab.latent_of(self.feature_name)

    def contribution(self, value: float) -> float:
        if self.functional_form == "linear":
            mean, sd = vocab.population_moments(self.latent)
            return self.effect_on_ef * (value - mean) / sd
        return self.effect_on_ef if value == self.active_value else 0.0

    @classmethod
    def from_dict(cls, data: dict, path: str = "$") -> "PlantedEffect":
        check_keys(data, ("feature_name", "effect_on_ef", "functional_form", "active_value"), path)
        if "feature_name" not in data or "effect_on_ef" not in data:
            raise ConfigError(f"{path}: planted effect needs feature_name and effect_on_ef")
        try:
            return cls(**data)
        except ConfigError as e:
            raise _rebased(e, path) from None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CohortConfig:
    """Generator settings; see ``synth`` in the bundled config.json for defaults."""
    n_patients: int = 2000
    date_range: Tuple[str, str] = ("2014-01-01", "2019-12-31")
    effects: Tuple[PlantedEffect, ...] = ()
    event_rates: Dict[str, float] = field(default_factory=dict)
    missing_rate: float = 0.15
    seed: int = 7
    base_ef: float = 50.0
    noise_sd: float = 8.0
    rare_code_fraction: float = 0.05
    unmapped_code_fraction: float = 0.01
    outlier_rate: float = 0.01
    echo_rate: float = 0.6

    def __post_init__(self):
        as_number(self.n_patients, "$.n_patients", 0, None, integer=True)
        as_number(self.seed, "$.seed", 0, None, integer=True)
        as_number(self.missing_rate, "$.missing_rate", 0.0, 1.0, hi_open=True)
        as_number(self.base_ef, "$.base_ef", 0.0, 100.0)
        as_number(self.noise_sd, "$.noise_sd", 0.0, None)
        as_number(self.rare_code_fraction, "$.rare_code_fraction", 0.0, 1.0, hi_open=True)
        as_number(self.unmapped_code_fraction, "$.unmapped_code_fraction", 0.0, 1.0, hi_open=True)
        if self.rare_code_fraction + self.unmapped_code_fraction >= 1.0:
            raise ConfigError("$.rare_code_fraction: rare and unmapped fractions must sum below 1")
        as_number(self.outlier_rate, "$.outlier_rate", 0.0, 1.0, hi_open=True)
        as_number(self.echo_rate, "$.echo_rate", 0.0, None)
        if len(self.date_range) != 2:
            raise ConfigError("$.date_range: expected [start, end]")
        try:
            start, end = (np.datetime64(d, "D") for d in self.date_range)
        except ValueError:
            raise ConfigError(f"$.date_range: invalid date in {list(self.date_range)!r}") from None
        if end < start:
            raise ConfigError("$.date_range: end precedes start")
        for category, rate in self.event_rates.items():
            if category not in CATEGORIES:
                raise ConfigError(f"$.event_rates.{category}: unknown category")
            as_number(rate, f"$.event_rates.{category}", 0.0, None)
        for i, effect in enumerate(self.effects):
            if not isinstance(effect, PlantedEffect):
                raise ConfigError(f"$.effects[{i}]: expected a planted effect")

    @property
    def day_range(self) -> Tuple[int, int]:
        start, end = (np.datetime64(d, "D").astype(np.int64) for d in self.date_range)
        return int(start), int(end)

    @property
    def years(self) -> float:
        start, end = self.day_range
        return (end - start + 1) / 365.25

    def rate(self, category: str) -> float:
        return float(self.event_rates.get(category, 0.0))

    @classmethod
    def from_dict(cls, data: dict, path: str = "$") -> "CohortConfig":
        """
        Build a config from JSON, filling gaps from the package defaults.

        Raises
        ------
        ConfigError
            Unknown keys or out-of-range values; the message starts with the JSON path.
        """
        allowed = [f for f in cls.__dataclass_fields__] + ["schema_version"]
        check_keys(data, allowed, path)
        check_schema_version(data, path)
        merged = {k: v for k, v in Config().get_synth_defaults().items() if k in cls.__dataclass_fields__}
        merged.update({k: v for k, v in data.items() if k != "schema_version"})
        merged["effects"] = tuple(PlantedEffect.from_dict(e, f"{path}.effects[{i}]")
                                  for i, e in enumerate(merged.get("effects", [])))
        merged["date_range"] = tuple(merged.get("date_range", cls.date_range))
        merged["event_rates"] = dict(merged.get("event_rates", {}))
        try:
            return cls(**merged)
        except ConfigError as e:
            raise _rebased(e, path) from None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["schema_version"] = 1
        data["date_range"] = list(self.date_range)
        data["effects"] = [e.to_dict() for e in self.effects]
        return data


class _PatientSimulator:
    """Event generator for one patient; all draws come from that patient's own stream."""

    def __init__(self, index: int, config: CohortConfig):
        self.config = config
        self.rng = np.random.default_rng([config.seed, index])
        self.patient_id = f"P{index:06d}"
        self.start, self.end = config.day_range
        self.events: Dict[str, List[tuple]] = {c: [] for c in CATEGORIES}

    def _latents(self) -> Dict[str, float]:
        rng = self.rng
        latents = {"DEMO_GENDER": float(rng.random() < 0.5)}
        latents["DEMO_AGE"] = float(np.round(np.clip(rng.normal(vocab.AGE["mean"], vocab.AGE["sd"]),
                                                     vocab.AGE["min"], vocab.AGE["max"])))
        for prefix, items in (("VL", vocab.VITALS), ("LB", vocab.LABS)):
            for item in items:
                value = rng.normal(item["mean"], item["sd"])
                latents[f"{prefix}_{item['name']}"] = float(max(value, 0.05 * item["mean"]))
        for item in vocab.ORDERS:
            if item["binary"]:
                latents[f"OR_{item['name']}"] = float(rng.random() < item["prevalence"])
            else:
                latents[f"OR_{item['name']}"] = float(rng.normal(item["mean"], item["sd"]))
        for dx in vocab.DIAGNOSES:
            latents[f"DI_{dx['icd10'].replace('.', '')}"] = float(rng.random() < dx["prevalence"])
        for drug in vocab.DRUGS:
            latents[f"MD_{drug['atc']}"] = float(rng.random() < drug["prevalence"])
        return latents

    def _day(self, day: int) -> int:
        return int(min(max(day, self.start), self.end))

    def _measure(self, category: str, item: dict, baseline: float, day: int):
        rng = self.rng
        value = baseline
        if "sd" in item:
            value = baseline + rng.normal(0.0, WITHIN_PATIENT_SD * item["sd"])
            if category in ("VL", "LB") and rng.random() < self.config.outlier_rate:
                value += (1.0 if rng.random() < 0.5 else -1.0) * 6.0 * item["sd"]
            value = round(float(value), item["decimals"])
        self.events[category].append((self._day(day), item["name"], float(value)))

    def _code(self, category: str, code: str, day: int):
        rng = self.rng
        u = rng.random()
        kind = "drug" if category in ("MD", "MF", "MO") else "diagnosis"
        if u < self.config.unmapped_code_fraction:
            code = vocab.UNMAPPED_CODES[kind]
        elif u < self.config.unmapped_code_fraction + self.config.rare_code_fraction:
            pool = vocab.RARE_NDC if kind == "drug" else vocab.RARE_ICD9
            code = pool[int(rng.integers(len(pool)))]
        self.events[category].append((self._day(day), code, np.nan))

    def _offset(self, spread: int = WINDOW_SPREAD) -> int:
        return int(self.rng.integers(-spread, spread + 1))

    def _measured_items(self, latents):
        for prefix, items in (("VL", vocab.VITALS), ("LB", vocab.LABS), ("OR", vocab.ORDERS)):
            for item in items:
                yield prefix, item, latents[f"{prefix}_{item['name']}"]

    def simulate(self, effects) -> Tuple[Dict[str, List[tuple]], List[tuple], List[dict]]:
        config, rng = self.config, self.rng
        latents = self._latents()
        self.events["DEMO"].append((self.start, "GENDER", latents["DEMO_GENDER"]))
        self.events["DEMO"].append((self.start, "AGE", latents["DEMO_AGE"]))

        conditions = [dx for dx in vocab.DIAGNOSES if latents[f"DI_{dx['icd10'].replace('.', '')}"] == 1.0]
        drugs = [d for d in vocab.DRUGS if latents[f"MD_{d['atc']}"] == 1.0]

        n_echo = 1 + int(rng.poisson(config.echo_rate * config.years))
        echo_days = np.unique(rng.integers(self.start, self.end + 1, size=n_echo))
        echo_rows, truth_rows = [], []
        shift = sum(e.contribution(latents[e.latent]) for e in effects)
        for day in echo_days:
            day = int(day)
            ef = float(np.clip(config.base_ef + shift + rng.normal(0.0, config.noise_sd), EF_MIN, EF_MAX))
            echo_rows.append((day, ef))
            truth_rows.append({"date": day, "ef_percent": ef, **latents})
            for category, item, baseline in self._measured_items(latents):
                if rng.random() >= config.missing_rate:
                    self._measure(category, item, baseline, day + self._offset())
                if rng.random() < 0.3:
                    self._measure(category, item, baseline, day + self._offset(NEAR_MISS_SPREAD))
            for dx in conditions:
                if rng.random() < 0.9:
                    self._code("DI", dx["icd9"], day + self._offset())
                if rng.random() < 0.5:
                    self._code("PL", dx["icd9"], day + self._offset())
            for drug in drugs:
                for category, mean_count in (("MD", 1.5), ("MF", 1.0), ("MO", 0.5)):
                    for _ in range(int(rng.poisson(mean_count))):
                        self._code(category, drug["ndc"][int(rng.integers(2))], day + self._offset())

        measured = list(self._measured_items(latents))
        by_category = {c: [m for m in measured if m[0] == c] for c in ("VL", "LB", "OR")}
        for category in CATEGORIES:
            if category == "DEMO":
                continue
            for _ in range(int(rng.poisson(config.rate(category) * config.years))):
                day = int(rng.integers(self.start, self.end + 1))
                if category in by_category:
                    _, item, baseline = by_category[category][int(rng.integers(len(by_category[category])))]
                    self._measure(category, item, baseline, day)
                elif category in ("PL", "DI") and conditions:
                    self._code(category, conditions[int(rng.integers(len(conditions)))]["icd9"], day)
                elif category in ("MD", "MF", "MO") and drugs:
                    drug = drugs[int(rng.integers(len(drugs)))]
                    self._code(category, drug["ndc"][int(rng.integers(2))], day)
        return self.events, echo_rows, truth_rows


def _simulate_range(bounds, config: CohortConfig):
    lo, hi = bounds
    return [(f"P{i:06d}",) + _PatientSimulator(i, config).simulate(config.effects) for i in range(lo, hi)]


def _iso(days) -> np.ndarray:
    return np.datetime_as_string(np.asarray(days, dtype=np.int64).astype("datetime64[D]"), unit="D")


def _frame(rows: List[tuple], columns: List[str]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=columns)
    frame["date"] = _iso(frame["date"].to_numpy()) if len(frame) else frame["date"].astype(str)
    return frame


def generate_cohort(config: CohortConfig, threads: int = 1) -> EventStore:
    """
    Generate the raw event tables and echo reports of a synthetic cohort.

    Parameters
    ----------
    config : CohortConfig
        Generator settings and planted effects.
    threads : int
        Worker threads; the output does not depend on it.

    Returns
    -------
    EventStore
        Tables sorted by (patient_id, date, code), with the per-echo ground truth
        attached as ``truth``.
    """
    chunks = chunk_bounds(config.n_patients, max(1, threads) * 4)
    results = [p for part in parallel_map(lambda b: _simulate_range(b, config), chunks, threads) for p in part]

    rows = {c: [] for c in CATEGORIES}
    echo_rows, truth_rows = [], []
    for patient_id, events, echoes, truths in results:
        for c in CATEGORIES:
            rows[c].extend((patient_id,) + e for e in events[c])
        echo_rows.extend((patient_id,) + e for e in echoes)
        truth_rows.extend({"patient_id": patient_id, **t} for t in truths)

    tables = {}
    for c in CATEGORIES:
        frame = _frame(rows[c], TABLE_COLUMNS)
        tables[c] = frame.sort_values(["patient_id", "date", "code"], kind="mergesort")
    echo = _frame(echo_rows, ECHO_COLUMNS)
    truth_columns = ["patient_id", "date", "ef_percent"] + vocab.latent_feature_names()
    truth = _frame([tuple(t[k] for k in truth_columns) for t in truth_rows], truth_columns)

    store = EventStore(tables, echo, truth)
    counts = store.row_counts()
    run_log.add(f"generated cohort: {config.n_patients} patients, {counts['ECHO']} echo reports, "
                f"{sum(v for k, v in counts.items() if k != 'ECHO')} events (seed {config.seed})")
    return store
