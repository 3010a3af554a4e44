"""Code mapping, cleaning rules, case construction and the ETL driver."""

import math
import os

import numpy as np
import pandas as pd
import pytest

from src.data.catalog import feature_name
from src.etl.cases import EtlConfig, build_cases, build_catalog, select_echoes
from src.etl.code_maps import CodeMaps, normalize_codes
from src.etl.pipeline import BOUNDS_FILE, SPLITS, UNMAPPED_FILE, run_etl
from src.etl.rules import Winsorizer, code_counts, filter_rare_codes, nearest_rank, winsorize
from src.synth import vocabulary as vocab
from src.synth.cohort import CohortConfig, generate_cohort
from src.synth.raw_tables import EventStore
from src.utils.errors import ArtifactError, ConfigError, DomainError
from src.utils.general_func import read_json

FIXTURE_MAPS = os.path.join(os.path.dirname(__file__), "fixtures", "maps")
ECHO_DAY = np.datetime64("2015-03-01")


def day(offset: int) -> str:
    return str(ECHO_DAY + np.timedelta64(offset, "D"))


def events(rows):
    return pd.DataFrame(rows, columns=["patient_id", "date", "code", "value"])


def echo(rows):
    return pd.DataFrame(rows, columns=["patient_id", "date", "ef_percent"])


def test_code_maps_load_fixture_tables():
    maps = CodeMaps.load(FIXTURE_MAPS)
    assert maps.ndc_to_atc["00378-0208-01"] == "C03CA"
    assert maps.icd9_to_icd10["414.8"] == "I25.5"
    assert maps.lookup_for("MF") is maps.ndc_to_atc
    assert maps.lookup_for("PL") is maps.icd9_to_icd10


def test_code_maps_save_and_reload(tmp_path):
    CodeMaps.load(FIXTURE_MAPS).save(str(tmp_path))
    again = CodeMaps.load(str(tmp_path))
    assert again.ndc_to_atc == CodeMaps.load(FIXTURE_MAPS).ndc_to_atc


def test_code_maps_reject_conflicting_rows():
    ndc = pd.DataFrame([("1", "A01"), ("1", "B02")], columns=["ndc", "atc"])
    icd = pd.DataFrame([], columns=["icd9", "icd10"])
    with pytest.raises(ConfigError, match="maps to both"):
        CodeMaps.from_frames(ndc, icd)


def test_code_maps_reject_bad_header(tmp_path):
    (tmp_path / "ndc_to_atc.tsv").write_text("code\tatc\n1\tA\n", encoding="utf-8")
    (tmp_path / "icd9_to_icd10.tsv").write_text("icd9\ticd10\n", encoding="utf-8")
    with pytest.raises(ArtifactError):
        CodeMaps.load(str(tmp_path))


def test_normalize_codes_maps_and_reports():
    store = EventStore({
        "MD": events([("P1", day(0), "00054-4297-25", np.nan), ("P1", day(1), "00378-0208-01", np.nan),
                      ("P1", day(2), "12345-0000-00", np.nan)]),
        "DI": events([("P1", day(0), "428.0", np.nan), ("P1", day(3), "999.9", np.nan),
                      ("P1", day(4), "999.9", np.nan)]),
        "VL": events([("P1", day(0), "PULSE", 70.0)]),
    })
    normalized, report = normalize_codes(store, CodeMaps.load(FIXTURE_MAPS))
    assert list(normalized.table("MD")["code"]) == ["C03CA", "C03CA"]
    assert list(normalized.table("DI")["code"]) == ["I50.9"]
    assert normalized.table("VL").equals(store.table("VL"))
    assert report.unmapped == {"MD": {"12345-0000-00": 1}, "DI": {"999.9": 2}}
    assert report.to_dict()["total_events_dropped"] == 3


def test_filter_rare_codes_is_strict():
    store = EventStore({
        "DI": events([("P1", day(i), "I10", np.nan) for i in range(3)]
                     + [("P1", day(i), "I50.9", np.nan) for i in range(2)]),
        "VL": events([("P1", day(0), "PULSE", 70.0)]),
    })
    filtered = filter_rare_codes(store, 2)
    assert set(filtered.table("DI")["code"]) == {"I10"}
    assert filtered.table("VL").equals(store.table("VL"))
    assert code_counts(store)[("DI", "I50.9")] == 2
    assert len(filter_rare_codes(store, 0).table("DI")) == 5
    with pytest.raises(ConfigError):
        filter_rare_codes(store, -1)


def test_nearest_rank_percentiles():
    ordered = np.arange(1.0, 11.0)
    assert nearest_rank(ordered, 10) == 1.0
    assert nearest_rank(ordered, 90) == 9.0
    assert nearest_rank(ordered, 0.1) == 1.0
    assert nearest_rank(ordered, 99.99) == 10.0


def test_winsorize_clamps_to_nearest_rank_bounds():
    out = winsorize(np.arange(1.0, 101.0), 1, 99)
    assert out.min() == 1.0 and out.max() == 99.0
    values = [10.0, 1.0, 5.0, 3.0, 2.0, 9.0, 4.0, 8.0, 7.0, 6.0]
    clipped = winsorize(values, 10, 90)
    assert list(clipped) == [9.0, 1.0, 5.0, 3.0, 2.0, 9.0, 4.0, 8.0, 7.0, 6.0]


@pytest.mark.parametrize("values", [[], [1.0, np.nan], [np.inf]])
def test_winsorize_rejects_empty_and_non_finite(values):
    with pytest.raises(DomainError):
        winsorize(values, 1, 99)


@pytest.mark.parametrize("lo, hi", [(0, 99), (50, 50), (60, 40), (1, 100)])
def test_winsorize_rejects_bad_percentiles(lo, hi):
    with pytest.raises(ConfigError):
        winsorize([1.0, 2.0], lo, hi)


def test_winsorizer_learns_on_train_and_keeps_missing():
    train = np.column_stack([np.arange(1.0, 101.0), np.full(100, np.nan)])
    winsorizer = Winsorizer(5, 95).fit(train)
    assert winsorizer.bounds_ == {0: (5.0, 95.0)}
    test = np.array([[0.0, 1.0], [200.0, np.nan], [np.nan, 3.0]])
    out = winsorizer.transform(test)
    assert out[0, 0] == 5.0 and out[1, 0] == 95.0
    assert np.isnan(out[2, 0]) and np.isnan(out[1, 1])
    assert out[0, 1] == 1.0
    names = ["LB_A", "LB_B"]
    restored = Winsorizer.from_dict(winsorizer.to_dict(names), names)
    assert np.array_equal(restored.transform(test), out, equal_nan=True)


@pytest.mark.parametrize("days, gap, expected", [
    ([0, 200], 180, [0, 1]),
    ([0, 100], 180, [0]),
    ([0, 180], 180, [0]),
    ([0, 100, 200], 180, [0, 2]),
    ([0, 181, 250, 362], 180, [0, 1, 3]),
])
def test_select_echoes_greedy_gap(days, gap, expected):
    assert select_echoes(days, gap) == expected


def _window_store(vital_offsets, echo_offsets=(0,)):
    return EventStore(
        {
            "DEMO": events([("P1", day(-900), "GENDER", 1.0)]),
            "VL": events([("P1", day(o), "SYSTOLIC_BP", 100.0 + o) for o in vital_offsets]),
            "DI": events([("P1", day(-10), "I50.9", np.nan), ("P1", day(5), "I50.9", np.nan)]),
            "MD": events([("P1", day(-60), "C03CA", np.nan)]),
        },
        echo([("P1", day(o), 40.0 + i) for i, o in enumerate(echo_offsets)]),
    )


def test_build_cases_uses_the_window():
    store = _window_store([-44, 46])
    config = EtlConfig()
    catalog = build_catalog(store, config)
    cases = build_cases(store, config, catalog)
    assert cases.n_cases == 1
    assert cases.column("VL_SYSTOLIC_BP")[0] == 56.0
    assert cases.column("DEMO_GENDER")[0] == 1.0
    assert cases.column(feature_name("DI", "I50.9"))[0] == 1.0
    assert cases.column("MD_C03CA")[0] == 0.0
    assert cases.case_ids == (("P1", day(0)),)


def test_build_cases_marks_numeric_without_event_missing():
    store = _window_store([46])
    config = EtlConfig()
    cases = build_cases(store, config, build_catalog(store, config))
    assert np.isnan(cases.column("VL_SYSTOLIC_BP")[0])
    assert not cases.missing[0, cases.catalog.index_of("MD_C03CA")]


def test_build_cases_nearest_tie_takes_earlier_event():
    store = _window_store([-3, 3])
    config = EtlConfig()
    cases = build_cases(store, config, build_catalog(store, config))
    assert cases.column("VL_SYSTOLIC_BP")[0] == 97.0


@pytest.mark.parametrize("echo_offsets, n_cases", [((0, 200), 2), ((0, 100), 1)])
def test_build_cases_independence_rule(echo_offsets, n_cases):
    store = _window_store([0], echo_offsets)
    config = EtlConfig()
    cases = build_cases(store, config, build_catalog(store, config))
    assert cases.n_cases == n_cases
    assert cases.labels[0] == 40.0


def test_build_cases_aggregation_rules():
    store = _window_store([-10, 20])
    config = EtlConfig.from_dict({"aggregation": {"VL": "mean", "DI": "count"}})
    cases = build_cases(store, config, build_catalog(store, config))
    assert cases.column("VL_SYSTOLIC_BP")[0] == pytest.approx(105.0)
    assert cases.column("DI_I509")[0] == 2.0
    assert cases.catalog.entries[cases.catalog.index_of("DI_I509")].kind == "count"
    latest = EtlConfig.from_dict({"aggregation": {"VL": "latest"}})
    assert build_cases(store, latest, build_catalog(store, latest)).column("VL_SYSTOLIC_BP")[0] == 120.0


def test_build_cases_same_for_any_thread_count():
    store = generate_cohort(CohortConfig.from_dict({"n_patients": 40, "seed": 9}))
    normalized, _ = normalize_codes(store, CodeMaps.synthetic())
    config = EtlConfig()
    catalog = build_catalog(normalized, config)
    assert build_cases(normalized, config, catalog, threads=1) == build_cases(normalized, config, catalog, threads=3)


@pytest.mark.parametrize("data, path", [
    ({"window_days": 0}, r"^\$\.window_days"),
    ({"winsor_lo": 99, "winsor_hi": 1}, r"^\$\.winsor_lo"),
    ({"aggregation": {"DI": "mean"}}, r"^\$\.aggregation\.DI"),
    ({"split": {"train_fraction": 0.9}}, r"^\$\.split"),
    ({"independence_days": 10}, r"^\$\.independence_days"),
])
def test_etl_config_errors_name_the_path(data, path):
    with pytest.raises(ConfigError, match=path):
        EtlConfig.from_dict(data)


def test_run_etl_on_synthetic_cohort(tmp_path):
    store = generate_cohort(CohortConfig.from_dict({"n_patients": 120, "seed": 4}))
    config = EtlConfig.from_dict({})
    result = run_etl(store, CodeMaps.synthetic(), config)
    catalog = result.splits["train"].catalog
    assert all(part.catalog == catalog for part in result.splits.values())
    assert result.unmapped.total > 0
    assert not any(name.endswith("00000000000") or name.endswith("7999X") for name in catalog.names)
    assert not any(name.startswith("DI_Z") for name in catalog.names)
    for j, (low, high) in result.winsorizer.bounds_.items():
        assert catalog.entries[j].kind == "numeric"
        for part in result.splits.values():
            column = part.as_nan()[:, j]
            observed = column[~np.isnan(column)]
            assert np.all((observed >= low) & (observed <= high))

    written = result.save(str(tmp_path))
    assert set(written) >= {BOUNDS_FILE, UNMAPPED_FILE} | {f"{s}/cases.csv" for s in SPLITS}
    bounds = read_json(str(tmp_path / BOUNDS_FILE))
    assert set(bounds["bounds"]) <= set(catalog.names)
    assert read_json(str(tmp_path / "test" / "manifest.json"))["provenance"]["split"] == "test"


def test_synthetic_maps_cover_vocabulary():
    maps = CodeMaps.synthetic()
    assert all(ndc in maps.ndc_to_atc for drug in vocab.DRUGS for ndc in drug["ndc"])
    assert vocab.UNMAPPED_CODES["drug"] not in maps.ndc_to_atc
    assert vocab.UNMAPPED_CODES["diagnosis"] not in maps.icd9_to_icd10


@pytest.mark.parametrize("seed", range(30))
def test_winsorize_matches_sorted_oracle_and_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    values = np.round(rng.normal(50.0, 20.0, n), int(rng.integers(0, 3)))
    lo = float(rng.uniform(0.5, 40.0))
    hi = float(rng.uniform(lo + 1.0, 99.5))
    ordered = sorted(values)
    low = ordered[min(max(math.ceil(lo * n / 100.0), 1), n) - 1]
    high = ordered[min(max(math.ceil(hi * n / 100.0), 1), n) - 1]
    once = winsorize(values, lo, hi)
    assert list(once) == [min(max(v, low), high) for v in values]
    assert np.array_equal(winsorize(once, lo, hi), once)


@pytest.mark.parametrize("seed", range(10))
def test_filter_rare_codes_matches_counting(seed):
    rng = np.random.default_rng(seed)
    codes = [f"C{k}" for k in range(8)]
    tables = {}
    for category in ("DI", "MD", "PL"):
        n = int(rng.integers(0, 80))
        picks = rng.choice(codes, size=n, p=np.linspace(1.0, 8.0, 8) / 36.0)
        tables[category] = events([(f"P{int(rng.integers(5))}", day(int(rng.integers(-400, 400))), str(code),
                                    np.nan) for code in picks])
    store = EventStore(tables)
    min_count = int(rng.integers(0, 12))
    filtered = filter_rare_codes(store, min_count)
    before, after = code_counts(store), code_counts(filtered)
    key = ["patient_id", "date", "code"]
    for category in tables:
        table = store.table(category)
        counts = {}
        for code in table["code"]:
            counts[code] = counts.get(code, 0) + 1
        expected = [row for row in table[key].itertuples(index=False) if counts[row.code] > min_count]
        assert list(filtered.table(category)[key].itertuples(index=False)) == expected
        assert all(n > min_count for (c, _), n in after.items() if c == category)
    assert all(n <= before[code] for code, n in after.items())


@pytest.mark.parametrize("seed", range(10))
def test_build_cases_count_matches_greedy_scan(seed):
    rng = np.random.default_rng(seed)
    gap = int(rng.integers(45, 400))
    echo_rows, vitals, expected = [], [], 0
    for p in range(int(rng.integers(1, 12))):
        pid = f"P{p:06d}"
        offsets = rng.choice(np.arange(-1500, 1500), size=int(rng.integers(1, 9)), replace=False)
        echo_rows += [(pid, day(int(o)), float(rng.uniform(10, 80))) for o in offsets]
        vitals.append((pid, day(int(offsets[0])), "PULSE", 70.0))
        last = None
        for o in sorted(offsets):
            if last is None or o - last > gap:
                expected += 1
                last = o
    store = EventStore({"VL": events(vitals)}, echo(echo_rows))
    config = EtlConfig.from_dict({"independence_days": gap})
    cases = build_cases(store, config, build_catalog(store, config))
    assert cases.n_cases == expected

    dates = {}
    for pid, date in cases.case_ids:
        dates.setdefault(pid, []).append(np.datetime64(date))
    for kept in dates.values():
        assert kept == sorted(kept)
        for a, b in zip(kept, kept[1:]):
            assert (b - a) / np.timedelta64(1, "D") > gap
