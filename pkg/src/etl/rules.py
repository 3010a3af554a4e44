"""
Cleaning rules applied to the raw events and the case matrix.

Functions
---------
code_counts(store)
    Occurrence count of every (category, code) in the code-bearing tables.
filter_rare_codes(store, min_count)
    Drop codes occurring at most ``min_count`` times.
nearest_rank(sorted_values, percentile)
    Nearest-rank percentile of a sorted array.
winsorize(values, lo, hi)
    Clamp values to their nearest-rank percentiles.

Classes
-------
Winsorizer
    Column-wise winsorization bounds learnt on one matrix and applied to others.
"""

import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from src.data.catalog import CODE_CATEGORIES
from src.synth.raw_tables import EventStore
from src.utils.errors import ConfigError, DomainError
from src.utils.run_log import RunLog

run_log = RunLog()


def code_counts(store: EventStore) -> Dict[Tuple[str, str], int]:
    counts = {}
    for category in CODE_CATEGORIES:
        for code, n in store.table(category)["code"].value_counts().items():
            counts[(category, str(code))] = int(n)
    return counts


def filter_rare_codes(store: EventStore, min_count: int) -> EventStore:
    """
    Remove rarely used codes from the MF, MO, MD, PL and DI tables.

    A code survives only if it occurs strictly more than ``min_count`` times in
    its own table. DEMO, VL, LB and OR are returned untouched.
    """
    if min_count < 0:
        raise ConfigError(f"$.min_code_count: must be >= 0, got {min_count}")
    tables = {}
    for category in CODE_CATEGORIES:
        table = store.table(category)
        frequency = table.groupby("code")["code"].transform("size")
        kept = table.loc[frequency > min_count] if len(table) else table
        dropped = len(table) - len(kept)
        if dropped:
            run_log.add(f"rare-code filter: {category} dropped {dropped} events "
                        f"({table['code'].nunique() - kept['code'].nunique()} codes)")
        tables[category] = kept
    return store.replace(tables)


def nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    """Value at rank ``ceil(p/100 * n)`` (clamped to ``1..n``) of an ascending array."""
    n = len(sorted_values)
    rank = math.ceil(percentile * n / 100.0 - 1e-9)
    return float(sorted_values[min(max(rank, 1), n) - 1])


def _check_percentiles(lo: float, hi: float):
    if not (0.0 < lo < hi < 100.0):
        raise ConfigError(f"$.winsor_lo: percentiles must satisfy 0 < lo < hi < 100, got ({lo}, {hi})")


def winsorize(values: Sequence[float], lo: float, hi: float) -> np.ndarray:
    """
    Clamp values to their ``lo`` and ``hi`` nearest-rank percentiles.

    Parameters
    ----------
    values : sequence of float
        Non-empty, finite.
    lo, hi : float
        Percentiles with ``0 < lo < hi < 100``.

    Returns
    -------
    numpy.ndarray
        Same length and order as the input.

    Raises
    ------
    DomainError
        If ``values`` is empty or holds a non-finite number.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DomainError("winsorize needs at least one value")
    if not np.all(np.isfinite(values)):
        raise DomainError("winsorize accepts finite values only")
    _check_percentiles(lo, hi)
    ordered = np.sort(values)
    return np.clip(values, nearest_rank(ordered, lo), nearest_rank(ordered, hi))


class Winsorizer(BaseEstimator, TransformerMixin):
    """
    Per-column (MIN, MAX) bounds learnt with nearest-rank percentiles.

    NaN cells are treated as MISSING: ignored by ``fit`` and left untouched by
    ``transform``. Columns with no observed value get no bounds.

    Parameters
    ----------
    lo, hi : float
        Percentiles, ``0 < lo < hi < 100``.
    columns : sequence of int, optional
        Column indices to winsorize; all columns when omitted.
    """

    def __init__(self, lo: float = 1.0, hi: float = 99.0, columns: Optional[Sequence[int]] = None):
        self.lo = lo
        self.hi = hi
        self.columns = columns

    def fit(self, X, y=None):
        _check_percentiles(self.lo, self.hi)
        X = np.asarray(X, dtype=np.float64)
        columns = range(X.shape[1]) if self.columns is None else self.columns
        self.bounds_ = {}
        for j in columns:
            observed = X[:, j][~np.isnan(X[:, j])]
            if observed.size:
                ordered = np.sort(observed)
                self.bounds_[int(j)] = (nearest_rank(ordered, self.lo), nearest_rank(ordered, self.hi))
        return self

    def transform(self, X):
        X = np.array(X, dtype=np.float64)
        for j, (low, high) in self.bounds_.items():
            column = X[:, j]
            observed = ~np.isnan(column)
            column[observed] = np.clip(column[observed], low, high)
        return X

    def to_dict(self, names: Sequence[str]) -> dict:
        """Bounds keyed by feature name, as persisted in ``bounds.json``."""
        return {
            'schema_version': 1,
            'winsor_lo': self.lo,
            'winsor_hi': self.hi,
            'bounds': {names[j]: {'min': low, 'max': high} for j, (low, high) in sorted(self.bounds_.items())},
        }

    @classmethod
    def from_dict(cls, data: dict, names: Sequence[str]) -> "Winsorizer":
        index = {name: j for j, name in enumerate(names)}
        bounds = {index[name]: (b['min'], b['max']) for name, b in data.get('bounds', {}).items()}
        winsorizer = cls(data['winsor_lo'], data['winsor_hi'], sorted(bounds))
        winsorizer.bounds_ = bounds
        return winsorizer
