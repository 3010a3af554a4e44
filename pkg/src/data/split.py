"""
Deterministic train/validation/test splitting of a case matrix.
"""

import math
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from src.data.case_matrix import CaseMatrix
from src.utils.config import Config, as_number, check_keys
from src.utils.errors import ConfigError, ContractError
from src.utils.run_log import RunLog

run_log = RunLog()

_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SplitSpec:
    """
    Split fractions and seed.

    ``group_by_patient`` keeps every case of a patient in one split; sizes then
    only approximate the fractions.
    """
    train_fraction: float = 0.7
    valid_fraction: float = 0.2
    test_fraction: float = 0.1
    seed: int = 1
    group_by_patient: bool = False

    def __post_init__(self):
        for name in ("train_fraction", "valid_fraction", "test_fraction"):
            as_number(getattr(self, name), f"$.{name}", 0.0, 1.0, lo_open=True, hi_open=True)
        as_number(self.seed, "$.seed", 0, None, integer=True)
        total = self.train_fraction + self.valid_fraction + self.test_fraction
        if abs(total - 1.0) > _SUM_TOLERANCE:
            raise ConfigError(f"$: split fractions must sum to 1, got {total!r}")

    @classmethod
    def from_dict(cls, data: dict, path: str = "$") -> "SplitSpec":
        defaults = Config().get_etl_defaults().get('split', {})
        check_keys(data, ("train_fraction", "valid_fraction", "test_fraction", "seed", "group_by_patient"), path)
        merged = {**defaults, **data}
        try:
            return cls(**merged)
        except ConfigError as e:
            raise ConfigError(str(e).replace("$", path, 1)) from None

    def to_dict(self) -> dict:
        return asdict(self)


def _split_sizes(n: int, spec: SplitSpec) -> Tuple[int, int, int]:
    n_valid = int(math.floor(n * spec.valid_fraction + _SUM_TOLERANCE))
    n_test = int(math.floor(n * spec.test_fraction + _SUM_TOLERANCE))
    return n - n_valid - n_test, n_valid, n_test


def split_dataset(m: CaseMatrix, spec: SplitSpec) -> Tuple[CaseMatrix, CaseMatrix, CaseMatrix]:
    """
    Partition the cases into train, validation and test matrices.

    Validation and test receive ``floor(n * f)`` cases; the remainder goes to
    train. The permutation comes from ``numpy.random.default_rng(seed)`` and each
    split keeps the input row order, so the same seed gives the same partition on
    every platform.

    Parameters
    ----------
    m : CaseMatrix
        Cases to split, at least 3.
    spec : SplitSpec
        Fractions and seed.

    Returns
    -------
    tuple of CaseMatrix
        ``(train, valid, test)``.
    """
    n = m.n_cases
    if n < 3:
        raise ContractError(f"split_dataset needs at least 3 cases, got {n}")
    rng = np.random.default_rng(spec.seed)
    n_train, n_valid, n_test = _split_sizes(n, spec)

    if spec.group_by_patient:
        patients = sorted(set(m.patient_ids))
        order = rng.permutation(len(patients))
        rows_of = {}
        for i, p in enumerate(m.patient_ids):
            rows_of.setdefault(p, []).append(i)
        valid_rows, test_rows, train_rows = [], [], []
        for k in order:
            rows = rows_of[patients[k]]
            if len(valid_rows) < n_valid:
                valid_rows.extend(rows)
            elif len(test_rows) < n_test:
                test_rows.extend(rows)
            else:
                train_rows.extend(rows)
        parts = (sorted(train_rows), sorted(valid_rows), sorted(test_rows))
    else:
        perm = rng.permutation(n)
        parts = (np.sort(perm[n_valid + n_test:]), np.sort(perm[:n_valid]), np.sort(perm[n_valid:n_valid + n_test]))

    train, valid, test = (m.subset(rows) for rows in parts)
    run_log.add(f"split {n} cases into train={train.n_cases} valid={valid.n_cases} test={test.n_cases}"
                f" (seed {spec.seed}{', grouped by patient' if spec.group_by_patient else ''})")
    return train, valid, test
