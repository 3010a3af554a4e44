"""
Heart-failure severity bands derived from the ejection fraction.
"""

import math
from enum import Enum
from typing import Tuple

from src.utils.errors import DomainError


class SeverityBand(Enum):
    """
    EF bands, each a half-open interval ``[lo, hi)``; Normal also includes 100.

    Boundary values belong to the higher-EF band: 50 is Normal, 40 Slight, 35 Mild.
    """
    SEVERE = ("Severe", 0.0, 35.0)
    MILD = ("Mild", 35.0, 40.0)
    SLIGHT = ("Slight", 40.0, 50.0)
    NORMAL = ("Normal", 50.0, 100.0)

    def __init__(self, label: str, lo: float, hi: float):
        self.label = label
        self.lo = lo
        self.hi = hi

    @property
    def ef_range(self) -> Tuple[float, float]:
        return (self.lo, self.hi)

    def contains(self, ef: float) -> bool:
        if self is SeverityBand.NORMAL:
            return self.lo <= ef <= self.hi
        return self.lo <= ef < self.hi

    def __str__(self) -> str:
        return self.label


def band_of(ef: float) -> SeverityBand:
    """
    Severity band of an ejection fraction.

    Parameters
    ----------
    ef : float
        Ejection fraction in percent, 0 <= ef <= 100.

    Returns
    -------
    SeverityBand

    Raises
    ------
    DomainError
        If ``ef`` is not a finite value in [0, 100].
    """
    if not isinstance(ef, (int, float)) or math.isnan(ef) or ef < 0.0 or ef > 100.0:
        raise DomainError(f"ejection fraction must be in [0, 100], got {ef!r}")
    if ef < 35.0:
        return SeverityBand.SEVERE
    if ef < 40.0:
        return SeverityBand.MILD
    if ef < 50.0:
        return SeverityBand.SLIGHT
    return SeverityBand.NORMAL
