"""
Feature catalog: the ordered list of model inputs with their category and kind.
"""

import json
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

from src.utils.errors import ContractError
from src.utils.general_func import sha256_text

# Order used when a catalog is assembled from raw tables.
CATEGORIES = ("DEMO", "VL", "LB", "OR", "MD", "MF", "MO", "PL", "DI")
CODE_CATEGORIES = ("MD", "MF", "MO", "PL", "DI")
DRUG_CATEGORIES = ("MD", "MF", "MO")
DIAGNOSIS_CATEGORIES = ("PL", "DI")
KINDS = ("numeric", "binary", "count")


class FeatureEntry(NamedTuple):
    feature_id: int
    name: str
    category: str
    kind: str


def feature_name(category: str, code: str) -> str:
    """Catalog name of a code or measurement: ``<CATEGORY>_<code without dots>``."""
    return f"{category}_{code.replace('.', '')}"


def category_of(name: str) -> str:
    """Category prefix of a feature name."""
    return name.split("_", 1)[0]


class FeatureCatalog:
    """
    Dense, ordered feature catalog.

    Attributes
    ----------
    entries : tuple of FeatureEntry
        One entry per feature; ``entries[i].feature_id == i``.
    """

    def __init__(self, entries: Iterable[FeatureEntry]):
        entries = tuple(FeatureEntry(*e) for e in entries)
        seen = set()
        for position, entry in enumerate(entries):
            if entry.feature_id != position:
                raise ContractError(f"feature ids must be dense 0..M-1; entry {position} has id {entry.feature_id}")
            if entry.category not in CATEGORIES:
                raise ContractError(f"feature {entry.name!r}: unknown category {entry.category!r}")
            if entry.kind not in KINDS:
                raise ContractError(f"feature {entry.name!r}: unknown kind {entry.kind!r}")
            prefix, _, rest = entry.name.partition("_")
            if prefix != entry.category or not rest:
                raise ContractError(f"feature {entry.name!r}: name must start with '{entry.category}_'")
            if any(rest.startswith(c + "_") for c in CATEGORIES):
                raise ContractError(f"feature {entry.name!r}: carries more than one category prefix")
            if entry.name in seen:
                raise ContractError(f"duplicate feature name {entry.name!r}")
            seen.add(entry.name)
        self.entries = entries
        self._index: Dict[str, int] = {e.name: e.feature_id for e in entries}

    @classmethod
    def from_names(cls, specs: Sequence[Tuple[str, str]]) -> "FeatureCatalog":
        """Build a catalog from ``(name, kind)`` pairs in the given order."""
        return cls(FeatureEntry(i, name, category_of(name), kind) for i, (name, kind) in enumerate(specs))

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureCatalog) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"FeatureCatalog({len(self)} features)"

    @property
    def names(self) -> List[str]:
        return [e.name for e in self.entries]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ContractError(f"feature {name!r} is not in the catalog") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def ids_of_kind(self, kind: str) -> List[int]:
        return [e.feature_id for e in self.entries if e.kind == kind]

    def to_dict(self) -> dict:
        return {
            'schema_version': 1,
            'features': [e._asdict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureCatalog":
        return cls(FeatureEntry(f['feature_id'], f['name'], f['category'], f['kind']) for f in data.get('features', []))

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form; models and SHAP matrices record it."""
        return sha256_text(json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")))
