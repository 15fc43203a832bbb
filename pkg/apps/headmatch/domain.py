from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Optional

KIND_TIME = 'time'
KIND_NUMERICAL = 'numerical'
KIND_STRING = 'string'
KIND_OTHER = 'other'
# Also the tie-break order of column_data_type.
VALUE_KINDS = (KIND_TIME, KIND_NUMERICAL, KIND_STRING, KIND_OTHER)


@dataclass(frozen=True)
class TypedValue:
    raw: str
    kinds: FrozenSet[str]
    year: Optional[int] = None
    number: Optional[float] = None

    def __post_init__(self):
        if not self.kinds:
            raise ValueError("a typed value needs at least one kind")
        if KIND_TIME in self.kinds and self.year is None:
            raise ValueError(f"time value {self.raw!r} has no year")
        if KIND_NUMERICAL in self.kinds and self.number is None:
            raise ValueError(f"numerical value {self.raw!r} has no number")

    def has(self, kind: str) -> bool:
        return kind in self.kinds


class HeadingFeatureVector(NamedTuple):
    is_core_column: float
    heading_length: float
    property_length: float
    edit: float
    letter: float
    jaccard: float
    substring: float
    pvs_max: float
    pvs_sum: float
    pvs_avg: float


HEADING_FEATURE_SCHEMA = HeadingFeatureVector._fields


class ColumnMatch(NamedTuple):
    table_id: str
    column_index: int
    heading: str
    property_id: str
    confidence: float


@dataclass
class HeadingMatch:
    table_id: str
    matches: Dict[int, ColumnMatch] = field(default_factory=dict)

    def property_for(self, column_index: int) -> Optional[str]:
        match = self.matches.get(column_index)
        return match.property_id if match else None

    def duplicate_properties(self) -> Dict[str, List[int]]:
        """Properties chosen by more than one column, with those columns."""
        columns: Dict[str, List[int]] = {}
        for column_index in sorted(self.matches):
            columns.setdefault(self.matches[column_index].property_id, []).append(column_index)
        return {p: cols for p, cols in columns.items() if len(cols) > 1}
