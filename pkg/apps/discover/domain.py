"""
Discovery value types: per-mention dossiers aggregated over origin tables,
the named feature families, and verdicts.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Tuple

from apps.corpus.domain import MentionKey

IN_KB = 'in_kb'
OUT_OF_KB = 'out_of_kb'
NOT_ENTITY = 'not_entity'
VERDICTS = (IN_KB, OUT_OF_KB, NOT_ENTITY)

MODE_BINARY = 'binary'
MODE_THREE_WAY = 'three_way'
DISCOVERY_MODES = (MODE_BINARY, MODE_THREE_WAY)

AGGREGATES = ('sum', 'max', 'min', 'avg', 'std')

FEATURE_FAMILIES: Dict[str, Tuple[str, ...]] = {
    'origin': (
        'n_tables', 'identical_core_groups', 'appears_as_header',
        *(f'linked_{a}' for a in AGGREGATES),
        *(f'link_rate_{a}' for a in AGGREGATES),
        *(f'matched_headings_{a}' for a in AGGREGATES),
    ),
    'saliency': ('med_max', 'med_sum', 'med_avg', 'med_min', 'wd'),
    'semantic': ('neural', 'topical', 'lexical'),
    'temporal': ('slope', 'r_squared', 'usage_since_year', 'frequency'),
    'slope': ('slope',),
    'r_squared': ('r_squared',),
}

FEATURE_PRESETS: Dict[str, Tuple[str, ...]] = {
    'oss': ('origin', 'saliency', 'semantic'),
    'lin': ('temporal',),
    'all': ('origin', 'saliency', 'semantic', 'temporal'),
}

ALL_DISCOVERY_FEATURES: Tuple[str, ...] = tuple(
    name for family in FEATURE_PRESETS['all'] for name in FEATURE_FAMILIES[family]
)


@dataclass(frozen=True)
class OriginTable:
    """What a dossier keeps about one linkable table that contains the mention unlinked."""

    table_id: str
    core_key: str
    n_linked: int
    link_rate: float
    matched_headings: int
    year: Optional[int]
    occurrences: int


@dataclass
class MentionDossier:
    key: MentionKey
    raw_forms: Counter = field(default_factory=Counter)
    tables: Dict[str, OriginTable] = field(default_factory=dict)
    appears_as_header: bool = False

    @property
    def origin_table_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self.tables))

    @property
    def n_tables(self) -> int:
        return len(self.tables)

    @property
    def identical_core_groups(self) -> int:
        return len({t.core_key for t in self.tables.values()})

    @property
    def usage_years(self) -> Dict[int, int]:
        years: Counter = Counter()
        for table in self.tables.values():
            if table.year is not None:
                years[table.year] += table.occurrences
        return dict(sorted(years.items()))

    @property
    def canonical_form(self) -> str:
        """Most frequent raw spelling; ties resolve to the smallest string."""
        if not self.raw_forms:
            return self.key
        return min(self.raw_forms.items(), key=lambda item: (-item[1], item[0]))[0]

    def merge(self, other: "MentionDossier") -> "MentionDossier":
        if other.key != self.key:
            raise ValueError(f"Cannot merge dossiers of {self.key!r} and {other.key!r}")
        return MentionDossier(
            key=self.key,
            raw_forms=self.raw_forms + other.raw_forms,
            tables={**self.tables, **other.tables},
            appears_as_header=self.appears_as_header or other.appears_as_header,
        )


class Verdict(NamedTuple):
    label: str
    score: float


class Discovery(NamedTuple):
    mention_key: str
    verdict: str
    score: float
    n_tables: int
    example_table_id: str
