"""
Value types for the relational-table corpus.

TableContext: page title, caption, surrounding text and last-edit year.
Table       : headings, a core column index and the body rows (header excluded).
CoreMention : one non-empty core-column cell: row index, normalized key, raw text.
"""

import unicodedata
from dataclasses import dataclass, field
from typing import NamedTuple, NewType, Optional, Tuple

MentionKey = NewType("MentionKey", str)

MIN_YEAR = 1990
MAX_YEAR = 2100


def normalize_mention(text: str) -> MentionKey:
    """Unicode case fold, trim and internal whitespace collapse."""
    folded = unicodedata.normalize("NFKC", text or "")
    folded = unicodedata.normalize("NFKC", folded.casefold())
    return MentionKey(" ".join(folded.split()))


@dataclass(frozen=True)
class TableContext:
    page_title: str = ""
    caption: str = ""
    surrounding_text: str = ""
    last_edit_year: Optional[int] = None

    def __post_init__(self):
        year = self.last_edit_year
        if year is not None and not (MIN_YEAR <= year <= MAX_YEAR):
            raise ValueError(f"last_edit_year {year} outside [{MIN_YEAR}, {MAX_YEAR}]")


@dataclass(frozen=True)
class Table:
    id: str
    headings: Tuple[str, ...]
    core_column_index: int
    rows: Tuple[Tuple[str, ...], ...]
    context: TableContext = field(default_factory=TableContext)

    def __post_init__(self):
        if not self.headings:
            raise ValueError("headings list is empty")
        if not 0 <= self.core_column_index < len(self.headings):
            raise ValueError(
                f"core column {self.core_column_index} outside {len(self.headings)} columns"
            )
        for i, row in enumerate(self.rows):
            if len(row) != len(self.headings):
                raise ValueError(
                    f"row {i} has {len(row)} cells, expected {len(self.headings)}"
                )

    @property
    def n_columns(self) -> int:
        return len(self.headings)

    @property
    def core_heading(self) -> str:
        return self.headings[self.core_column_index]

    def column(self, index: int) -> Tuple[str, ...]:
        return tuple(row[index] for row in self.rows)


class CoreMention(NamedTuple):
    row_index: int
    key: MentionKey
    raw: str
