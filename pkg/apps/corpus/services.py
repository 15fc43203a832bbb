"""
Corpus ingestion and the mention-level views every later stage reads.
"""

import hashlib
import json
import logging
import re
from pathlib import Path
from typing import IO, Iterable, List, Optional, Tuple

from core.exceptions import CorpusReadError

from .domain import MAX_YEAR, MIN_YEAR, CoreMention, MentionKey, Table, TableContext, normalize_mention
from .serializers import TableRecordSerializer, WdcRecordSerializer

logger = logging.getLogger(__name__)

NOISE_PATTERNS_VERSION = 1

_MONTHS = (
    r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?"
    r"|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)"
)

# Ordered; the first match wins. None of them matches the empty string.
NOISE_PATTERNS = (
    ("number", re.compile(r"[+\-]?(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)")),
    ("date_iso", re.compile(r"\d{4}-\d{1,2}-\d{1,2}")),
    ("date_slashed", re.compile(r"\d{1,2}/\d{1,2}/\d{4}")),
    ("date_month_name", re.compile(_MONTHS + r"\.?\s+\d{1,2},\s*\d{4}", re.IGNORECASE)),
    ("email", re.compile(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}")),
)

_YEAR_IN_TEXT = re.compile(r"(?<!\d)(\d{4})(?!\d)")


class CorpusParser:
    """Turns JSON-lines records (canonical or WDC style) into Tables."""

    def __init__(self):
        self.warnings: List[str] = []

    def warn(self, line_no: int, reason: str):
        message = f"line {line_no}: {reason}"
        self.warnings.append(message)
        logger.warning(f"Skipping corpus record, {message}")

    def parse(self, stream: IO[str]) -> List[Table]:
        tables = []
        try:
            for line_no, line in enumerate(stream, start=1):
                if not line.strip():
                    continue
                table = self.parse_line(line_no, line)
                if table is not None:
                    tables.append(table)
        except (OSError, UnicodeDecodeError) as exc:
            raise CorpusReadError(f"Could not read corpus stream: {exc}") from exc
        logger.info(f"Parsed {len(tables)} tables ({len(self.warnings)} records skipped)")
        return tables

    def parse_line(self, line_no: int, line: str) -> Optional[Table]:
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            self.warn(line_no, f"invalid JSON ({exc.msg})")
            return None
        if not isinstance(record, dict):
            self.warn(line_no, "record is not a JSON object")
            return None

        if 'relation' in record:
            record = self.from_wdc(line_no, record)
            if record is None:
                return None

        serializer = TableRecordSerializer(data=record)
        if not serializer.is_valid():
            self.warn(line_no, f"schema violation {dict(serializer.errors)}")
            return None
        return self.build_table(line_no, serializer.validated_data)

    def from_wdc(self, line_no: int, record: dict) -> Optional[dict]:
        serializer = WdcRecordSerializer(data=record)
        if not serializer.is_valid():
            self.warn(line_no, f"WDC schema violation {dict(serializer.errors)}")
            return None
        data = serializer.validated_data
        relation = data['relation']
        if data['tableOrientation'] == 'HORIZONTAL':
            # column-major: relation[c][r]
            width = len(relation)
            height = len(relation[0]) if relation else 0
            if any(len(column) != height for column in relation):
                self.warn(line_no, "WDC columns have unequal length")
                return None
            rows = [[relation[c][r] for c in range(width)] for r in range(height)]
        else:
            rows = [list(row) for row in relation]

        year = data.get('tableYear')
        if year is None and data.get('lastModified'):
            match = _YEAR_IN_TEXT.search(data['lastModified'])
            year = int(match.group(1)) if match else None
        if year is not None and not (MIN_YEAR <= year <= MAX_YEAR):
            logger.debug(f"line {line_no}: WDC year {year} outside [{MIN_YEAR}, {MAX_YEAR}], dropped")
            year = None

        table_id = data.get('id') or f"{data.get('url', '')}#{data.get('tableNum', 0)}"
        surrounding = " ".join(
            part for part in (data.get('textBeforeTable'), data.get('textAfterTable')) if part
        )
        return {
            'id': table_id,
            'headings': [] if data['hasHeader'] else [''] * (len(rows[0]) if rows else 0),
            'rows': rows,
            'coreColumnIndex': data['keyColumnIndex'],
            'headerRowIndex': data['headerRowIndex'] if data['hasHeader'] else None,
            'pageTitle': data.get('pageTitle', ''),
            'caption': data.get('title', ''),
            'surroundingText': surrounding,
            'lastEditYear': year,
        }

    def build_table(self, line_no: int, data: dict) -> Optional[Table]:
        rows = [tuple(row) for row in data['rows']]
        headings = tuple(data.get('headings') or ())
        header_row = data.get('headerRowIndex')
        if header_row is not None and header_row < len(rows):
            header = rows.pop(header_row)
            if not headings:
                headings = header

        try:
            table = Table(
                id=data['id'],
                headings=headings,
                core_column_index=data['coreColumnIndex'],
                rows=tuple(rows),
                context=TableContext(
                    page_title=data.get('pageTitle', ''),
                    caption=data.get('caption', ''),
                    surrounding_text=data.get('surroundingText', ''),
                    last_edit_year=data.get('lastEditYear'),
                ),
            )
        except ValueError as exc:
            self.warn(line_no, f"table {data['id']!r} dropped: {exc}")
            return None

        if not core_mentions(table):
            self.warn(line_no, f"table {table.id!r} dropped: empty core column")
            return None
        return table


def parse_corpus(stream: IO[str]) -> Tuple[List[Table], List[str]]:
    """Parse a JSON-lines stream; returns the tables and the per-line warnings."""
    parser = CorpusParser()
    tables = parser.parse(stream)
    return tables, parser.warnings


def read_corpus(path: Path) -> Tuple[List[Table], List[str]]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return parse_corpus(handle)
    except OSError as exc:
        raise CorpusReadError(f"Could not open corpus {path}: {exc}") from exc


def serialize_table(table: Table) -> dict:
    ctx = table.context
    return {
        'id': table.id,
        'headings': list(table.headings),
        'rows': [list(row) for row in table.rows],
        'coreColumnIndex': table.core_column_index,
        'headerRowIndex': None,
        'pageTitle': ctx.page_title,
        'caption': ctx.caption,
        'surroundingText': ctx.surrounding_text,
        'lastEditYear': ctx.last_edit_year,
    }


def write_corpus(tables: Iterable[Table], path: Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for table in tables:
            handle.write(json.dumps(serialize_table(table), ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


def core_mentions(table: Table) -> List[CoreMention]:
    """One entry per non-empty core-column body cell, in row order."""
    mentions = []
    for row_index, row in enumerate(table.rows):
        raw = row[table.core_column_index]
        key = normalize_mention(raw)
        if key:
            mentions.append(CoreMention(row_index, key, raw))
    return mentions


def is_noise_mention(mention: str) -> bool:
    text = (mention or "").strip()
    if not text:
        return False
    return any(pattern.fullmatch(text) for _, pattern in NOISE_PATTERNS)


def identical_core_key(table: Table) -> str:
    """Digest of the set of normalized core mentions (order and duplicates ignored)."""
    keys = sorted({mention.key for mention in core_mentions(table)})
    return hashlib.sha1("\x1f".join(keys).encode("utf-8")).hexdigest()


def mention_keys(table: Table) -> List[MentionKey]:
    return [mention.key for mention in core_mentions(table)]
