"""
Heading-to-property matching over the triples of a table's linked entities.

Cell values and KB objects are typed (time, numerical, string, other); a
column only competes for properties whose objects share its majority kind,
and pairwise value similarity (PVS) aggregates feed the classifier.
"""

import logging
import re
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from apps.corpus.domain import Table, normalize_mention
from apps.kb.domain import KbSnapshot
from apps.learn.domain import Dataset, TreeEnsembleModel
from apps.learn.services import predict
from apps.link.domain import LinkAssignment
from apps.sim.services import edit_distance_norm, jaccard_terms, letter_overlap, substring_indicator, type_label
from core.exceptions import DataError
from core.tsv import format_score, read_tsv, write_tsv

from .domain import (
    HEADING_FEATURE_SCHEMA,
    KIND_NUMERICAL,
    KIND_OTHER,
    KIND_STRING,
    KIND_TIME,
    VALUE_KINDS,
    ColumnMatch,
    HeadingFeatureVector,
    HeadingMatch,
    TypedValue,
)

logger = logging.getLogger(__name__)

EPSILON = 1e-9

HEADINGS_HEADER = ('table_id', 'column_index', 'heading', 'property_id', 'confidence')

NULL_TOKENS = frozenset({'', '-', '--', '?', 'n/a', 'na', 'none', 'null', 'nil', 'unknown', 'tbd', 'tba'})

_MONTHS = (
    r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?"
    r"|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)"
)
_YEAR = re.compile(r"[12]\d{3}")
_DATES = (
    re.compile(r"(?P<year>\d{4})-\d{1,2}(?:-\d{1,2})?(?:[T ][\d:.]+Z?)?"),
    re.compile(r"\d{1,2}[/.]\d{1,2}[/.](?P<year>\d{4})"),
    re.compile(_MONTHS + r"\.?\s+\d{1,2}(?:st|nd|rd|th)?,?\s+(?P<year>\d{4})", re.IGNORECASE),
    re.compile(r"\d{1,2}\s+" + _MONTHS + r"\.?,?\s+(?P<year>\d{4})", re.IGNORECASE),
    re.compile(_MONTHS + r"\.?,?\s+(?P<year>\d{4})", re.IGNORECASE),
)
_CURRENCY = re.compile(r"[$€£¥₹]")
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}(?!\d))")
_LEADING_NUMBER = re.compile(r"^[+\-]?(?:\d+(?:\.\d+)?|\.\d+)")
_ALPHA = re.compile(r"[^\W\d_]", re.UNICODE)


def detect_value_kind(value: str) -> TypedValue:
    text = " ".join((value or "").split())
    if text.casefold() in NULL_TOKENS:
        return TypedValue(value, frozenset({KIND_OTHER}))

    kinds: Set[str] = set()
    year: Optional[int] = None
    number: Optional[float] = None

    if _YEAR.fullmatch(text):
        # bare years are both a time and a number
        year = int(text)
        number = float(text)
        return TypedValue(value, frozenset({KIND_TIME, KIND_NUMERICAL}), year, number)

    for pattern in _DATES:
        match = pattern.fullmatch(text)
        if match:
            return TypedValue(value, frozenset({KIND_TIME}), int(match.group('year')))

    cleaned = _THOUSANDS.sub("", _CURRENCY.sub("", text)).strip().rstrip("%")
    match = _LEADING_NUMBER.match(cleaned)
    leftover = text
    if match:
        number = float(match.group(0))
        kinds.add(KIND_NUMERICAL)
        leftover = cleaned[match.end():]
    if _ALPHA.search(leftover):
        kinds.add(KIND_STRING)
    if not kinds:
        kinds.add(KIND_OTHER)
    return TypedValue(value, frozenset(kinds), year, number)


def column_data_type(values: Sequence[TypedValue]) -> str:
    """Most frequent kind over all kind sets; ties go to the earlier of time, numerical, string, other."""
    if not values:
        return KIND_OTHER
    counts = Counter(kind for value in values for kind in value.kinds)
    return max(VALUE_KINDS, key=lambda kind: (counts[kind], -VALUE_KINDS.index(kind)))


def value_similarity(a: TypedValue, b: TypedValue, kind: str) -> float:
    if not (a.has(kind) and b.has(kind)):
        return 0.0
    if kind == KIND_TIME:
        return 1.0 / (1.0 + abs(a.year - b.year))
    if kind == KIND_NUMERICAL:
        scale = max(abs(a.number), abs(b.number), EPSILON)
        return min(1.0, max(0.0, 1.0 - abs(a.number - b.number) / scale))
    return 1.0 - edit_distance_norm(normalize_mention(a.raw), normalize_mention(b.raw))


def pvs(col_values: Sequence[TypedValue], kb_values: Sequence[TypedValue], kind: str) -> Tuple[float, float, float]:
    """(max, sum, avg) of value_similarity over the cross product of values carrying ``kind``."""
    left = [v for v in col_values if v.has(kind)]
    right = [v for v in kb_values if v.has(kind)]
    if not left or not right:
        return 0.0, 0.0, 0.0
    sims = [value_similarity(a, b, kind) for a in left for b in right]
    total = sum(sims)
    return max(sims), total, total / len(sims)


def property_label(property_id: str) -> str:
    return type_label(property_id)


def heading_features(
    heading: str,
    is_core: bool,
    property_id: str,
    col_values: Sequence[TypedValue],
    kb_values: Sequence[TypedValue],
    kind: str,
) -> HeadingFeatureVector:
    h = normalize_mention(heading)
    p = property_label(property_id)
    pvs_max, pvs_sum, pvs_avg = pvs(col_values, kb_values, kind)
    return HeadingFeatureVector(
        is_core_column=float(is_core),
        heading_length=float(len(h)),
        property_length=float(len(p)),
        edit=edit_distance_norm(h, p),
        letter=letter_overlap(h, p),
        jaccard=jaccard_terms(h, p),
        substring=float(substring_indicator(h, p)),
        pvs_max=pvs_max,
        pvs_sum=pvs_sum,
        pvs_avg=pvs_avg,
    )


def linked_entities(links: Mapping[int, str]) -> List[str]:
    """Distinct entities in row order."""
    seen = []
    for row_index in sorted(links):
        if links[row_index] not in seen:
            seen.append(links[row_index])
    return seen


def column_candidates(
    table: Table,
    links: Mapping[int, str],
    kb: KbSnapshot,
) -> Dict[int, List[Tuple[str, HeadingFeatureVector]]]:
    """Kind-compatible candidate properties per column, with their feature vectors."""
    properties = kb.properties_of(linked_entities(links))
    typed_properties = {
        predicate: [detect_value_kind(obj) for _, obj in values]
        for predicate, values in properties.items()
    }
    property_kinds = {p: column_data_type(values) for p, values in typed_properties.items()}

    linked_rows = sorted(links)
    candidates: Dict[int, List[Tuple[str, HeadingFeatureVector]]] = {}
    for column_index, heading in enumerate(table.headings):
        cells = [table.rows[r][column_index] for r in linked_rows]
        col_values = [detect_value_kind(c) for c in cells if c.strip()]
        if not col_values:
            continue
        kind = column_data_type(col_values)
        candidates[column_index] = [
            (
                predicate,
                heading_features(
                    heading,
                    column_index == table.core_column_index,
                    predicate,
                    col_values,
                    typed_properties[predicate],
                    kind,
                ),
            )
            for predicate in sorted(typed_properties)
            if property_kinds[predicate] == kind
        ]
    return candidates


def match_headings(
    table: Table,
    links: Mapping[int, str],
    kb: KbSnapshot,
    model: TreeEnsembleModel,
) -> HeadingMatch:
    """At most one property per column: the classifier-positive candidate with the highest pvs_avg.

    ``links`` maps body row index to the linked entity id.
    """
    model.check_schema(HEADING_FEATURE_SCHEMA)
    result = HeadingMatch(table.id)
    if not links:
        return result

    for column_index, candidates in column_candidates(table, links, kb).items():
        positives = []
        for predicate, features in candidates:
            label, score = predict(model, features)
            if label:
                positives.append((predicate, features, score))
        if not positives:
            continue
        predicate, _, score = min(positives, key=lambda p: (-p[1].pvs_avg, -p[1].jaccard, p[0]))
        result.matches[column_index] = ColumnMatch(
            table.id, column_index, table.headings[column_index], predicate, score
        )

    duplicates = result.duplicate_properties()
    if duplicates:
        logger.debug(f"Table {table.id}: properties matched by several columns {duplicates}")
    return result


def entity_links(assignment: LinkAssignment) -> Dict[int, str]:
    return {row: link.entity_id for row, link in assignment.links.items()}


def build_heading_dataset(
    tables: Iterable[Table],
    links_by_table: Mapping[str, Mapping[int, str]],
    kb: KbSnapshot,
    gold: Set[Tuple[str, int, str]],
) -> Dataset:
    """Candidates of gold tables: positive iff (table, column, property) is in the gold set."""
    gold_tables = {table_id for table_id, _, _ in gold}
    data = Dataset(HEADING_FEATURE_SCHEMA)
    for table in tables:
        if table.id not in gold_tables:
            continue
        links = links_by_table.get(table.id, {})
        if not links:
            continue
        for column_index, candidates in column_candidates(table, links, kb).items():
            for predicate, features in candidates:
                data.add(
                    features,
                    int((table.id, column_index, predicate) in gold),
                    group=table.id,
                    key=f"{table.id}:{column_index}:{predicate}",
                )
    logger.info(f"Heading dataset: {len(data)} (column, property) examples from {len(gold_tables)} gold tables")
    return data


def write_headings(path: Path, matches: Iterable[HeadingMatch]) -> int:
    rows = []
    for match in matches:
        for column_index in sorted(match.matches):
            m = match.matches[column_index]
            rows.append((m.table_id, m.column_index, m.heading, m.property_id, format_score(m.confidence)))
    return write_tsv(path, rows, header=HEADINGS_HEADER)


def read_headings(path: Path) -> Dict[str, HeadingMatch]:
    result: Dict[str, HeadingMatch] = {}
    try:
        for line_no, fields in read_tsv(path, skip_header=True):
            if len(fields) != len(HEADINGS_HEADER):
                raise DataError(f"{path}, line {line_no}: expected {len(HEADINGS_HEADER)} columns")
            table_id, column, heading, property_id, confidence = fields
            match = result.setdefault(table_id, HeadingMatch(table_id))
            match.matches[int(column)] = ColumnMatch(table_id, int(column), heading, property_id, float(confidence))
    except OSError as exc:
        raise DataError(f"Could not read headings {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"Malformed headings file {path}: {exc}") from exc
    return result
