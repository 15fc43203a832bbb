"""
Entity linking for core-column mentions.

Per table: candidate retrieval, a type vote over rank-1 candidates, one
classifier decision per (mention, candidate) and a type-filtered choice of at
most one entity. Across the corpus: exact-match propagation into tables of the
same type.
"""

import logging
import re
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from apps.corpus.domain import Table, normalize_mention
from apps.corpus.services import core_mentions
from apps.kb.domain import KbSnapshot
from apps.learn.domain import Dataset, TreeEnsembleModel
from apps.learn.services import predict
from apps.retrieve.domain import Candidate, SearchIndex
from apps.retrieve.services import search
from apps.sim.embeddings import TermEmbeddings
from apps.sim.services import (
    edit_distance_norm,
    jaccard_terms,
    letter_overlap,
    soft_match_phi,
    substring_indicator,
    type_label,
)
from core.exceptions import DataError
from core.tsv import format_score, read_tsv, write_tsv

from .domain import (
    DISAMBIGUATION_CHOICES,
    DISAMBIGUATION_RANK,
    LINK_FEATURE_SCHEMA,
    CandidateMatrix,
    Link,
    LinkAssignment,
    LinkFeatureVector,
    TableTypeVote,
)

logger = logging.getLogger(__name__)

_DISAMBIGUATION_TAG = re.compile(r"\([^()]*\)\s*$")

LINKS_HEADER = ('table_id', 'row_index', 'mention', 'entity_id', 'confidence', 'propagated')
TABLE_TYPES_HEADER = ('table_id', 'types')


def build_candidate_matrix(table: Table, index: SearchIndex, k: int = 10) -> CandidateMatrix:
    mentions = core_mentions(table)
    return CandidateMatrix(
        table_id=table.id,
        mentions=mentions,
        candidates=[search(index, mention.raw, k) for mention in mentions],
    )


def infer_table_type(cands: CandidateMatrix, kb: KbSnapshot, expand: bool = False) -> TableTypeVote:
    """Rank-1 candidates vote once per type; every type at the maximum count wins."""
    counts: Counter = Counter()
    for row in cands.candidates:
        if not row:
            continue
        counts.update(kb.types_for(row[0].entity_id, expanded=expand))
    if not counts:
        return TableTypeVote()
    top = max(counts.values())
    return TableTypeVote(
        winning_types=frozenset(t for t, n in counts.items() if n == top),
        vote_counts=dict(sorted(counts.items())),
        expanded=expand,
    )


def has_disambiguation_tag(label: str) -> bool:
    return bool(_DISAMBIGUATION_TAG.search(label or ""))


def shares_table_type(kb: KbSnapshot, entity_id: str, vote: TableTypeVote) -> bool:
    """True when a type of the entity is a winning type.

    Ancestor types count only when the vote itself was cast over expanded
    types, so direct votes are compared with direct types.
    """
    return bool(set(kb.types_for(entity_id, expanded=vote.expanded)) & vote.winning_types)


def extract_link_features(
    mention: str,
    candidate: Candidate,
    vote: TableTypeVote,
    kb: KbSnapshot,
    emb: TermEmbeddings,
) -> LinkFeatureVector:
    entity = kb.get(candidate.entity_id)
    table_types = " ".join(type_label(t) for t in sorted(vote.winning_types))
    entity_types = " ".join(type_label(t) for t in entity.type_ids)
    return LinkFeatureVector(
        rank=float(candidate.rank),
        type_exists=float(bool(entity.type_ids)),
        type_matches_table=float(shares_table_type(kb, entity.entity_id, vote)),
        has_disambig_tag=float(has_disambiguation_tag(entity.label)),
        edit=edit_distance_norm(normalize_mention(mention), normalize_mention(entity.label)),
        letter=letter_overlap(normalize_mention(mention), normalize_mention(entity.label)),
        jaccard=jaccard_terms(mention, entity.label),
        substring=float(substring_indicator(mention, entity.label)),
        phi_mention_label=soft_match_phi(mention, entity.label, emb),
        phi_typed=soft_match_phi(f"{mention} {table_types}", f"{entity.label} {entity_types}", emb),
        phi_mention_description=soft_match_phi(mention, entity.description, emb),
    )


def matrix_features(
    cands: CandidateMatrix, vote: TableTypeVote, kb: KbSnapshot, emb: TermEmbeddings
) -> List[List[LinkFeatureVector]]:
    return [
        [extract_link_features(mention.raw, c, vote, kb, emb) for c in row]
        for mention, row in zip(cands.mentions, cands.candidates)
    ]


def classify_candidates(
    model: TreeEnsembleModel, features: Sequence[Sequence[LinkFeatureVector]]
) -> Tuple[List[List[int]], List[List[float]]]:
    """Binary linkability per (mention, candidate) plus the tree-vote scores."""
    model.check_schema(LINK_FEATURE_SCHEMA)
    labels, scores = [], []
    for row in features:
        decisions = [predict(model, vector) for vector in row]
        labels.append([label for label, _ in decisions])
        scores.append([score for _, score in decisions])
    return labels, scores


def disambiguate(
    decisions: Sequence[Sequence[int]],
    scores: Sequence[Sequence[float]],
    cands: CandidateMatrix,
    vote: TableTypeVote,
    kb: KbSnapshot,
    mode: str = DISAMBIGUATION_RANK,
    type_fallback: bool = False,
) -> LinkAssignment:
    """Keep at most one positive candidate per mention.

    With a type vote only candidates sharing a winning type qualify; without
    one, mentions stay unlinked unless ``type_fallback`` is set.
    """
    if mode not in DISAMBIGUATION_CHOICES:
        raise ValueError(f"Unknown disambiguation mode {mode!r}")
    assignment = LinkAssignment(cands.table_id, list(cands.mentions), vote)
    if vote.is_empty and not type_fallback:
        return assignment

    for i, mention in enumerate(cands.mentions):
        positives = [
            (candidate, scores[i][j])
            for j, candidate in enumerate(cands.candidates[i])
            if decisions[i][j]
            and (vote.is_empty or shares_table_type(kb, candidate.entity_id, vote))
        ]
        if not positives:
            continue
        if mode == DISAMBIGUATION_RANK:
            chosen, score = min(positives, key=lambda p: p[0].rank)
        else:
            chosen, score = min(positives, key=lambda p: (-p[1], p[0].rank))
        assignment.links[mention.row_index] = Link(
            table_id=cands.table_id,
            row_index=mention.row_index,
            mention=mention.raw,
            key=mention.key,
            entity_id=chosen.entity_id,
            confidence=score,
        )
    return assignment


def link_table(
    table: Table,
    index: SearchIndex,
    kb: KbSnapshot,
    emb: TermEmbeddings,
    model: TreeEnsembleModel,
    top_k: int = 10,
    expand_vote_types: bool = False,
    mode: str = DISAMBIGUATION_RANK,
    type_fallback: bool = False,
) -> LinkAssignment:
    cands = build_candidate_matrix(table, index, top_k)
    vote = infer_table_type(cands, kb, expand=expand_vote_types)
    decisions, scores = classify_candidates(model, matrix_features(cands, vote, kb, emb))
    assignment = disambiguate(decisions, scores, cands, vote, kb, mode, type_fallback)
    logger.debug(
        f"Table {table.id}: {len(assignment.links)}/{len(cands)} mentions linked, "
        f"types {sorted(vote.winning_types)}"
    )
    return assignment


def propagate_exact_matches(assignments: Iterable[LinkAssignment], kb: KbSnapshot) -> List[LinkAssignment]:
    """Link unlinked mentions to the entity of an identical mention in another same-typed table.

    Donors are non-propagated links of typed tables; the donor's table types
    must intersect the recipient's and the entity must share one of the
    recipient's winning types. Two distinct donor entities leave the mention
    unlinked. Propagated links never donate, so a second pass changes nothing.
    """
    assignments = list(assignments)
    donors: Dict[str, List[Tuple[str, Link, frozenset]]] = defaultdict(list)
    for assignment in assignments:
        if assignment.vote.is_empty:
            continue
        for link in assignment.links.values():
            if not link.propagated:
                donors[link.key].append((assignment.table_id, link, assignment.vote.winning_types))

    result = []
    propagated = 0
    for assignment in assignments:
        updated = LinkAssignment(
            assignment.table_id, assignment.mentions, assignment.vote, dict(assignment.links)
        )
        if not assignment.vote.is_empty:
            for mention in assignment.unlinked():
                offers: Dict[str, float] = {}
                for table_id, link, types in donors.get(mention.key, ()):
                    if table_id == assignment.table_id or not (types & assignment.vote.winning_types):
                        continue
                    if not shares_table_type(kb, link.entity_id, assignment.vote):
                        continue
                    offers[link.entity_id] = max(offers.get(link.entity_id, 0.0), link.confidence)
                if len(offers) != 1:
                    continue
                (entity_id, confidence), = offers.items()
                updated.links[mention.row_index] = Link(
                    table_id=assignment.table_id,
                    row_index=mention.row_index,
                    mention=mention.raw,
                    key=mention.key,
                    entity_id=entity_id,
                    confidence=confidence,
                    propagated=True,
                )
                propagated += 1
        result.append(updated)
    logger.info(f"Exact-match propagation added {propagated} links")
    return result


def build_link_dataset(
    tables: Iterable[Table],
    index: SearchIndex,
    kb: KbSnapshot,
    emb: TermEmbeddings,
    gold: Set[Tuple[str, int, str]],
    top_k: int = 10,
    expand_vote_types: bool = False,
) -> Dataset:
    """Candidates of gold tables: positive iff the candidate is the gold entity of its row."""
    gold_by_cell = {(table_id, row): entity for table_id, row, entity in gold}
    gold_tables = {table_id for table_id, _, _ in gold}
    data = Dataset(LINK_FEATURE_SCHEMA)
    for table in tables:
        if table.id not in gold_tables:
            continue
        cands = build_candidate_matrix(table, index, top_k)
        vote = infer_table_type(cands, kb, expand=expand_vote_types)
        for mention, row in zip(cands.mentions, cands.candidates):
            expected = gold_by_cell.get((table.id, mention.row_index))
            for candidate in row:
                vector = extract_link_features(mention.raw, candidate, vote, kb, emb)
                data.add(
                    vector,
                    int(candidate.entity_id == expected),
                    group=table.id,
                    key=f"{table.id}:{mention.row_index}:{candidate.entity_id}",
                )
    logger.info(f"Link dataset: {len(data)} candidate examples from {len(gold_tables)} gold tables")
    return data


# ------------------------------------------------------------------ #
# Stage files                                                          #
# ------------------------------------------------------------------ #

def write_links(path: Path, assignments: Iterable[LinkAssignment]) -> int:
    rows = []
    for assignment in assignments:
        for row_index in sorted(assignment.links):
            link = assignment.links[row_index]
            rows.append((
                link.table_id,
                link.row_index,
                link.mention,
                link.entity_id,
                format_score(link.confidence),
                int(link.propagated),
            ))
    return write_tsv(path, rows, header=LINKS_HEADER)


def read_links(path: Path) -> Dict[str, Dict[int, Link]]:
    links: Dict[str, Dict[int, Link]] = defaultdict(dict)
    try:
        for line_no, fields in read_tsv(path, skip_header=True):
            if len(fields) != len(LINKS_HEADER):
                raise DataError(f"{path}, line {line_no}: expected {len(LINKS_HEADER)} columns")
            table_id, row, mention, entity_id, confidence, propagated = fields
            links[table_id][int(row)] = Link(
                table_id,
                int(row),
                mention,
                normalize_mention(mention),
                entity_id,
                float(confidence),
                propagated=propagated == "1",
            )
    except OSError as exc:
        raise DataError(f"Could not read links {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"Malformed links file {path}: {exc}") from exc
    return dict(links)


def write_table_types(path: Path, assignments: Iterable[LinkAssignment]) -> int:
    rows = [
        (a.table_id, "|".join(sorted(a.vote.winning_types)))
        for a in assignments
        if not a.vote.is_empty
    ]
    return write_tsv(path, rows, header=TABLE_TYPES_HEADER)


def read_table_types(path: Path) -> Dict[str, frozenset]:
    try:
        return {
            fields[0]: frozenset(t for t in fields[1].split("|") if t)
            for _, fields in read_tsv(path, skip_header=True)
            if len(fields) >= 2
        }
    except OSError as exc:
        raise DataError(f"Could not read table types {path}: {exc}") from exc


def restore_assignments(
    tables: Iterable[Table],
    links: Dict[str, Dict[int, Link]],
    table_types: Dict[str, frozenset],
    expanded: bool = False,
) -> List[LinkAssignment]:
    """Rebuild per-table assignments from the link and table-type files."""
    return [
        LinkAssignment(
            table.id,
            core_mentions(table),
            TableTypeVote(winning_types=table_types.get(table.id, frozenset()), expanded=expanded),
            dict(links.get(table.id, {})),
        )
        for table in tables
    ]


def predicted_link_tuples(assignments: Iterable[LinkAssignment]) -> Set[Tuple[str, int, str]]:
    return {
        (link.table_id, link.row_index, link.entity_id)
        for a in assignments
        for link in a.links.values()
    }
