"""
Linking value types: candidate matrices, table type votes, feature vectors
and the per-table assignment of at most one entity per core mention.
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Optional

from apps.corpus.domain import CoreMention, MentionKey
from apps.retrieve.domain import Candidate

LINK_SCHEMA_VERSION = 1

DISAMBIGUATION_RANK = 'rank'
DISAMBIGUATION_SCORE = 'score'
DISAMBIGUATION_CHOICES = (DISAMBIGUATION_RANK, DISAMBIGUATION_SCORE)


class LinkFeatureVector(NamedTuple):
    rank: float
    type_exists: float
    type_matches_table: float
    has_disambig_tag: float
    edit: float
    letter: float
    jaccard: float
    substring: float
    phi_mention_label: float
    phi_typed: float
    phi_mention_description: float


LINK_FEATURE_SCHEMA = LinkFeatureVector._fields


@dataclass
class CandidateMatrix:
    """Row i holds the ranked candidates of core mention i."""

    table_id: str
    mentions: List[CoreMention]
    candidates: List[List[Candidate]]

    def __len__(self) -> int:
        return len(self.mentions)


@dataclass(frozen=True)
class TableTypeVote:
    winning_types: FrozenSet[str] = frozenset()
    vote_counts: Dict[str, int] = field(default_factory=dict)
    expanded: bool = False

    @property
    def is_empty(self) -> bool:
        return not self.winning_types


class Link(NamedTuple):
    table_id: str
    row_index: int
    mention: str
    key: MentionKey
    entity_id: str
    confidence: float
    propagated: bool = False


@dataclass
class LinkAssignment:
    table_id: str
    mentions: List[CoreMention]
    vote: TableTypeVote
    links: Dict[int, Link] = field(default_factory=dict)

    def entity_for(self, row_index: int) -> Optional[str]:
        link = self.links.get(row_index)
        return link.entity_id if link else None

    def unlinked(self) -> List[CoreMention]:
        return [m for m in self.mentions if m.row_index not in self.links]

    @property
    def is_linkable(self) -> bool:
        return bool(self.links)
