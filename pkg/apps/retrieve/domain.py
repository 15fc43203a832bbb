from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Tuple

FIELDS_TITLE = 'title'
FIELDS_TITLE_CONTENT = 'title+content'
FIELD_CHOICES = (FIELDS_TITLE, FIELDS_TITLE_CONTENT)

INDEX_FORMAT = 'tablekb-search-index'
INDEX_VERSION = 1


class Candidate(NamedTuple):
    entity_id: str
    rank: int
    retrieval_score: float


@dataclass
class SearchIndex:
    """Inverted index over KB entities with per-field weighted term frequencies.

    postings: token → [(entity_id, weighted tf)], sorted by entity_id.
    """

    fields: str
    postings: Dict[str, List[Tuple[str, float]]] = field(default_factory=dict)
    doc_lengths: Dict[str, float] = field(default_factory=dict)
    popularity: Dict[str, float] = field(default_factory=dict)
    avg_doc_length: float = 0.0
    k1: float = 1.2
    b: float = 0.75
    popularity_lambda: float = 0.3

    @property
    def n_docs(self) -> int:
        return len(self.doc_lengths)

    @property
    def vocabulary(self) -> set:
        return set(self.postings)

    def document_frequency(self, token: str) -> int:
        return len(self.postings.get(token, ()))
