"""
Resolution value types.

TypeDistribution : L2-normalized weights over ancestor-expanded types.
TableProfile     : a table with its links and type distribution, shared by pair features.
MentionEmbeddings: skip-gram vectors per mention key plus training metadata.
EntityCluster    : occurrences judged to be one entity, with a canonical form and type.
EntityAlias      : an in-KB mention with the entity id it was attached to.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from apps.corpus.domain import MentionKey, Table

EMBEDDINGS_FORMAT = 'tablekb-mention-embeddings'
EMBEDDINGS_VERSION = 1

SURFACE_MODE_MODEL = 'model'
SURFACE_MODE_EMBEDDING = 'embedding'
SURFACE_MODES = (SURFACE_MODE_MODEL, SURFACE_MODE_EMBEDDING)


@dataclass(frozen=True)
class TypeDistribution:
    weights: Tuple[Tuple[str, float], ...] = ()

    @classmethod
    def from_counts(cls, counts: Mapping[str, float]) -> "TypeDistribution":
        positive = {t: float(w) for t, w in counts.items() if w > 0}
        norm = math.sqrt(sum(w * w for w in positive.values()))
        if norm == 0.0:
            return cls()
        return cls(tuple(sorted((t, w / norm) for t, w in positive.items())))

    @property
    def is_empty(self) -> bool:
        return not self.weights

    def as_dict(self) -> Dict[str, float]:
        return dict(self.weights)

    def cosine(self, other: "TypeDistribution") -> float:
        """Dot product of two unit vectors; 0 when either side is empty."""
        if self.is_empty or other.is_empty:
            return 0.0
        mine = self.as_dict()
        total = sum(w * mine.get(t, 0.0) for t, w in other.weights)
        return max(0.0, min(1.0, total))

    def dominant_type(self, depth: Callable[[str], int] = None) -> Optional[str]:
        """Highest weight; ties go to the deeper type under ``depth``, then the smaller id."""
        if self.is_empty:
            return None
        depth = depth or (lambda type_id: 0)
        return min(self.weights, key=lambda tw: (-tw[1], -depth(tw[0]), tw[0]))[0]


class Occurrence(NamedTuple):
    """One mention key inside one table."""

    key: MentionKey
    table_id: str


@dataclass
class MentionEmbeddings:
    dimension: int
    vectors: Dict[str, np.ndarray]
    metadata: Dict[str, float] = field(default_factory=dict)

    def __contains__(self, key: str) -> bool:
        return key in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def vector(self, key: str) -> Optional[np.ndarray]:
        return self.vectors.get(key)

    def cosine(self, a: str, b: str) -> float:
        """Cosine of the two mention vectors; 0 if either mention has none."""
        u, v = self.vectors.get(a), self.vectors.get(b)
        if u is None or v is None:
            return 0.0
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            return 0.0
        return float(np.dot(u, v) / (nu * nv))

    def to_dict(self) -> dict:
        return {
            'format': EMBEDDINGS_FORMAT,
            'version': EMBEDDINGS_VERSION,
            'dimension': self.dimension,
            'metadata': dict(self.metadata),
            'vectors': {key: [float(x) for x in self.vectors[key]] for key in sorted(self.vectors)},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MentionEmbeddings":
        dimension = int(payload['dimension'])
        vectors = {key: np.asarray(v, dtype=np.float64) for key, v in payload['vectors'].items()}
        for key, vector in vectors.items():
            if vector.shape != (dimension,):
                raise ValueError(f"vector for {key!r} has {vector.shape[0]} values, expected {dimension}")
        return cls(dimension, vectors, dict(payload.get('metadata', {})))


@dataclass
class EntityCluster:
    members: List[Occurrence]
    canonical: str
    assigned_type: Optional[str]
    provenance: List[str]

    @property
    def size(self) -> int:
        return len(self.members)

    def to_record(self) -> dict:
        return {
            'canonical': self.canonical,
            'members': [[m.key, m.table_id] for m in self.members],
            'type': self.assigned_type,
            'size': self.size,
            'provenance': list(self.provenance),
        }


ALIAS_SURFACE_FORM = 'surface_form'
ALIAS_SEARCH = 'search'


class EntityAlias(NamedTuple):
    """A mention judged to be in the KB, attached to the entity it names."""

    mention_key: MentionKey
    entity_id: str
    source: str
    n_tables: int


STRING_FEATURES = ('edit', 'letter', 'jaccard', 'substring')
EMBEDDING_FEATURES = ('mention_cosine',)
TABLE_FEATURES = (
    'caption_jaccard', 'title_jaccard', 'text_jaccard', 'heading_jaccard',
    'entity_jaccard', 'type_cosine', 'heading_bipartite',
)

SURFACE_FEATURE_FAMILIES: Dict[str, Tuple[str, ...]] = {
    'string': STRING_FEATURES,
    'embedding': EMBEDDING_FEATURES,
    'table': TABLE_FEATURES,
}

# Candidate thresholds for the embedding-only rule.
THRESHOLD_GRID: Tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10)) + (0.99,)


@dataclass(frozen=True)
class TableProfile:
    """A table with its links (row → entity id) and type distribution."""

    table: Table
    entities: Mapping[int, str]
    distribution: TypeDistribution

    @property
    def entity_set(self) -> frozenset:
        return frozenset(self.entities.values())
