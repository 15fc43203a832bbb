"""
Knowledge-base snapshot types.

KbEntity     : id, canonical label, popularity, description, direct types.
TypeHierarchy: type → parent map (acyclic).
Triple       : subject, predicate, raw object text.
KbSnapshot   : everything above plus the surface-form and triple indexes.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

from apps.corpus.domain import MentionKey


@dataclass(frozen=True)
class KbEntity:
    entity_id: str
    label: str
    popularity: float
    description: str
    type_ids: Tuple[str, ...]


class Triple(NamedTuple):
    subject: str
    predicate: str
    object: str


class TypeHierarchy:

    def __init__(self, parent: Dict[str, Optional[str]]):
        self.parent = dict(parent)

    def __contains__(self, type_id: str) -> bool:
        return type_id in self.parent

    def ancestors(self, type_id: str) -> List[str]:
        """Parents of ``type_id`` from nearest to root (excluding itself)."""
        chain = []
        current = self.parent.get(type_id)
        while current is not None:
            chain.append(current)
            current = self.parent.get(current)
        return chain

    def depth(self, type_id: str) -> int:
        return len(self.ancestors(type_id))

    def expand(self, type_ids: Iterable[str]) -> Tuple[str, ...]:
        """Types plus ancestors, deduplicated, breadth-first so specific types come first."""
        seen = []
        frontier = list(type_ids)
        while frontier:
            following = []
            for type_id in frontier:
                if type_id in seen:
                    continue
                seen.append(type_id)
                parent = self.parent.get(type_id)
                if parent is not None:
                    following.append(parent)
            frontier = following
        return tuple(seen)


class KbSnapshot:
    """Immutable after load; all lookups are read-only."""

    def __init__(
        self,
        entities: Dict[str, KbEntity],
        hierarchy: TypeHierarchy,
        surface_form_index: Dict[str, List[str]],
        triple_index: Dict[str, List[Triple]],
    ):
        self.entities = entities
        self.hierarchy = hierarchy
        self.surface_form_index = surface_form_index
        self.triple_index = triple_index
        self._expanded = {
            entity_id: hierarchy.expand(entity.type_ids)
            for entity_id, entity in entities.items()
        }

    def __len__(self) -> int:
        return len(self.entities)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.entities

    def get(self, entity_id: str) -> KbEntity:
        try:
            return self.entities[entity_id]
        except KeyError:
            raise LookupError(f"Unknown entity {entity_id!r}") from None

    def label(self, entity_id: str) -> str:
        return self.get(entity_id).label

    def expanded_types(self, entity_id: str) -> Tuple[str, ...]:
        if entity_id not in self._expanded:
            raise LookupError(f"Unknown entity {entity_id!r}")
        return self._expanded[entity_id]

    def types_for(self, entity_id: str, expanded: bool = False) -> Tuple[str, ...]:
        if expanded:
            return self.expanded_types(entity_id)
        return self.get(entity_id).type_ids

    def surface_lookup(self, key: MentionKey) -> List[str]:
        return list(self.surface_form_index.get(key, ()))

    def triples(self, entity_id: str) -> List[Triple]:
        return list(self.triple_index.get(entity_id, ()))

    def properties_of(self, entity_ids: Iterable[str]) -> Dict[str, List[Tuple[str, str]]]:
        """Triples of the given entities grouped by predicate, first-seen order."""
        grouped: Dict[str, List[Tuple[str, str]]] = {}
        for entity_id in entity_ids:
            self.get(entity_id)
            for triple in self.triple_index.get(entity_id, ()):
                grouped.setdefault(triple.predicate, []).append((entity_id, triple.object))
        return grouped
