"""
Snapshot loader: five UTF-8 TSV files in one directory.

entities.tsv        entity_id, label, popularity, description
types.tsv           entity_id, type_id (one row per direct type)
type_hierarchy.tsv  type_id, parent_type_id (empty for roots)
surface_forms.tsv   surface_form, entity_id
triples.tsv         subject_id, predicate_id, object_text
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

from apps.corpus.domain import normalize_mention
from core.exceptions import KbLoadError
from core.tsv import read_tsv, write_tsv

from .domain import KbEntity, KbSnapshot, Triple, TypeHierarchy

logger = logging.getLogger(__name__)

SNAPSHOT_FILES = {
    'entities': 'entities.tsv',
    'types': 'types.tsv',
    'hierarchy': 'type_hierarchy.tsv',
    'surface_forms': 'surface_forms.tsv',
    'triples': 'triples.tsv',
}


def snapshot_paths(kb_dir: Path) -> Dict[str, Path]:
    kb_dir = Path(kb_dir)
    paths = {name: kb_dir / filename for name, filename in SNAPSHOT_FILES.items()}
    for path in paths.values():
        if not path.is_file():
            raise KbLoadError("Missing snapshot file", path=path)
    return paths


def _fields(path: Path, minimum: int):
    for line_no, fields in read_tsv(path):
        if len(fields) < minimum:
            raise KbLoadError(f"Expected {minimum} fields, found {len(fields)}", path=path, line_no=line_no)
        yield line_no, fields


def load_hierarchy(path: Path) -> TypeHierarchy:
    parent: Dict[str, Optional[str]] = {}
    for line_no, fields in _fields(path, 1):
        type_id = fields[0].strip()
        parent_id = fields[1].strip() if len(fields) > 1 else ""
        if type_id in parent:
            raise KbLoadError(f"Duplicate type {type_id!r}", path=path, line_no=line_no)
        parent[type_id] = parent_id or None

    for type_id, parent_id in parent.items():
        if parent_id is not None and parent_id not in parent:
            raise KbLoadError(f"Type {type_id!r} has undeclared parent {parent_id!r}", path=path)

    # Walk each chain; revisiting a node on the same chain means a cycle.
    settled = set()
    for type_id in parent:
        chain = []
        current = type_id
        while current is not None and current not in settled:
            if current in chain:
                raise KbLoadError(f"Type hierarchy cycle through {current!r}", path=path)
            chain.append(current)
            current = parent[current]
        settled.update(chain)
    return TypeHierarchy(parent)


def load_snapshot(kb_dir: Path) -> KbSnapshot:
    paths = snapshot_paths(kb_dir)
    hierarchy = load_hierarchy(paths['hierarchy'])

    declared: Dict[str, tuple] = {}
    for line_no, fields in _fields(paths['entities'], 2):
        entity_id = fields[0].strip()
        if entity_id in declared:
            raise KbLoadError(f"Duplicate entity {entity_id!r}", path=paths['entities'], line_no=line_no)
        try:
            popularity = float(fields[2]) if len(fields) > 2 and fields[2].strip() else 0.0
        except ValueError:
            raise KbLoadError(f"Bad popularity {fields[2]!r}", path=paths['entities'], line_no=line_no)
        if popularity < 0:
            raise KbLoadError(f"Negative popularity for {entity_id!r}", path=paths['entities'], line_no=line_no)
        description = fields[3] if len(fields) > 3 else ""
        declared[entity_id] = (fields[1], popularity, description)

    direct_types: Dict[str, List[str]] = {}
    for line_no, fields in _fields(paths['types'], 2):
        entity_id, type_id = fields[0].strip(), fields[1].strip()
        if entity_id not in declared:
            raise KbLoadError(f"Type row for unknown entity {entity_id!r}", path=paths['types'], line_no=line_no)
        if type_id not in hierarchy:
            raise KbLoadError(
                f"Entity {entity_id!r} typed {type_id!r} which the hierarchy lacks",
                path=paths['types'], line_no=line_no,
            )
        types = direct_types.setdefault(entity_id, [])
        if type_id not in types:
            types.append(type_id)

    entities: Dict[str, KbEntity] = {}
    for entity_id, (label, popularity, description) in declared.items():
        if entity_id not in direct_types:
            continue
        entities[entity_id] = KbEntity(
            entity_id=entity_id,
            label=label,
            popularity=popularity,
            description=description,
            type_ids=tuple(direct_types[entity_id]),
        )
    untyped = set(declared) - set(entities)
    if untyped:
        logger.info(f"Dropped {len(untyped)} untyped entities")

    surface_form_index: Dict[str, List[str]] = {}
    dropped_forms = 0
    for line_no, fields in _fields(paths['surface_forms'], 2):
        form, entity_id = fields[0], fields[1].strip()
        if entity_id not in declared:
            raise KbLoadError(
                f"Surface form {form!r} for unknown entity {entity_id!r}",
                path=paths['surface_forms'], line_no=line_no,
            )
        if entity_id in untyped:
            dropped_forms += 1
            continue
        key = normalize_mention(form)
        if not key:
            continue
        bucket = surface_form_index.setdefault(key, [])
        if entity_id not in bucket:
            bucket.append(entity_id)
    for entity_id, entity in entities.items():
        key = normalize_mention(entity.label)
        if key:
            bucket = surface_form_index.setdefault(key, [])
            if entity_id not in bucket:
                bucket.append(entity_id)

    triple_index: Dict[str, List[Triple]] = {}
    dropped_triples = 0
    for line_no, fields in _fields(paths['triples'], 3):
        subject, predicate, obj = fields[0].strip(), fields[1].strip(), fields[2]
        if subject not in declared:
            raise KbLoadError(
                f"Triple subject {subject!r} is not an entity",
                path=paths['triples'], line_no=line_no,
            )
        if subject in untyped:
            dropped_triples += 1
            continue
        triple_index.setdefault(subject, []).append(Triple(subject, predicate, obj))

    snapshot = KbSnapshot(entities, hierarchy, surface_form_index, triple_index)
    logger.info(
        f"Loaded KB snapshot: {len(entities)} entities, {len(hierarchy.parent)} types, "
        f"{len(surface_form_index)} surface forms, "
        f"{sum(len(v) for v in triple_index.values())} triples "
        f"(dropped {dropped_forms} forms, {dropped_triples} triples of untyped entities)"
    )
    return snapshot


def write_snapshot(
    kb_dir: Path,
    entities: List[KbEntity],
    hierarchy: Dict[str, Optional[str]],
    surface_forms: List[tuple] = (),
    triples: List[Triple] = (),
):
    """Write a snapshot directory in the loader's format (fixtures, exports)."""
    kb_dir = Path(kb_dir)
    write_tsv(kb_dir / SNAPSHOT_FILES['entities'], (
        (e.entity_id, e.label, repr(float(e.popularity)), e.description) for e in entities
    ))
    write_tsv(kb_dir / SNAPSHOT_FILES['types'], (
        (e.entity_id, type_id) for e in entities for type_id in e.type_ids
    ))
    write_tsv(kb_dir / SNAPSHOT_FILES['hierarchy'], (
        (type_id, parent or "") for type_id, parent in hierarchy.items()
    ))
    write_tsv(kb_dir / SNAPSHOT_FILES['surface_forms'], surface_forms)
    write_tsv(kb_dir / SNAPSHOT_FILES['triples'], triples)
    return kb_dir
