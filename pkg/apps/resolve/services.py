"""
Entity resolution over the unlinked mentions that discovery keeps.

Two occurrences of the same mention are resolved by the type distributions
of their tables; two different mentions by a pairwise classifier over string,
mention-embedding and table-similarity features (or the embedding cosine
alone). Positive decisions are closed transitively into clusters.
Mentions judged to be in the KB are attached to an entity id instead.
"""

import json
import logging
from collections import Counter, defaultdict
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import expit

from apps.corpus.domain import Table, normalize_mention
from apps.corpus.services import core_mentions
from apps.discover.domain import IN_KB, OUT_OF_KB, Discovery
from apps.kb.domain import KbSnapshot
from apps.learn.domain import Dataset, TreeEnsembleModel
from apps.learn.services import predict
from apps.link.domain import LinkAssignment
from apps.retrieve.domain import SearchIndex
from apps.retrieve.services import search
from apps.sim.services import edit_distance_norm, edit_similarity, jaccard_terms, letter_overlap, substring_indicator
from core.exceptions import DataError, SchemaMismatchError, TrainingError
from core.tsv import read_tsv, write_tsv

from .domain import (
    EMBEDDINGS_FORMAT,
    EMBEDDINGS_VERSION,
    ALIAS_SEARCH,
    ALIAS_SURFACE_FORM,
    SURFACE_FEATURE_FAMILIES,
    SURFACE_MODE_EMBEDDING,
    SURFACE_MODE_MODEL,
    THRESHOLD_GRID,
    EntityAlias,
    EntityCluster,
    MentionEmbeddings,
    Occurrence,
    TableProfile,
    TypeDistribution,
)

logger = logging.getLogger(__name__)

DEFAULT_THETA = 0.95
DEFAULT_EMBEDDING_THRESHOLD = 0.95

Pair = Tuple[Occurrence, Occurrence]


def surface_feature_names(spec: str = 'string+table') -> Tuple[str, ...]:
    """Feature names for a '+'-joined list of surface families.

    The default combines the string and table families and leaves out
    mention_cosine: the embedding family is scored on its own by the
    threshold rule of SURFACE_MODE_EMBEDDING, and string+table is the
    strongest combined classifier on the resolution benchmark. Pass
    'string+table+embedding' to train with the cosine as a feature.
    """
    names: List[str] = []
    for part in spec.split('+'):
        part = part.strip()
        if part not in SURFACE_FEATURE_FAMILIES:
            raise ValueError(f"Unknown surface feature family {part!r}")
        names.extend(n for n in SURFACE_FEATURE_FAMILIES[part] if n not in names)
    return tuple(names)


def ordered_pair(a: Occurrence, b: Occurrence) -> Pair:
    return (a, b) if a <= b else (b, a)


# ------------------------------------------------------------------ #
# Type resolution                                                      #
# ------------------------------------------------------------------ #

def table_type_distribution(links: Mapping[int, str], kb: KbSnapshot) -> TypeDistribution:
    """Ancestor-expanded type counts over the linked entities, L2-normalized."""
    counts: Counter = Counter()
    for entity_id in links.values():
        counts.update(kb.expanded_types(entity_id))
    return TypeDistribution.from_counts(counts)


def type_resolve(h1: TypeDistribution, h2: TypeDistribution, theta: float = DEFAULT_THETA) -> bool:
    """Same entity iff both distributions exist and their cosine reaches ``theta``."""
    if h1.is_empty or h2.is_empty:
        return False
    return h1.cosine(h2) >= theta


def build_profiles(
    tables: Iterable[Table],
    assignments: Mapping[str, LinkAssignment],
    kb: KbSnapshot,
) -> Dict[str, TableProfile]:
    profiles = {}
    for table in tables:
        assignment = assignments.get(table.id)
        links = {row: link.entity_id for row, link in assignment.links.items()} if assignment else {}
        profiles[table.id] = TableProfile(table, links, table_type_distribution(links, kb))
    return profiles


# ------------------------------------------------------------------ #
# Mention embeddings                                                   #
# ------------------------------------------------------------------ #

def mention_sentences(tables: Iterable[Table]) -> List[List[str]]:
    """One sentence per table: its core-column mention keys in row order."""
    return [[m.key for m in core_mentions(t)] for t in sorted(tables, key=lambda t: t.id)]


def train_mention_embeddings(
    tables: Iterable[Table],
    dimension: int = 64,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    min_count: int = 2,
    seed: int = 13,
    learning_rate: float = 0.025,
    min_learning_rate: float = 0.0001,
) -> MentionEmbeddings:
    """Skip-gram with negative sampling over core-column mention sequences.

    Mentions seen fewer than ``min_count`` times get no vector and are removed
    from the sentences before context windows are taken. Negatives are drawn
    from the unigram distribution raised to 0.75; the learning rate decays
    linearly over all training pairs.
    """
    if dimension < 1 or window < 1 or negatives < 0 or epochs < 1:
        raise TrainingError("mention2vec dimension, window and epochs must be positive")
    sentences = mention_sentences(tables)
    counts = Counter(key for sentence in sentences for key in sentence)
    vocab = sorted((k for k, c in counts.items() if c >= min_count), key=lambda k: (-counts[k], k))
    metadata = {
        'seed': seed, 'epochs': epochs, 'window': window, 'negatives': negatives,
        'min_count': min_count, 'vocab_size': len(vocab),
    }
    if not vocab:
        logger.warning("No mention reaches min_count; mention embeddings are empty")
        return MentionEmbeddings(dimension, {}, metadata)

    ids = {key: i for i, key in enumerate(vocab)}
    encoded = [[ids[k] for k in sentence if k in ids] for sentence in sentences]
    pairs = [
        (centre, sentence[j])
        for sentence in encoded
        for i, centre in enumerate(sentence)
        for j in range(max(0, i - window), min(len(sentence), i + window + 1))
        if j != i
    ]

    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-0.5 / dimension, 0.5 / dimension, size=(len(vocab), dimension))
    w_out = np.zeros((len(vocab), dimension))
    noise = np.array([counts[k] for k in vocab], dtype=np.float64) ** 0.75
    noise /= noise.sum()

    total = max(1, len(pairs) * epochs)
    step = 0
    for epoch in range(epochs):
        for centre, context in pairs:
            lr = max(min_learning_rate, learning_rate * (1.0 - step / total))
            step += 1
            targets = np.concatenate(([context], rng.choice(len(vocab), size=negatives, p=noise)))
            labels = np.zeros(len(targets))
            labels[0] = 1.0
            v = w_in[centre]
            gradient = (labels - expit(w_out[targets] @ v)) * lr
            update_in = gradient @ w_out[targets]
            np.add.at(w_out, targets, np.outer(gradient, v))
            w_in[centre] += update_in
        logger.debug(f"mention2vec epoch {epoch + 1}/{epochs} done")

    if not np.all(np.isfinite(w_in)):
        raise TrainingError("mention2vec training diverged")
    logger.info(f"Trained mention embeddings for {len(vocab)} mentions over {len(pairs)} pairs")
    return MentionEmbeddings(dimension, {key: w_in[i].copy() for key, i in ids.items()}, metadata)


def embeddings_bytes(embeddings: MentionEmbeddings) -> bytes:
    return json.dumps(embeddings.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_mention_embeddings(embeddings: MentionEmbeddings, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(embeddings_bytes(embeddings))
    return path


def load_mention_embeddings(path: Path) -> MentionEmbeddings:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"Could not read mention embeddings {path}: {exc}") from exc
    if payload.get('format') != EMBEDDINGS_FORMAT or payload.get('version') != EMBEDDINGS_VERSION:
        raise DataError(f"{path} is not a version {EMBEDDINGS_VERSION} mention embedding file")
    try:
        return MentionEmbeddings.from_dict(payload)
    except (KeyError, ValueError) as exc:
        raise DataError(f"Malformed mention embeddings {path}: {exc}") from exc


# ------------------------------------------------------------------ #
# Table similarity                                                     #
# ------------------------------------------------------------------ #

def matching_score(weights: np.ndarray) -> float:
    """Maximum-weight bipartite matching over ``weights`` divided by its larger side."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return float(weights[rows, cols].sum()) / max(weights.shape)


def heading_bipartite_similarity(h1: Sequence[str], h2: Sequence[str]) -> float:
    left = [normalize_mention(h) for h in h1]
    right = [normalize_mention(h) for h in h2]
    if not left or not right:
        return 0.0
    weights = np.array([[edit_similarity(a, b) for b in right] for a in left])
    return matching_score(weights)


def _set_jaccard(a: Set, b: Set) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def profile_similarity(p1: TableProfile, p2: TableProfile) -> Dict[str, float]:
    t1, t2 = p1.table, p2.table
    return {
        'caption_jaccard': jaccard_terms(t1.context.caption, t2.context.caption),
        'title_jaccard': jaccard_terms(t1.context.page_title, t2.context.page_title),
        'text_jaccard': jaccard_terms(t1.context.surrounding_text, t2.context.surrounding_text),
        'heading_jaccard': _set_jaccard(
            {normalize_mention(h) for h in t1.headings if normalize_mention(h)},
            {normalize_mention(h) for h in t2.headings if normalize_mention(h)},
        ),
        'entity_jaccard': _set_jaccard(set(p1.entity_set), set(p2.entity_set)),
        'type_cosine': p1.distribution.cosine(p2.distribution),
        'heading_bipartite': heading_bipartite_similarity(t1.headings, t2.headings),
    }


def table_similarity_features(
    t1: Table,
    t2: Table,
    links1: Mapping[int, str],
    links2: Mapping[int, str],
    kb: KbSnapshot,
) -> Dict[str, float]:
    return profile_similarity(
        TableProfile(t1, links1, table_type_distribution(links1, kb)),
        TableProfile(t2, links2, table_type_distribution(links2, kb)),
    )


# ------------------------------------------------------------------ #
# Surface-form resolution                                              #
# ------------------------------------------------------------------ #

def surface_features(
    a: Occurrence,
    b: Occurrence,
    profiles: Mapping[str, TableProfile],
    memb: MentionEmbeddings,
) -> Dict[str, float]:
    """Every surface feature of the pair; the pair is sorted first, so (a, b) and (b, a) agree."""
    a, b = ordered_pair(a, b)
    features = {
        'edit': edit_similarity(a.key, b.key),
        'letter': letter_overlap(a.key, b.key),
        'jaccard': jaccard_terms(a.key, b.key),
        'substring': float(substring_indicator(a.key, b.key)),
        'mention_cosine': memb.cosine(a.key, b.key),
    }
    features.update(profile_similarity(profiles[a.table_id], profiles[b.table_id]))
    return features


def _vector(features: Mapping[str, float], schema: Sequence[str]) -> List[float]:
    missing = [name for name in schema if name not in features]
    if missing:
        raise SchemaMismatchError(f"Model expects unknown surface features {missing}")
    return [features[name] for name in schema]


def surface_resolve(
    a: Occurrence,
    b: Occurrence,
    profiles: Mapping[str, TableProfile],
    memb: MentionEmbeddings,
    model: Optional[TreeEnsembleModel] = None,
    mode: str = SURFACE_MODE_MODEL,
    threshold: float = DEFAULT_EMBEDDING_THRESHOLD,
) -> bool:
    if mode == SURFACE_MODE_EMBEDDING:
        return memb.cosine(a.key, b.key) >= threshold
    if model is None:
        raise TrainingError("Surface resolution in model mode needs a trained model")
    label, _ = predict(model, _vector(surface_features(a, b, profiles, memb), model.schema))
    return bool(label)


def resolve_pair(
    a: Occurrence,
    b: Occurrence,
    profiles: Mapping[str, TableProfile],
    memb: MentionEmbeddings,
    model: Optional[TreeEnsembleModel] = None,
    mode: str = SURFACE_MODE_MODEL,
    theta: float = DEFAULT_THETA,
    threshold: float = DEFAULT_EMBEDDING_THRESHOLD,
) -> bool:
    """Type resolution for two occurrences of one mention, surface resolution otherwise."""
    if a.key == b.key:
        if a.table_id == b.table_id:
            return True
        return type_resolve(profiles[a.table_id].distribution, profiles[b.table_id].distribution, theta)
    return surface_resolve(a, b, profiles, memb, model, mode, threshold)


def candidate_key_pairs(keys: Iterable[str], window: int = 20, neighbours: int = 5) -> Set[Tuple[str, str]]:
    """Alphabetical blocking: each key keeps its closest ``neighbours`` by edit distance within ``window``."""
    ordered = sorted(set(keys))
    pairs = set()
    for i, key in enumerate(ordered):
        nearby = ordered[max(0, i - window):i] + ordered[i + 1:i + window + 1]
        closest = sorted(nearby, key=lambda other: (edit_distance_norm(key, other), other))[:neighbours]
        pairs.update(tuple(sorted((key, other))) for other in closest)
    return pairs


def candidate_pairs(
    occurrences: Iterable[Occurrence],
    window: int = 20,
    neighbours: int = 5,
) -> List[Pair]:
    """Same-key pairs across tables plus occurrence pairs of blocked key pairs."""
    by_key: Dict[str, List[Occurrence]] = defaultdict(list)
    for occurrence in sorted(set(occurrences)):
        by_key[occurrence.key].append(occurrence)
    pairs = set()
    for members in by_key.values():
        pairs.update(ordered_pair(a, b) for a, b in combinations(members, 2))
    for left, right in candidate_key_pairs(by_key, window, neighbours):
        pairs.update(ordered_pair(a, b) for a in by_key[left] for b in by_key[right])
    return sorted(pairs)


def tune_embedding_threshold(
    cosines: Sequence[float],
    labels: Sequence[int],
    grid: Sequence[float] = THRESHOLD_GRID,
) -> Tuple[float, float]:
    """(threshold, accuracy) of the best grid point; ties go to the lower threshold."""
    if not labels:
        raise TrainingError("Cannot tune the embedding threshold without labelled pairs")
    cos = np.asarray(cosines, dtype=np.float64)
    gold = np.asarray(labels, dtype=bool)
    best = (grid[0], -1.0)
    for threshold in grid:
        score = float(np.mean((cos >= threshold) == gold))
        if score > best[1]:
            best = (threshold, score)
    return best


def build_surface_dataset(
    gold: Mapping[tuple, bool],
    profiles: Mapping[str, TableProfile],
    memb: MentionEmbeddings,
    schema: Sequence[str] = None,
) -> Dataset:
    """Labelled pairs from resolution gold; pairs naming unknown tables are skipped."""
    schema = tuple(schema or surface_feature_names())
    data = Dataset(schema)
    skipped = 0
    for (left, right), same in sorted(gold.items()):
        a, b = Occurrence(*left), Occurrence(*right)
        if a.table_id not in profiles or b.table_id not in profiles:
            skipped += 1
            continue
        features = surface_features(a, b, profiles, memb)
        data.add(
            _vector(features, schema),
            int(same),
            group=f"{a.table_id}|{b.table_id}",
            key=f"{a.key}|{a.table_id}|{b.key}|{b.table_id}",
        )
    if skipped:
        logger.warning(f"Skipped {skipped} resolution pairs referring to unknown tables")
    logger.info(f"Surface dataset: {len(data)} labelled pairs")
    return data


# ------------------------------------------------------------------ #
# Clustering                                                           #
# ------------------------------------------------------------------ #

def cluster(
    occurrences: Iterable[Occurrence],
    positives: Iterable[Pair],
    profiles: Mapping[str, TableProfile],
    raw_forms: Mapping[Occurrence, Counter],
    kb: Optional[KbSnapshot] = None,
) -> List[EntityCluster]:
    """Connected components of the positive-pair graph, typed by the summed table distributions.

    With ``kb`` given, weight ties between a type and its ancestors go to the most specific type.
    """
    depth = kb.hierarchy.depth if kb is not None else None
    nodes = sorted(set(occurrences))
    if not nodes:
        return []
    index = {occurrence: i for i, occurrence in enumerate(nodes)}
    edges = [(index[a], index[b]) for a, b in positives if a in index and b in index]
    rows = np.array([e[0] for e in edges], dtype=np.int64)
    cols = np.array([e[1] for e in edges], dtype=np.int64)
    graph = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, component = connected_components(graph, directed=False)

    groups: Dict[int, List[Occurrence]] = defaultdict(list)
    for occurrence, label in zip(nodes, component):
        groups[label].append(occurrence)

    clusters = []
    for members in sorted(groups.values()):
        forms: Counter = Counter()
        types: Counter = Counter()
        table_ids = sorted({m.table_id for m in members})
        for member in members:
            forms.update(raw_forms.get(member, Counter({member.key: 1})))
        for table_id in table_ids:
            profile = profiles.get(table_id)
            if profile is not None:
                types.update(profile.distribution.as_dict())
        canonical = min(forms.items(), key=lambda item: (-item[1], item[0]))[0]
        clusters.append(EntityCluster(
            members=members,
            canonical=canonical,
            assigned_type=TypeDistribution.from_counts(types).dominant_type(depth),
            provenance=table_ids,
        ))
    return clusters


def resolvable_occurrences(
    assignments: Iterable[LinkAssignment],
    discoveries: Mapping[str, Discovery],
    verdicts: Sequence[str] = (OUT_OF_KB,),
) -> Dict[Occurrence, Counter]:
    """Unlinked occurrences in linkable tables whose mention has one of ``verdicts``."""
    occurrences: Dict[Occurrence, Counter] = defaultdict(Counter)
    for assignment in assignments:
        if not assignment.is_linkable:
            continue
        for mention in assignment.unlinked():
            discovery = discoveries.get(mention.key)
            if discovery is not None and discovery.verdict in verdicts:
                occurrences[Occurrence(mention.key, assignment.table_id)][mention.raw] += 1
    return dict(occurrences)


def resolve_mentions(
    profiles: Mapping[str, TableProfile],
    kb: KbSnapshot,
    assignments: Iterable[LinkAssignment],
    discoveries: Mapping[str, Discovery],
    memb: MentionEmbeddings,
    model: Optional[TreeEnsembleModel] = None,
    mode: str = SURFACE_MODE_MODEL,
    theta: float = DEFAULT_THETA,
    threshold: float = DEFAULT_EMBEDDING_THRESHOLD,
    verdicts: Sequence[str] = (OUT_OF_KB,),
    window: int = 20,
    neighbours: int = 5,
) -> List[EntityCluster]:
    occurrences = resolvable_occurrences(assignments, discoveries, verdicts)
    pairs = candidate_pairs(occurrences, window, neighbours)
    positives = [
        (a, b) for a, b in pairs
        if resolve_pair(a, b, profiles, memb, model, mode, theta, threshold)
    ]
    clusters = cluster(occurrences, positives, profiles, occurrences, kb)
    logger.info(
        f"Resolved {len(occurrences)} occurrences over {len(pairs)} candidate pairs "
        f"({len(positives)} positive) into {len(clusters)} clusters"
    )
    return clusters


def write_clusters(path: Path, clusters: Iterable[EntityCluster]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for entity_cluster in clusters:
            handle.write(json.dumps(entity_cluster.to_record(), ensure_ascii=False, sort_keys=True))
            handle.write("\n")
            count += 1
    return count


def read_clusters(path: Path) -> List[EntityCluster]:
    clusters = []
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                record = json.loads(line)
                clusters.append(EntityCluster(
                    members=[Occurrence(key, table_id) for key, table_id in record['members']],
                    canonical=record['canonical'],
                    assigned_type=record.get('type'),
                    provenance=list(record.get('provenance', [])),
                ))
    except OSError as exc:
        raise DataError(f"Could not read clusters {path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"Malformed cluster file {path}, line {line_no}: {exc}") from exc
    return clusters


# ------------------------------------------------------------------ #
# In-KB aliases                                                        #
# ------------------------------------------------------------------ #

ALIASES_HEADER = ('mention_key', 'entity_id', 'source', 'n_tables')


def alias_mention(key: str, index: SearchIndex, kb: KbSnapshot) -> Optional[Tuple[str, str]]:
    """Entity id and source for one mention: a surface form naming a single
    entity, else the rank-1 search hit, else None."""
    named = kb.surface_lookup(key)
    if len(named) == 1:
        return named[0], ALIAS_SURFACE_FORM
    hits = search(index, key, k=1)
    if hits:
        return hits[0].entity_id, ALIAS_SEARCH
    return None


def alias_mentions(
    discoveries: Mapping[str, Discovery],
    index: SearchIndex,
    kb: KbSnapshot,
    verdicts: Sequence[str] = (IN_KB,),
) -> List[EntityAlias]:
    """Attach every mention with one of ``verdicts`` to a KB entity."""
    aliases = []
    unmatched = 0
    for key in sorted(discoveries):
        discovery = discoveries[key]
        if discovery.verdict not in verdicts:
            continue
        found = alias_mention(key, index, kb)
        if found is None:
            unmatched += 1
            continue
        entity_id, source = found
        aliases.append(EntityAlias(key, entity_id, source, discovery.n_tables))
    logger.info(f"Attached {len(aliases)} in-KB mentions to entities, {unmatched} without a match")
    return aliases


def write_aliases(path: Path, aliases: Iterable[EntityAlias]) -> int:
    rows = [(a.mention_key, a.entity_id, a.source, a.n_tables) for a in aliases]
    return write_tsv(path, rows, header=ALIASES_HEADER)


def read_aliases(path: Path) -> List[EntityAlias]:
    aliases = []
    try:
        for line_no, fields in read_tsv(path, skip_header=True):
            if len(fields) != len(ALIASES_HEADER):
                raise DataError(f"{path}, line {line_no}: expected {len(ALIASES_HEADER)} columns")
            key, entity_id, source, n_tables = fields
            aliases.append(EntityAlias(key, entity_id, source, int(n_tables)))
    except OSError as exc:
        raise DataError(f"Could not read aliases {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"Malformed aliases file {path}: {exc}") from exc
    return aliases
