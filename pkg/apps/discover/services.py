"""
Novel-entity discovery over the unlinked core mentions of linkable tables.

Dossiers aggregate every origin table of a mention; feature families turn a
dossier into a vector; the noise filter and a binary in-KB / out-of-KB
classifier (optionally preceded by an entity / not-an-entity model) give the
verdict.
"""

import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from apps.corpus.domain import Table, normalize_mention
from apps.corpus.services import core_mentions, identical_core_key, is_noise_mention
from apps.headmatch.domain import HeadingMatch
from apps.kb.domain import KbSnapshot
from apps.learn.domain import Dataset, TreeEnsembleModel
from apps.learn.services import predict
from apps.link.domain import LinkAssignment
from apps.resolve.domain import TypeDistribution
from apps.retrieve.domain import FIELD_CHOICES, SearchIndex
from apps.retrieve.services import build_index, search
from apps.sim.embeddings import TermEmbeddings
from apps.sim.services import edit_distance_norm, embedding_cosine, label_similarity
from core.exceptions import DataError, SchemaMismatchError
from core.tsv import format_score, read_tsv, write_tsv

from .domain import (
    ALL_DISCOVERY_FEATURES,
    FEATURE_FAMILIES,
    FEATURE_PRESETS,
    IN_KB,
    NOT_ENTITY,
    OUT_OF_KB,
    Discovery,
    MentionDossier,
    OriginTable,
    Verdict,
)

logger = logging.getLogger(__name__)

DISCOVERIES_HEADER = ('mention_key', 'verdict', 'score', 'n_tables', 'example_table_id')
WD_SWEEP_KS = (1, 2, 3, 4, 5, 10)


def feature_names(spec: str = 'oss') -> Tuple[str, ...]:
    """Feature names of a preset (``oss``, ``lin``, ``all``) or ``+``-joined family names."""
    families: List[str] = []
    for part in spec.split('+'):
        part = part.strip()
        if part in FEATURE_PRESETS:
            families.extend(FEATURE_PRESETS[part])
        elif part in FEATURE_FAMILIES:
            families.append(part)
        else:
            raise ValueError(f"Unknown discovery feature family {part!r}")
    names: List[str] = []
    for family in families:
        for name in FEATURE_FAMILIES[family]:
            if name not in names:
                names.append(name)
    return tuple(names)


# ------------------------------------------------------------------ #
# Dossiers                                                             #
# ------------------------------------------------------------------ #

def table_dossiers(
    table: Table,
    assignment: LinkAssignment,
    heading_match: Optional[HeadingMatch] = None,
) -> Dict[str, MentionDossier]:
    """Dossiers contributed by one table; empty unless the table is linkable."""
    if not assignment.is_linkable:
        return {}
    mentions = core_mentions(table)
    n_linked = len(assignment.links)
    header_key = normalize_mention(table.core_heading)
    matched = len(heading_match.matches) if heading_match else 0
    core_key = identical_core_key(table)

    occurrences: Counter = Counter()
    raw_forms: Dict[str, Counter] = {}
    for mention in mentions:
        if mention.row_index in assignment.links:
            continue
        occurrences[mention.key] += 1
        raw_forms.setdefault(mention.key, Counter())[mention.raw] += 1

    return {
        key: MentionDossier(
            key=key,
            raw_forms=raw_forms[key],
            tables={table.id: OriginTable(
                table_id=table.id,
                core_key=core_key,
                n_linked=n_linked,
                link_rate=n_linked / len(mentions),
                matched_headings=matched,
                year=table.context.last_edit_year,
                occurrences=count,
            )},
            appears_as_header=bool(header_key) and key == header_key,
        )
        for key, count in occurrences.items()
    }


def build_dossiers(
    tables: Iterable[Table],
    assignments: Mapping[str, LinkAssignment],
    heading_matches: Mapping[str, HeadingMatch] = None,
) -> Dict[str, MentionDossier]:
    heading_matches = heading_matches or {}
    dossiers: Dict[str, MentionDossier] = {}
    for table in tables:
        assignment = assignments.get(table.id)
        if assignment is None:
            continue
        for key, dossier in table_dossiers(table, assignment, heading_matches.get(table.id)).items():
            dossiers[key] = dossiers[key].merge(dossier) if key in dossiers else dossier
    logger.info(f"Built {len(dossiers)} mention dossiers")
    return dict(sorted(dossiers.items()))


# ------------------------------------------------------------------ #
# Features                                                             #
# ------------------------------------------------------------------ #

def aggregate(values: Sequence[float]) -> Dict[str, float]:
    if not values:
        return {'sum': 0.0, 'max': 0.0, 'min': 0.0, 'avg': 0.0, 'std': 0.0}
    array = np.asarray(values, dtype=np.float64)
    return {
        'sum': float(array.sum()),
        'max': float(array.max()),
        'min': float(array.min()),
        'avg': float(array.mean()),
        'std': float(array.std()),
    }


def origin_features(dossier: MentionDossier) -> Dict[str, float]:
    tables = [dossier.tables[t] for t in dossier.origin_table_ids]
    features = {
        'n_tables': float(dossier.n_tables),
        'identical_core_groups': float(dossier.identical_core_groups),
        'appears_as_header': float(dossier.appears_as_header),
    }
    for prefix, values in (
        ('linked', [t.n_linked for t in tables]),
        ('link_rate', [t.link_rate for t in tables]),
        ('matched_headings', [t.matched_headings for t in tables]),
    ):
        for name, value in aggregate(values).items():
            features[f'{prefix}_{name}'] = value
    return features


def representative_tables(dossier: MentionDossier, collapse_identical_cores: bool = True) -> List[str]:
    """Origin tables, keeping the smallest id of each identical-core group when collapsing."""
    if not collapse_identical_cores:
        return list(dossier.origin_table_ids)
    chosen: Dict[str, str] = {}
    for table_id in dossier.origin_table_ids:
        chosen.setdefault(dossier.tables[table_id].core_key, table_id)
    return sorted(chosen.values())


def med_features(
    dossier: MentionDossier,
    assignments: Mapping[str, LinkAssignment],
    kb: KbSnapshot,
    collapse_identical_cores: bool = True,
) -> Tuple[float, float, float, float]:
    """(max, sum, avg, min) of label similarity between linked mentions and their entities."""
    sims = []
    for table_id in representative_tables(dossier, collapse_identical_cores):
        assignment = assignments.get(table_id)
        if assignment is None:
            continue
        for row_index in sorted(assignment.links):
            link = assignment.links[row_index]
            sims.append(label_similarity(link.key, normalize_mention(kb.label(link.entity_id))))
    if not sims:
        return 0.0, 0.0, 0.0, 0.0
    return max(sims), sum(sims), sum(sims) / len(sims), min(sims)


def wd_feature(mention: str, index: SearchIndex, kb: KbSnapshot, k: int = 1) -> float:
    """Best label similarity between the mention and its top-k search candidates."""
    key = normalize_mention(mention)
    best = 0.0
    for candidate in search(index, mention, k):
        best = max(best, label_similarity(key, normalize_mention(kb.label(candidate.entity_id))))
    return best


def cooccurrence_types(
    dossier: MentionDossier,
    assignments: Mapping[str, LinkAssignment],
    kb: KbSnapshot,
) -> TypeDistribution:
    counts: Counter = Counter()
    for table_id in dossier.origin_table_ids:
        assignment = assignments.get(table_id)
        if assignment is None:
            continue
        for link in assignment.links.values():
            counts.update(kb.expanded_types(link.entity_id))
    return TypeDistribution.from_counts(counts)


def semantic_features(
    mention: str,
    dossier: MentionDossier,
    assignments: Mapping[str, LinkAssignment],
    index: SearchIndex,
    kb: KbSnapshot,
    emb: TermEmbeddings,
) -> Tuple[float, float, float]:
    """(neural, topical, lexical) against the rank-1 search candidate; zeros without one."""
    top = search(index, mention, 1)
    if not top:
        return 0.0, 0.0, 0.0
    entity_id = top[0].entity_id
    label = kb.label(entity_id)
    neural = embedding_cosine(mention, label, emb)
    entity_types = TypeDistribution.from_counts({t: 1.0 for t in kb.expanded_types(entity_id)})
    topical = cooccurrence_types(dossier, assignments, kb).cosine(entity_types)
    lexical = edit_distance_norm(normalize_mention(mention), normalize_mention(label))
    return neural, topical, lexical


def temporal_features(dossier: MentionDossier) -> Tuple[float, float, float, float]:
    """(slope, r_squared, usage_since_year, frequency) of the least-squares line over yearly counts."""
    usage = dossier.usage_years
    if not usage:
        return 0.0, 0.0, 0.0, 0.0
    years = np.asarray(list(usage), dtype=np.float64)
    counts = np.asarray(list(usage.values()), dtype=np.float64)
    since = float(years.min())
    if len(years) == 1:
        return 0.0, 0.0, since, 1.0
    dx = years - years.mean()
    dy = counts - counts.mean()
    slope = float((dx * dy).sum() / (dx * dx).sum())
    ss_tot = float((dy * dy).sum())
    if ss_tot == 0.0:
        r_squared = 0.0
    else:
        residuals = dy - slope * dx
        r_squared = 1.0 - float((residuals * residuals).sum()) / ss_tot
    return slope, r_squared, since, float(len(years))


def discovery_features(
    dossier: MentionDossier,
    assignments: Mapping[str, LinkAssignment],
    index: SearchIndex,
    wd_index: SearchIndex,
    kb: KbSnapshot,
    emb: TermEmbeddings,
    wd_k: int = 1,
    collapse_identical_cores: bool = True,
) -> Dict[str, float]:
    """Every feature of every family, keyed by name."""
    mention = dossier.canonical_form
    features = origin_features(dossier)
    med_max, med_sum, med_avg, med_min = med_features(dossier, assignments, kb, collapse_identical_cores)
    features.update(
        med_max=med_max, med_sum=med_sum, med_avg=med_avg, med_min=med_min,
        wd=wd_feature(mention, wd_index, kb, wd_k),
    )
    neural, topical, lexical = semantic_features(mention, dossier, assignments, index, kb, emb)
    features.update(neural=neural, topical=topical, lexical=lexical)
    slope, r_squared, since, frequency = temporal_features(dossier)
    features.update(slope=slope, r_squared=r_squared, usage_since_year=since, frequency=frequency)
    return {name: features[name] for name in ALL_DISCOVERY_FEATURES}


def vector_for(features: Mapping[str, float], schema: Sequence[str]) -> List[float]:
    missing = [name for name in schema if name not in features]
    if missing:
        raise SchemaMismatchError(f"Model expects unknown discovery features {missing}")
    return [features[name] for name in schema]


# ------------------------------------------------------------------ #
# Classification                                                       #
# ------------------------------------------------------------------ #

def classify_mention(
    model: TreeEnsembleModel,
    features: Mapping[str, float],
    noise_flag: bool,
    entity_model: Optional[TreeEnsembleModel] = None,
) -> Verdict:
    """Noise → not an entity; otherwise in-KB (0) vs out-of-KB (1) by tree vote.

    ``entity_model``, when given, votes 1 for not-an-entity before the binary step.
    """
    if noise_flag:
        return Verdict(NOT_ENTITY, 1.0)
    if entity_model is not None:
        label, score = predict(entity_model, vector_for(features, entity_model.schema))
        if label:
            return Verdict(NOT_ENTITY, score)
    label, score = predict(model, vector_for(features, model.schema))
    return Verdict(OUT_OF_KB if label else IN_KB, score)


def discover_mentions(
    dossiers: Mapping[str, MentionDossier],
    assignments: Mapping[str, LinkAssignment],
    index: SearchIndex,
    wd_index: SearchIndex,
    kb: KbSnapshot,
    emb: TermEmbeddings,
    model: TreeEnsembleModel,
    entity_model: Optional[TreeEnsembleModel] = None,
    wd_k: int = 1,
    collapse_identical_cores: bool = True,
    min_tables: int = 1,
) -> List[Discovery]:
    results = []
    skipped = 0
    for key in sorted(dossiers):
        dossier = dossiers[key]
        if dossier.n_tables < min_tables:
            skipped += 1
            continue
        noise = is_noise_mention(dossier.canonical_form)
        features = {} if noise else discovery_features(
            dossier, assignments, index, wd_index, kb, emb, wd_k, collapse_identical_cores
        )
        verdict = classify_mention(model, features, noise, entity_model)
        results.append(Discovery(
            mention_key=key,
            verdict=verdict.label,
            score=verdict.score,
            n_tables=dossier.n_tables,
            example_table_id=dossier.origin_table_ids[0],
        ))
    counts = Counter(d.verdict for d in results)
    logger.info(
        f"Classified {len(results)} mentions: {counts[IN_KB]} in KB, {counts[OUT_OF_KB]} out of KB, "
        f"{counts[NOT_ENTITY]} not entities ({skipped} below min_tables)"
    )
    return results


def build_discovery_dataset(
    features_by_key: Mapping[str, Mapping[str, float]],
    gold: Mapping[str, str],
    schema: Sequence[str] = None,
    target: str = OUT_OF_KB,
) -> Dataset:
    """Gold-labelled mentions; positive iff the gold verdict equals ``target``.

    With the default target not-an-entity mentions are left out, which gives
    the binary in-KB / out-of-KB task; ``target=NOT_ENTITY`` keeps every
    mention for the entity model.
    """
    schema = tuple(schema or feature_names('oss'))
    data = Dataset(schema)
    for key in sorted(gold):
        if key not in features_by_key:
            continue
        verdict = gold[key]
        if target == OUT_OF_KB and verdict == NOT_ENTITY:
            continue
        data.add(vector_for(features_by_key[key], schema), int(verdict == target), group=key, key=key)
    logger.info(f"Discovery dataset ({target}): {len(data)} gold mentions")
    return data


def wd_accuracy(scores: Mapping[str, float], gold: Mapping[str, str]) -> float:
    """Accuracy of the best threshold rule ``out_of_kb iff wd < t`` over the observed WD values."""
    keys = [k for k in sorted(gold) if k in scores and gold[k] in (IN_KB, OUT_OF_KB)]
    if not keys:
        return 0.0
    best = 0.0
    for threshold in sorted({scores[k] for k in keys} | {float('inf')}):
        correct = sum(1 for k in keys if (scores[k] < threshold) == (gold[k] == OUT_OF_KB))
        best = max(best, correct / len(keys))
    return best


def wd_sweep(
    mentions: Mapping[str, str],
    gold: Mapping[str, str],
    kb: KbSnapshot,
    ks: Sequence[int] = WD_SWEEP_KS,
    fields: Sequence[str] = FIELD_CHOICES,
    **index_options,
) -> Dict[Tuple[str, int], float]:
    """WD accuracy for every (fields, k); ``mentions`` maps key to the text searched."""
    results = {}
    for field_choice in fields:
        index = build_index(kb, field_choice, **index_options)
        for k in ks:
            scores = {key: wd_feature(text, index, kb, k) for key, text in mentions.items()}
            results[(field_choice, k)] = wd_accuracy(scores, gold)
    return results


# ------------------------------------------------------------------ #
# Stage file                                                           #
# ------------------------------------------------------------------ #

def write_discoveries(path: Path, discoveries: Iterable[Discovery]) -> int:
    rows = (
        (d.mention_key, d.verdict, format_score(d.score), d.n_tables, d.example_table_id)
        for d in discoveries
    )
    return write_tsv(path, rows, header=DISCOVERIES_HEADER)


def read_discoveries(path: Path) -> Dict[str, Discovery]:
    result = {}
    try:
        for line_no, fields in read_tsv(path, skip_header=True):
            if len(fields) != len(DISCOVERIES_HEADER):
                raise DataError(f"{path}, line {line_no}: expected {len(DISCOVERIES_HEADER)} columns")
            key, verdict, score, n_tables, example = fields
            result[key] = Discovery(key, verdict, float(score), int(n_tables), example)
    except OSError as exc:
        raise DataError(f"Could not read discoveries {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"Malformed discoveries file {path}: {exc}") from exc
    return result
