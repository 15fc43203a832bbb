"""
Local candidate search: BM25-style keyword relevance fused with popularity.

score(q, e) = bm25(q, e) * (1 + lambda * ln(1 + popularity(e)))
Ties break by ascending entity_id so rankings are reproducible.
"""

import logging
import math
import pickle
import re
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, List

from apps.corpus.domain import normalize_mention
from apps.kb.domain import KbSnapshot
from core.exceptions import DataError

from .domain import (
    FIELD_CHOICES,
    FIELDS_TITLE_CONTENT,
    INDEX_FORMAT,
    INDEX_VERSION,
    Candidate,
    SearchIndex,
)

logger = logging.getLogger(__name__)

_WORD = re.compile(r"\w+", re.UNICODE)

TITLE_WEIGHT = 1.0


def tokenize(text: str) -> List[str]:
    return _WORD.findall(normalize_mention(text))


def build_index(
    kb: KbSnapshot,
    fields: str = 'title',
    k1: float = 1.2,
    b: float = 0.75,
    popularity_lambda: float = 0.3,
    content_weight: float = 0.3,
) -> SearchIndex:
    """Title fields are the label and every surface form; content is the description."""
    if fields not in FIELD_CHOICES:
        raise ValueError(f"Unknown search fields {fields!r}")

    titles: Dict[str, set] = defaultdict(set)
    for entity_id, entity in kb.entities.items():
        titles[entity_id].add(normalize_mention(entity.label))
    for form, entity_ids in kb.surface_form_index.items():
        for entity_id in entity_ids:
            titles[entity_id].add(form)

    postings: Dict[str, List] = defaultdict(list)
    doc_lengths: Dict[str, float] = {}
    for entity_id in sorted(kb.entities):
        tf: Counter = Counter()
        for title in sorted(titles[entity_id]):
            for token in tokenize(title):
                tf[token] += TITLE_WEIGHT
        if fields == FIELDS_TITLE_CONTENT:
            for token in tokenize(kb.entities[entity_id].description):
                tf[token] += content_weight
        doc_lengths[entity_id] = float(sum(tf.values()))
        for token in sorted(tf):
            postings[token].append((entity_id, tf[token]))

    index = SearchIndex(
        fields=fields,
        postings=dict(postings),
        doc_lengths=doc_lengths,
        popularity={e: kb.entities[e].popularity for e in sorted(kb.entities)},
        avg_doc_length=(sum(doc_lengths.values()) / len(doc_lengths)) if doc_lengths else 0.0,
        k1=k1,
        b=b,
        popularity_lambda=popularity_lambda,
    )
    logger.info(f"Built {fields} index over {index.n_docs} entities, {len(index.postings)} terms")
    return index


def _idf(index: SearchIndex, token: str) -> float:
    df = index.document_frequency(token)
    if df == 0:
        return 0.0
    return math.log((index.n_docs - df + 0.5) / (df + 0.5) + 1.0)


def relevance_scores(index: SearchIndex, query: str) -> Dict[str, float]:
    scores: Dict[str, float] = defaultdict(float)
    avg = max(index.avg_doc_length, 1e-9)
    for token in sorted(set(tokenize(query))):
        idf = _idf(index, token)
        for entity_id, tf in index.postings.get(token, ()):
            length_norm = 1.0 - index.b + index.b * index.doc_lengths[entity_id] / avg
            scores[entity_id] += idf * tf * (index.k1 + 1.0) / (tf + index.k1 * length_norm)
    return scores


def search(index: SearchIndex, query: str, k: int = 10) -> List[Candidate]:
    if k < 1:
        raise ValueError("k must be at least 1")
    if not query or not query.strip():
        return []
    fused = []
    for entity_id, relevance in relevance_scores(index, query).items():
        boost = 1.0 + index.popularity_lambda * math.log1p(index.popularity.get(entity_id, 0.0))
        fused.append((relevance * boost, entity_id))
    fused.sort(key=lambda item: (-item[0], item[1]))
    return [
        Candidate(entity_id=entity_id, rank=rank, retrieval_score=score)
        for rank, (score, entity_id) in enumerate(fused[:k], start=1)
    ]


def save_index(index: SearchIndex, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {'format': INDEX_FORMAT, 'version': INDEX_VERSION, 'index': index}
    with open(path, "wb") as handle:
        pickle.dump(payload, handle, protocol=4)
    return path


def load_index(path: Path) -> SearchIndex:
    try:
        with open(path, "rb") as handle:
            payload = pickle.load(handle)
    except (OSError, pickle.UnpicklingError, EOFError) as exc:
        raise DataError(f"Could not read search index {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get('format') != INDEX_FORMAT:
        raise DataError(f"{path} is not a search index file")
    if payload.get('version') != INDEX_VERSION:
        raise DataError(f"{path} has index version {payload.get('version')}, expected {INDEX_VERSION}")
    return payload['index']
