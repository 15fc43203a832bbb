"""
Pairwise text similarity: the four lexical measures used for mention/label
comparison, embedding cosine, and the soft-match kernel ``phi``.
"""

import re
from typing import Optional

import numpy as np
from rapidfuzz.distance import Levenshtein

from apps.corpus.domain import normalize_mention

from .embeddings import TermEmbeddings

_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def edit_distance_norm(a: str, b: str) -> float:
    """Levenshtein distance over the longer length; 0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return Levenshtein.distance(a, b) / longest


def edit_similarity(a: str, b: str) -> float:
    return 1.0 - edit_distance_norm(a, b)


def letter_overlap(a: str, b: str) -> float:
    """Shared distinct characters over the longer length."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return len(set(a) & set(b)) / longest


def terms(text: str) -> set:
    return set(normalize_mention(text).split())


def jaccard_terms(a: str, b: str) -> float:
    left, right = terms(a), terms(b)
    union = left | right
    if not union:
        return 0.0
    return len(left & right) / len(union)


def substring_indicator(a: str, b: str) -> int:
    left, right = normalize_mention(a), normalize_mention(b)
    if not left or not right:
        return 0
    return int(left in right or right in left)


def label_similarity(a: str, b: str) -> float:
    """Unweighted mean of the four lexical measures, as one similarity in [0, 1]."""
    return (
        edit_similarity(a, b)
        + letter_overlap(a, b)
        + jaccard_terms(a, b)
        + substring_indicator(a, b)
    ) / 4.0


def type_label(identifier: str) -> str:
    """``dbo:SoccerClub`` → ``soccer club``; ``populationTotal`` → ``population total``."""
    tail = re.split(r"[/#:]", identifier)[-1]
    spaced = _CAMEL_BOUNDARY.sub(" ", tail).replace("_", " ")
    return normalize_mention(spaced)


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def vector_cosine(u: Optional[np.ndarray], v: Optional[np.ndarray]) -> float:
    if u is None or v is None:
        return 0.0
    return _cosine(u, v)


def embedding_cosine(a: str, b: str, emb: TermEmbeddings) -> float:
    """Cosine of mean token vectors; 0 when either side is fully out of vocabulary."""
    return vector_cosine(emb.mean_vector(a), emb.mean_vector(b))


def soft_match_phi(query: str, doc: str, emb: TermEmbeddings) -> float:
    """Mean over query tokens of the best clamped cosine against any doc token.

    Out-of-vocabulary query tokens contribute 0.
    """
    query_tokens = emb.tokens(query)
    q = emb.token_matrix(query)
    d = emb.token_matrix(doc)
    if not query_tokens or q is None or d is None:
        return 0.0
    q_norm = np.linalg.norm(q, axis=1, keepdims=True)
    d_norm = np.linalg.norm(d, axis=1, keepdims=True)
    q = np.divide(q, q_norm, out=np.zeros_like(q), where=q_norm > 0)
    d = np.divide(d, d_norm, out=np.zeros_like(d), where=d_norm > 0)
    best = np.clip(q @ d.T, 0.0, 1.0).max(axis=1)
    return float(min(1.0, best.sum() / len(query_tokens)))
