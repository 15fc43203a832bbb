"""
Term embeddings loaded from the plain-text word2vec format:
first line ``<vocab_size> <dimension>``, then ``token v1 ... vd`` per line.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from apps.corpus.domain import normalize_mention
from core.exceptions import DataError

logger = logging.getLogger(__name__)


class TermEmbeddings:

    def __init__(self, dimension: int, vectors: Dict[str, np.ndarray]):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        for token, vector in vectors.items():
            if vector.shape != (dimension,):
                raise ValueError(f"vector for {token!r} has shape {vector.shape}, expected ({dimension},)")
        self.dimension = dimension
        self.vectors = vectors

    @classmethod
    def empty(cls, dimension: int = 1) -> "TermEmbeddings":
        return cls(dimension, {})

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def tokens(self, text: str) -> List[str]:
        return normalize_mention(text).split()

    def token_matrix(self, text: str) -> Optional[np.ndarray]:
        """Vectors of the in-vocabulary tokens of ``text`` (rows), or None."""
        rows = [self.vectors[t] for t in self.tokens(text) if t in self.vectors]
        if not rows:
            return None
        return np.vstack(rows)

    def mean_vector(self, text: str) -> Optional[np.ndarray]:
        matrix = self.token_matrix(text)
        if matrix is None:
            return None
        return matrix.mean(axis=0)


def load_embeddings(path: Path) -> TermEmbeddings:
    vectors: Dict[str, np.ndarray] = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline().split()
            if len(header) != 2:
                raise DataError(f"{path}: first line must be '<vocab_size> <dimension>'")
            dimension = int(header[1])
            for line_no, line in enumerate(handle, start=2):
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                if len(parts) != dimension + 1:
                    raise DataError(f"{path}, line {line_no}: expected {dimension} values")
                token = normalize_mention(parts[0])
                vectors[token] = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
    except OSError as exc:
        raise DataError(f"Could not read embeddings {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"Malformed embeddings file {path}: {exc}") from exc
    logger.info(f"Loaded {len(vectors)} term vectors of dimension {dimension}")
    return TermEmbeddings(dimension, vectors)
