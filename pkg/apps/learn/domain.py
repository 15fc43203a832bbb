"""
Training data and the serializable tree-ensemble model.

Dataset          : ordered feature schema plus (vector, label, group, key) rows.
DecisionTree     : flat node arrays; feature -1 marks a leaf.
TreeEnsembleModel: bagged trees, schema, seed, config, Gini importances.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from core.exceptions import SchemaMismatchError

MODEL_FORMAT = 'tablekb-tree-ensemble'
MODEL_VERSION = 1
LEAF = -1


@dataclass
class LearnerConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    seed: int = 13

    @classmethod
    def from_settings(cls, **overrides) -> "LearnerConfig":
        defaults = settings.PIPELINE_DEFAULTS
        values = {
            'n_trees': defaults['n_trees'],
            'max_depth': defaults['max_depth'],
            'min_samples_split': defaults['min_samples_split'],
            'min_samples_leaf': defaults['min_samples_leaf'],
            'seed': defaults['seed'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    schema: Tuple[str, ...]
    rows: List[Tuple[float, ...]] = field(default_factory=list)
    labels: List[int] = field(default_factory=list)
    groups: List[str] = field(default_factory=list)
    keys: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.schema = tuple(self.schema)

    def __len__(self) -> int:
        return len(self.rows)

    def add(self, features: Sequence[float], label: int, group: str = None, key: str = None):
        if len(features) != len(self.schema):
            raise SchemaMismatchError(
                f"Example has {len(features)} features, schema has {len(self.schema)}"
            )
        index = len(self.rows)
        self.rows.append(tuple(float(v) for v in features))
        self.labels.append(int(bool(label)))
        self.keys.append(str(key) if key is not None else str(index))
        self.groups.append(str(group) if group is not None else self.keys[-1])

    def extend(self, other: "Dataset"):
        if other.schema != self.schema:
            raise SchemaMismatchError("Cannot merge datasets with different schemas")
        for i in range(len(other)):
            self.add(other.rows[i], other.labels[i], other.groups[i], other.keys[i])

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(self.schema)))
        return np.asarray(self.rows, dtype=np.float64)

    def label_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    def class_counts(self) -> Dict[int, int]:
        return {0: self.labels.count(0), 1: self.labels.count(1)}

    def subset(self, indices: Iterable[int]) -> "Dataset":
        part = Dataset(self.schema)
        for i in indices:
            part.add(self.rows[i], self.labels[i], self.groups[i], self.keys[i])
        return part

    def select(self, features: Sequence[str]) -> "Dataset":
        """Same examples restricted to ``features`` (in that order)."""
        missing = [f for f in features if f not in self.schema]
        if missing:
            raise SchemaMismatchError(f"Unknown features {missing}")
        columns = [self.schema.index(f) for f in features]
        part = Dataset(tuple(features))
        for i, row in enumerate(self.rows):
            part.add([row[c] for c in columns], self.labels[i], self.groups[i], self.keys[i])
        return part


@dataclass
class DecisionTree:
    feature: List[int]
    threshold: List[float]
    left: List[int]
    right: List[int]
    value: List[float]

    def leaf_for(self, x: Sequence[float]) -> int:
        node = 0
        while self.feature[node] != LEAF:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return node

    def vote(self, x: Sequence[float]) -> int:
        return int(self.value[self.leaf_for(x)] >= 0.5)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TreeEnsembleModel:
    schema: Tuple[str, ...]
    trees: List[DecisionTree]
    seed: int
    config: dict
    importances: List[float]
    name: str = ""

    def check_schema(self, schema: Sequence[str]):
        if tuple(schema) != tuple(self.schema):
            raise SchemaMismatchError(
                f"Model {self.name or '(unnamed)'} expects features {list(self.schema)}, "
                f"got {list(schema)}"
            )

    def check_arity(self, x: Sequence[float]):
        if len(x) != len(self.schema):
            raise SchemaMismatchError(
                f"Model expects {len(self.schema)} features, got {len(x)}"
            )

    def to_dict(self) -> dict:
        return {
            'format': MODEL_FORMAT,
            'version': MODEL_VERSION,
            'name': self.name,
            'schema': list(self.schema),
            'seed': self.seed,
            'config': self.config,
            'importances': list(self.importances),
            'trees': [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TreeEnsembleModel":
        return cls(
            schema=tuple(payload['schema']),
            trees=[DecisionTree(**tree) for tree in payload['trees']],
            seed=payload['seed'],
            config=payload['config'],
            importances=list(payload['importances']),
            name=payload.get('name', ''),
        )


@dataclass
class CrossValidationReport:
    folds: List[List[int]]
    per_fold: List[Dict[str, float]]
    summary: Dict[str, Dict[str, float]]

    def mean(self, metric: str) -> float:
        return self.summary[metric]['mean']
