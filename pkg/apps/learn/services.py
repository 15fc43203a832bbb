"""
Bagged Gini decision trees, trained from scratch on numpy arrays.

Every tree draws its bootstrap sample and feature order from its own
generator seeded with ``(seed, tree_index)``, over examples sorted by key,
so a model depends only on the example set and the seed.
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from apps.evaluation.services import binary_prf
from core.exceptions import DataError, SchemaMismatchError, TrainingError
from core.tsv import read_tsv, write_tsv

from .domain import (
    LEAF,
    MODEL_FORMAT,
    MODEL_VERSION,
    CrossValidationReport,
    Dataset,
    DecisionTree,
    LearnerConfig,
    TreeEnsembleModel,
)

logger = logging.getLogger(__name__)

KEY_COLUMN = '_key'
GROUP_COLUMN = '_group'
LABEL_COLUMN = 'label'
METRICS = ('accuracy', 'precision', 'recall', 'f1')


def max_features_for(n_features: int) -> int:
    return max(1, int(math.sqrt(n_features)))


def _gini(positives: np.ndarray, totals: np.ndarray) -> np.ndarray:
    p = positives / totals
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


class _TreeBuilder:
    """Grows one tree on a bootstrap sample; nodes are appended in preorder."""

    def __init__(self, X: np.ndarray, y: np.ndarray, config: LearnerConfig, rng: np.random.Generator):
        self.X = X
        self.y = y
        self.config = config
        self.rng = rng
        self.n_total = len(y)
        self.max_features = max_features_for(X.shape[1])
        self.importance = np.zeros(X.shape[1])
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []

    def _new_node(self, indices: np.ndarray) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(float(self.y[indices].mean()))
        return len(self.feature) - 1

    def _best_split_on(self, indices: np.ndarray, f: int) -> Optional[Tuple[float, float, int]]:
        """(gain, threshold, n_left) of the best split of ``indices`` on feature ``f``."""
        values = self.X[indices, f]
        order = np.argsort(values, kind='stable')
        v = values[order]
        labels = self.y[indices][order]
        n = len(v)
        min_leaf = self.config.min_samples_leaf

        n_left = np.arange(1, n)
        valid = (v[:-1] < v[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            return None

        cum_pos = np.cumsum(labels)[:-1].astype(np.float64)
        total_pos = float(labels.sum())
        n_right = n - n_left
        weighted = (
            n_left * _gini(cum_pos, n_left)
            + n_right * _gini(total_pos - cum_pos, n_right)
        ) / n
        parent = float(_gini(np.array([total_pos]), np.array([float(n)]))[0])
        gains = np.where(valid, parent - weighted, -np.inf)
        best = int(np.argmax(gains))
        low, high = float(v[best]), float(v[best + 1])
        threshold = (low + high) / 2.0
        if not low <= threshold < high:
            threshold = low
        return max(0.0, float(gains[best])), threshold, best + 1

    def _choose_split(self, indices: np.ndarray) -> Optional[Tuple[int, float, float]]:
        best = None
        for examined, f in enumerate(self.rng.permutation(self.X.shape[1])):
            # keep looking past max_features only until some valid split turns up
            if examined >= self.max_features and best is not None:
                break
            found = self._best_split_on(indices, int(f))
            if found is None:
                continue
            gain, threshold, _ = found
            if best is None or gain > best[2]:
                best = (int(f), threshold, gain)
        return best

    def grow(self, indices: np.ndarray, depth: int = 0) -> int:
        node = self._new_node(indices)
        labels = self.y[indices]
        if (
            depth >= self.config.max_depth
            or len(indices) < self.config.min_samples_split
            or labels.min() == labels.max()
        ):
            return node

        split = self._choose_split(indices)
        if split is None:
            return node
        f, threshold, gain = split
        mask = self.X[indices, f] <= threshold
        self.importance[f] += len(indices) / self.n_total * gain
        self.feature[node] = f
        self.threshold[node] = threshold
        self.left[node] = self.grow(indices[mask], depth + 1)
        self.right[node] = self.grow(indices[~mask], depth + 1)
        return node

    def tree(self) -> DecisionTree:
        return DecisionTree(
            feature=list(self.feature),
            threshold=list(self.threshold),
            left=list(self.left),
            right=list(self.right),
            value=list(self.value),
        )


def _canonical_order(data: Dataset) -> List[int]:
    return sorted(range(len(data)), key=lambda i: (data.keys[i], data.rows[i], data.labels[i]))


def _normalized(weights: np.ndarray) -> np.ndarray:
    total = weights.sum()
    if total <= 0:
        return np.zeros_like(weights)
    return weights / total


def train(data: Dataset, config: LearnerConfig = None, name: str = "") -> TreeEnsembleModel:
    config = config or LearnerConfig.from_settings()
    counts = data.class_counts()
    if counts[0] < 2 or counts[1] < 2:
        raise TrainingError(
            f"Training {name or 'model'} needs at least 2 examples per class, "
            f"got {counts[0]} negative / {counts[1]} positive"
        )
    if config.n_trees < 1:
        raise TrainingError("n_trees must be at least 1")

    order = _canonical_order(data)
    X = data.matrix()[order]
    y = data.label_array()[order]
    n = len(y)

    trees = []
    importances = np.zeros(len(data.schema))
    for t in range(config.n_trees):
        rng = np.random.default_rng([config.seed, t])
        sample = rng.integers(0, n, n)
        builder = _TreeBuilder(X[sample], y[sample], config, rng)
        builder.grow(np.arange(n))
        trees.append(builder.tree())
        importances += _normalized(builder.importance)

    importances = _normalized(importances / config.n_trees)
    logger.info(
        f"Trained {name or 'model'}: {config.n_trees} trees on {n} examples "
        f"({counts[1]} positive), {len(data.schema)} features"
    )
    return TreeEnsembleModel(
        schema=data.schema,
        trees=trees,
        seed=config.seed,
        config=config.to_dict(),
        importances=[float(v) for v in importances],
        name=name,
    )


def predict(model: TreeEnsembleModel, x: Sequence[float]) -> Tuple[int, float]:
    """``(label, score)``: score is the fraction of trees voting 1, label is score >= 0.5."""
    model.check_arity(x)
    votes = sum(tree.vote(x) for tree in model.trees)
    score = votes / len(model.trees)
    return int(score >= 0.5), score


def predict_batch(model: TreeEnsembleModel, rows: Sequence[Sequence[float]]) -> List[Tuple[int, float]]:
    return [predict(model, row) for row in rows]


def check_schema(model: TreeEnsembleModel, schema: Sequence[str]):
    model.check_schema(schema)


def feature_importance(model: TreeEnsembleModel) -> Dict[str, float]:
    return dict(zip(model.schema, model.importances))


# ------------------------------------------------------------------ #
# Splits                                                               #
# ------------------------------------------------------------------ #

def _group_labels(data: Dataset) -> Dict[str, int]:
    """Majority label per group; ties count as positive."""
    tally: Dict[str, List[int]] = {}
    for group, label in zip(data.groups, data.labels):
        counts = tally.setdefault(group, [0, 0])
        counts[label] += 1
    return {group: int(c[1] >= c[0]) for group, c in tally.items()}


def _groups_by_class(data: Dataset, rng: np.random.Generator) -> Dict[int, List[str]]:
    by_class: Dict[int, List[str]] = {0: [], 1: []}
    for group, label in sorted(_group_labels(data).items()):
        by_class[label].append(group)
    for label in (0, 1):
        groups = by_class[label]
        by_class[label] = [groups[i] for i in rng.permutation(len(groups))]
    return by_class


def _indices_of(data: Dataset, groups) -> List[int]:
    wanted = set(groups)
    return [i for i, group in enumerate(data.groups) if group in wanted]


def stratified_group_folds(data: Dataset, folds: int, seed: int) -> List[List[int]]:
    """Partition example indices into folds; a group never straddles two folds."""
    if folds < 2:
        raise TrainingError("Cross-validation needs at least 2 folds")
    rng = np.random.default_rng([seed, folds])
    by_class = _groups_by_class(data, rng)
    for label, groups in by_class.items():
        if len(groups) < folds:
            raise TrainingError(
                f"Only {len(groups)} groups of class {label} for {folds}-fold cross-validation"
            )

    assignment: Dict[str, int] = {}
    position = 0
    for label in (1, 0):
        for group in by_class[label]:
            assignment[group] = position % folds
            position += 1

    result: List[List[int]] = [[] for _ in range(folds)]
    for i, group in enumerate(data.groups):
        result[assignment[group]].append(i)
    return result


def cross_validate(data: Dataset, folds: int = 5, config: LearnerConfig = None) -> CrossValidationReport:
    config = config or LearnerConfig.from_settings()
    partition = stratified_group_folds(data, folds, config.seed)
    per_fold = []
    for k, test_indices in enumerate(partition):
        held_out = set(test_indices)
        train_part = data.subset(i for i in range(len(data)) if i not in held_out)
        test_part = data.subset(test_indices)
        model = train(train_part, config, name=f"fold {k + 1}/{folds}")
        predicted = [label for label, _ in predict_batch(model, test_part.rows)]
        per_fold.append(binary_prf(test_part.labels, predicted))

    summary = {}
    for metric in METRICS:
        values = np.array([fold[metric] for fold in per_fold])
        summary[metric] = {'mean': float(values.mean()), 'std': float(values.std())}
    logger.info(
        f"{folds}-fold cross-validation: accuracy {summary['accuracy']['mean']:.4f}, "
        f"f1 {summary['f1']['mean']:.4f}"
    )
    return CrossValidationReport(folds=partition, per_fold=per_fold, summary=summary)


def train_test_split(data: Dataset, test_fraction: float = 0.2, seed: int = 13) -> Tuple[Dataset, Dataset]:
    """Group-aware split; each class contributes ``test_fraction`` of its groups to the test side."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng([seed, 0])
    test_groups = []
    for label, groups in _groups_by_class(data, rng).items():
        if len(groups) < 2:
            continue
        take = min(len(groups) - 1, max(1, int(round(test_fraction * len(groups)))))
        test_groups.extend(groups[:take])
    test_indices = _indices_of(data, test_groups)
    held_out = set(test_indices)
    train_indices = [i for i in range(len(data)) if i not in held_out]
    return data.subset(train_indices), data.subset(test_indices)


# ------------------------------------------------------------------ #
# Files                                                                #
# ------------------------------------------------------------------ #

def model_bytes(model: TreeEnsembleModel) -> bytes:
    return (json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def save_model(model: TreeEnsembleModel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(model_bytes(model))
    logger.info(f"Saved model {model.name or path.stem} to {path}")
    return path


def load_model(path: Path) -> TreeEnsembleModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"Could not read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"Model file {path} is not valid JSON: {exc}") from exc
    if payload.get('format') != MODEL_FORMAT or payload.get('version') != MODEL_VERSION:
        raise DataError(
            f"{path} is not a version {MODEL_VERSION} {MODEL_FORMAT} file "
            f"(found {payload.get('format')!r} v{payload.get('version')})"
        )
    try:
        return TreeEnsembleModel.from_dict(payload)
    except (KeyError, TypeError) as exc:
        raise DataError(f"Model file {path} is incomplete: {exc}") from exc


def write_dataset_tsv(data: Dataset, path: Path, with_keys: bool = True) -> int:
    header = ([KEY_COLUMN, GROUP_COLUMN] if with_keys else []) + list(data.schema) + [LABEL_COLUMN]
    rows = []
    for i, features in enumerate(data.rows):
        prefix = [data.keys[i], data.groups[i]] if with_keys else []
        rows.append(prefix + [repr(v) for v in features] + [data.labels[i]])
    return write_tsv(path, rows, header=header)


def read_dataset_tsv(path: Path) -> Dataset:
    """Header names the features, last column is the 0/1 label.

    Optional leading ``_key`` and ``_group`` columns carry example ids and groups.
    """
    try:
        lines = list(read_tsv(path))
    except OSError as exc:
        raise DataError(f"Could not read dataset {path}: {exc}") from exc
    if not lines:
        raise DataError(f"Dataset {path} is empty")

    _, header = lines[0]
    offset = 0
    has_key = header and header[0] == KEY_COLUMN
    if has_key:
        offset = 2 if len(header) > 1 and header[1] == GROUP_COLUMN else 1
    schema = tuple(header[offset:-1])
    if not schema:
        raise DataError(f"Dataset {path} declares no feature columns")

    data = Dataset(schema)
    for line_no, fields in lines[1:]:
        if len(fields) != len(header):
            raise SchemaMismatchError(f"{path}, line {line_no}: {len(fields)} columns, header has {len(header)}")
        try:
            features = [float(v) for v in fields[offset:-1]]
            label = int(fields[-1])
        except ValueError as exc:
            raise DataError(f"{path}, line {line_no}: {exc}") from exc
        if label not in (0, 1):
            raise DataError(f"{path}, line {line_no}: label must be 0 or 1")
        key = fields[0] if has_key else None
        group = fields[1] if offset == 2 else None
        data.add(features, label, group=group, key=key)
    return data
