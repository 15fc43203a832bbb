"""
Metrics and gold-standard loading.

macro_prf averages per table over tables with non-empty gold; accuracy counts
missing predictions as wrong.
"""

import csv
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Mapping, Sequence, Set, Tuple

from apps.corpus.domain import normalize_mention
from core.exceptions import EvaluationError

from .domain import PRF
from .serializers import (
    DiscoveryGoldRowSerializer,
    HeadingGoldRowSerializer,
    LinkGoldRowSerializer,
    ResolutionGoldRowSerializer,
)

logger = logging.getLogger(__name__)


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _by_table(items: Iterable[tuple]) -> Dict[Hashable, Set[tuple]]:
    grouped: Dict[Hashable, Set[tuple]] = defaultdict(set)
    for item in items:
        grouped[item[0]].add(tuple(item))
    return grouped


def per_table_prf(gold: Iterable[tuple], predicted: Iterable[tuple]) -> Dict[Hashable, PRF]:
    """P/R/F1 per unit (first tuple element) for units with non-empty gold."""
    gold_by = _by_table(gold)
    pred_by = _by_table(predicted)
    results = {}
    for unit in sorted(gold_by, key=str):
        g = gold_by[unit]
        p = pred_by.get(unit, set())
        correct = len(g & p)
        precision = correct / len(p) if p else 0.0
        recall = correct / len(g)
        results[unit] = PRF(precision, recall, _f1(precision, recall))
    return results


def macro_prf(gold: Iterable[tuple], predicted: Iterable[tuple]) -> PRF:
    gold = list(gold)
    if not gold:
        raise EvaluationError("Gold standard is empty")
    per_table = per_table_prf(gold, predicted)
    n = len(per_table)
    return PRF(
        sum(r.precision for r in per_table.values()) / n,
        sum(r.recall for r in per_table.values()) / n,
        sum(r.f1 for r in per_table.values()) / n,
    )


def micro_prf(gold: Iterable[tuple], predicted: Iterable[tuple]) -> PRF:
    g, p = set(map(tuple, gold)), set(map(tuple, predicted))
    if not g:
        raise EvaluationError("Gold standard is empty")
    correct = len(g & p)
    precision = correct / len(p) if p else 0.0
    recall = correct / len(g)
    return PRF(precision, recall, _f1(precision, recall))


def accuracy(gold: Mapping, predicted: Mapping) -> float:
    if not gold:
        raise EvaluationError("Gold standard is empty")
    matches = sum(1 for key, label in gold.items() if key in predicted and predicted[key] == label)
    return matches / len(gold)


def binary_prf(gold: Sequence[int], predicted: Sequence[int]) -> Dict[str, float]:
    """Accuracy plus precision/recall/F1 of the positive class."""
    if not gold:
        raise EvaluationError("Gold standard is empty")
    if len(gold) != len(predicted):
        raise EvaluationError(f"{len(gold)} gold labels but {len(predicted)} predictions")
    tp = sum(1 for g, p in zip(gold, predicted) if g and p)
    fp = sum(1 for g, p in zip(gold, predicted) if not g and p)
    fn = sum(1 for g, p in zip(gold, predicted) if g and not p)
    correct = sum(1 for g, p in zip(gold, predicted) if bool(g) == bool(p))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return {
        'accuracy': correct / len(gold),
        'precision': precision,
        'recall': recall,
        'f1': _f1(precision, recall),
    }


# ------------------------------------------------------------------ #
# Gold files                                                           #
# ------------------------------------------------------------------ #

def _read_gold(path: Path, serializer_class) -> List[dict]:
    rows = []
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            for line_no, record in enumerate(csv.DictReader(handle), start=2):
                serializer = serializer_class(data=record)
                if not serializer.is_valid():
                    raise EvaluationError(f"{path}, line {line_no}: {dict(serializer.errors)}")
                rows.append(serializer.validated_data)
    except OSError as exc:
        raise EvaluationError(f"Could not read gold file {path}: {exc}") from exc
    return rows


def load_link_gold(path: Path) -> Set[Tuple[str, int, str]]:
    return {(r['table_id'], r['row_index'], r['entity_id']) for r in _read_gold(path, LinkGoldRowSerializer)}


def load_heading_gold(path: Path) -> Set[Tuple[str, int, str]]:
    return {
        (r['table_id'], r['column_index'], r['property_id'])
        for r in _read_gold(path, HeadingGoldRowSerializer)
    }


def load_discovery_gold(path: Path) -> Dict[str, str]:
    gold = {}
    for r in _read_gold(path, DiscoveryGoldRowSerializer):
        key = normalize_mention(r['mention'])
        if key in gold and gold[key] != r['verdict']:
            raise EvaluationError(f"{path}: conflicting verdicts for {key!r}")
        gold[key] = r['verdict']
    return gold


def resolution_pair(mention1: str, table1: str, mention2: str, table2: str):
    """Order-free key for a pair of mention occurrences."""
    left = (normalize_mention(mention1), table1)
    right = (normalize_mention(mention2), table2)
    return tuple(sorted((left, right)))


def load_resolution_gold(path: Path) -> Dict[tuple, bool]:
    return {
        resolution_pair(r['mention1'], r['table1'], r['mention2'], r['table2']): r['same']
        for r in _read_gold(path, ResolutionGoldRowSerializer)
    }


# ------------------------------------------------------------------ #
# Reports                                                              #
# ------------------------------------------------------------------ #

def format_report(title: str, metrics: Mapping[str, float]) -> str:
    """Aligned two-column text table."""
    width = max([len(name) for name in metrics] + [len("metric")])
    lines = [title, f"{'metric'.ljust(width)}  value", f"{'-' * width}  ------"]
    for name, value in metrics.items():
        rendered = f"{value:.4f}" if isinstance(value, float) else str(value)
        lines.append(f"{name.ljust(width)}  {rendered}")
    return "\n".join(lines)


def write_report(path: Path, report: Mapping) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path
