"""
Run configuration, derived seeds and the run manifest.
"""

import hashlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from apps.learn.domain import LearnerConfig

CORPUS_FILE = 'corpus.jsonl'
INDEX_FILE = 'index.bin'
WD_INDEX_FILE = 'wd_index.bin'
LINKS_FILE = 'links.tsv'
TABLE_TYPES_FILE = 'table_types.tsv'
HEADINGS_FILE = 'headings.tsv'
DISCOVERIES_FILE = 'discoveries.tsv'
MENTION_EMBEDDINGS_FILE = 'mention_embeddings.json'
CLUSTERS_FILE = 'clusters.jsonl'
ALIASES_FILE = 'aliases.tsv'
MANIFEST_FILE = 'manifest.json'

STAGE_OUTPUTS: Dict[str, Tuple[str, ...]] = {
    'ingest': (CORPUS_FILE,),
    'build_index': (INDEX_FILE, WD_INDEX_FILE),
    'link': (LINKS_FILE, TABLE_TYPES_FILE),
    'match_headings': (HEADINGS_FILE,),
    'discover': (DISCOVERIES_FILE,),
    'resolve': (MENTION_EMBEDDINGS_FILE, CLUSTERS_FILE, ALIASES_FILE),
}
STAGES = tuple(STAGE_OUTPUTS)

TASK_LINK = 'link'
TASK_HEADINGS = 'headings'
TASK_DISCOVER = 'discover'
TASK_DISCOVER_ENTITY = 'discover_entity'
TASK_SURFACE = 'surface'
TRAIN_TASKS = (TASK_LINK, TASK_HEADINGS, TASK_DISCOVER, TASK_DISCOVER_ENTITY, TASK_SURFACE)
EVAL_TASKS = ('link', 'headings', 'discover', 'resolve')

PATH_FIELDS = (
    'corpus_path', 'kb_dir', 'embeddings_path', 'models_dir', 'output_dir',
    'link_gold', 'heading_gold', 'discovery_gold', 'resolution_gold',
)


def derive_seed(global_seed: int, stage_tag: str) -> int:
    """First 8 bytes of SHA-256("<seed>:<tag>") as an unsigned integer, modulo 2**32."""
    digest = hashlib.sha256(f"{global_seed}:{stage_tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 32)


def _path(value: str) -> Optional[Path]:
    return Path(value) if value else None


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: Optional[Path]
    kb_dir: Optional[Path]
    embeddings_path: Optional[Path]
    models_dir: Path
    output_dir: Path
    link_gold: Optional[Path]
    heading_gold: Optional[Path]
    discovery_gold: Optional[Path]
    resolution_gold: Optional[Path]

    top_k: int
    search_fields: str
    popularity_lambda: float
    bm25_k1: float
    bm25_b: float
    content_weight: float

    expand_vote_types: bool
    type_fallback: bool
    disambiguation: str
    propagate: bool

    wd_topk: int
    wd_fields: str
    collapse_identical_cores: bool
    discovery_features: str
    discovery_mode: str
    min_tables: int

    theta: float
    surface_mode: str
    surface_features: str
    embedding_threshold: float
    resolve_verdicts: str
    candidate_window: int
    candidate_neighbours: int
    mention2vec_dim: int
    mention2vec_window: int
    mention2vec_negatives: int
    mention2vec_epochs: int
    mention2vec_min_count: int

    n_trees: int
    max_depth: int
    min_samples_split: int
    min_samples_leaf: int
    cv_folds: int
    seed: int

    @classmethod
    def from_validated(cls, data: dict) -> "PipelineConfig":
        return cls(**{
            f.name: (_path(data[f.name]) if f.name in PATH_FIELDS else data[f.name])
            for f in fields(cls)
        })

    @property
    def verdicts(self) -> Tuple[str, ...]:
        return tuple(self.resolve_verdicts.split(','))

    def learner(self, task: str) -> LearnerConfig:
        return LearnerConfig(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            min_samples_leaf=self.min_samples_leaf,
            seed=derive_seed(self.seed, f"train:{task}"),
        )

    def to_dict(self) -> dict:
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(self).items()}


@dataclass
class StageRecord:
    stage: str
    counts: Dict[str, int]
    seconds: float


@dataclass
class RunManifest:
    config: dict
    inputs: Dict[str, str] = field(default_factory=dict)
    stages: List[StageRecord] = field(default_factory=list)

    def add(self, record: StageRecord):
        self.stages.append(record)

    @property
    def counts(self) -> Dict[str, int]:
        merged: Dict[str, int] = {}
        for record in self.stages:
            merged.update(record.counts)
        return merged

    def to_dict(self) -> dict:
        return {
            'config': self.config,
            'inputs': dict(self.inputs),
            'stages': [asdict(record) for record in self.stages],
            'counts': self.counts,
        }
