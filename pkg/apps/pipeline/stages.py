"""
Pipeline stages as file contracts.

Every stage reads its inputs from the configured input paths or from earlier
stage files in ``output_dir`` and writes its own files there, so running the
stages one by one produces the same bytes as ``run``.
"""

import json
import logging
import time
from collections import defaultdict
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, Optional

from apps.corpus.domain import Table
from apps.corpus.services import read_corpus, write_corpus
from apps.discover.domain import MODE_THREE_WAY, NOT_ENTITY, OUT_OF_KB
from apps.discover.services import (
    build_discovery_dataset,
    build_dossiers,
    discover_mentions,
    discovery_features,
    feature_names,
    read_discoveries,
    wd_sweep,
    write_discoveries,
)
from apps.evaluation.services import (
    accuracy,
    binary_prf,
    load_discovery_gold,
    load_heading_gold,
    load_link_gold,
    load_resolution_gold,
    macro_prf,
    micro_prf,
)
from apps.headmatch.services import build_heading_dataset, entity_links, match_headings, read_headings, write_headings
from apps.kb.domain import KbSnapshot
from apps.kb.services import load_snapshot
from apps.learn.domain import CrossValidationReport, Dataset, TreeEnsembleModel
from apps.learn.services import cross_validate, load_model, save_model, train
from apps.link.domain import LinkAssignment
from apps.link.services import (
    build_link_dataset,
    link_table,
    predicted_link_tuples,
    propagate_exact_matches,
    read_links,
    read_table_types,
    restore_assignments,
    write_links,
    write_table_types,
)
from apps.resolve.domain import SURFACE_MODE_MODEL, MentionEmbeddings, Occurrence
from apps.resolve.services import (
    alias_mentions,
    build_profiles,
    build_surface_dataset,
    load_mention_embeddings,
    resolve_mentions,
    resolve_pair,
    save_mention_embeddings,
    surface_feature_names,
    train_mention_embeddings,
    tune_embedding_threshold,
    write_aliases,
    write_clusters,
)
from apps.retrieve.domain import SearchIndex
from apps.retrieve.services import build_index, load_index, save_index
from apps.sim.embeddings import TermEmbeddings, load_embeddings
from core.exceptions import UsageError

from .domain import (
    ALIASES_FILE,
    CLUSTERS_FILE,
    CORPUS_FILE,
    DISCOVERIES_FILE,
    HEADINGS_FILE,
    INDEX_FILE,
    LINKS_FILE,
    MANIFEST_FILE,
    MENTION_EMBEDDINGS_FILE,
    STAGE_OUTPUTS,
    STAGES,
    TABLE_TYPES_FILE,
    TASK_DISCOVER,
    TASK_DISCOVER_ENTITY,
    TASK_HEADINGS,
    TASK_LINK,
    TASK_SURFACE,
    WD_INDEX_FILE,
    PipelineConfig,
    RunManifest,
    StageRecord,
    derive_seed,
)

logger = logging.getLogger(__name__)

PRODUCED_BY = {name: stage for stage, names in STAGE_OUTPUTS.items() for name in names}


class PipelineRunner:

    def __init__(self, config: PipelineConfig, manifest: Optional[RunManifest] = None):
        self.config = config
        self.manifest = manifest or RunManifest(config=config.to_dict())
        self._cache: Dict[str, object] = {}

    # -------------------------------------------------------------- #
    # Inputs and earlier stage files                                   #
    # -------------------------------------------------------------- #

    def output(self, name: str) -> Path:
        return self.config.output_dir / name

    def require(self, name: str) -> Path:
        path = self.output(name)
        if not path.exists():
            raise UsageError(f"{path} is missing; run the {PRODUCED_BY[name]} stage first")
        return path

    def setting(self, name: str) -> Path:
        value = getattr(self.config, name)
        if value is None:
            raise UsageError(f"{name} is not configured")
        return value

    def _cached(self, key: str, loader: Callable):
        if key not in self._cache:
            self._cache[key] = loader()
        return self._cache[key]

    def _forget(self, *keys: str):
        for key in keys:
            self._cache.pop(key, None)

    @cached_property
    def kb(self) -> KbSnapshot:
        return load_snapshot(self.setting('kb_dir'))

    @cached_property
    def embeddings(self) -> TermEmbeddings:
        if self.config.embeddings_path is None:
            logger.info("No term embeddings configured; embedding features are 0")
            return TermEmbeddings.empty()
        return load_embeddings(self.config.embeddings_path)

    def tables(self) -> List[Table]:
        def load():
            tables, _ = read_corpus(self.require(CORPUS_FILE))
            return tables
        return self._cached('tables', load)

    def index(self) -> SearchIndex:
        return self._cached('index', lambda: load_index(self.require(INDEX_FILE)))

    def wd_index(self) -> SearchIndex:
        return self._cached('wd_index', lambda: load_index(self.require(WD_INDEX_FILE)))

    def assignments(self) -> Dict[str, LinkAssignment]:
        def load():
            restored = restore_assignments(
                self.tables(),
                read_links(self.require(LINKS_FILE)),
                read_table_types(self.require(TABLE_TYPES_FILE)),
                expanded=self.config.expand_vote_types,
            )
            return {a.table_id: a for a in restored}
        return self._cached('assignments', load)

    def heading_matches(self):
        return self._cached('headings', lambda: read_headings(self.require(HEADINGS_FILE)))

    def discoveries(self):
        return self._cached('discoveries', lambda: read_discoveries(self.require(DISCOVERIES_FILE)))

    def profiles(self):
        return self._cached('profiles', lambda: build_profiles(self.tables(), self.assignments(), self.kb))

    def mention_embeddings(self) -> MentionEmbeddings:
        def load():
            path = self.output(MENTION_EMBEDDINGS_FILE)
            if path.exists():
                return load_mention_embeddings(path)
            return self.train_mention_embeddings()
        return self._cached('mention_embeddings', load)

    def train_mention_embeddings(self) -> MentionEmbeddings:
        c = self.config
        memb = train_mention_embeddings(
            self.tables(),
            dimension=c.mention2vec_dim,
            window=c.mention2vec_window,
            negatives=c.mention2vec_negatives,
            epochs=c.mention2vec_epochs,
            min_count=c.mention2vec_min_count,
            seed=derive_seed(c.seed, 'mention2vec'),
        )
        save_mention_embeddings(memb, self.output(MENTION_EMBEDDINGS_FILE))
        self._cache['mention_embeddings'] = memb
        return memb

    # -------------------------------------------------------------- #
    # Stages                                                           #
    # -------------------------------------------------------------- #

    def ingest(self) -> Dict[str, int]:
        tables, warnings = read_corpus(self.setting('corpus_path'))
        for warning in warnings:
            logger.warning(f"Skipped corpus record: {warning}")
        written = write_corpus(tables, self.output(CORPUS_FILE))
        self._forget('tables')
        return {'tables': written, 'skipped_records': len(warnings)}

    def build_index(self) -> Dict[str, int]:
        c = self.config
        options = dict(k1=c.bm25_k1, b=c.bm25_b, popularity_lambda=c.popularity_lambda, content_weight=c.content_weight)
        index = build_index(self.kb, c.search_fields, **options)
        save_index(index, self.output(INDEX_FILE))
        wd = index if c.wd_fields == c.search_fields else build_index(self.kb, c.wd_fields, **options)
        save_index(wd, self.output(WD_INDEX_FILE))
        self._forget('index', 'wd_index')
        return {'indexed_entities': index.n_docs}

    def link(self) -> Dict[str, int]:
        c = self.config
        model = self.model(TASK_LINK)
        assignments = [
            link_table(
                table, self.index(), self.kb, self.embeddings, model,
                top_k=c.top_k, expand_vote_types=c.expand_vote_types,
                mode=c.disambiguation, type_fallback=c.type_fallback,
            )
            for table in self.tables()
        ]
        if c.propagate:
            assignments = propagate_exact_matches(assignments, self.kb)
        write_links(self.output(LINKS_FILE), assignments)
        write_table_types(self.output(TABLE_TYPES_FILE), assignments)
        self._forget('assignments', 'profiles')
        links = [link for a in assignments for link in a.links.values()]
        return {
            'linkable_tables': sum(1 for a in assignments if a.is_linkable),
            'links': len(links),
            'propagated_links': sum(1 for link in links if link.propagated),
        }

    def match_headings(self) -> Dict[str, int]:
        model = self.model(TASK_HEADINGS)
        assignments = self.assignments()
        matches = [
            match_headings(table, entity_links(assignments[table.id]), self.kb, model)
            for table in self.tables()
            if assignments[table.id].is_linkable
        ]
        written = write_headings(self.output(HEADINGS_FILE), matches)
        self._forget('headings')
        return {'heading_matches': written}

    def dossiers(self):
        return build_dossiers(self.tables(), self.assignments(), self.heading_matches())

    def discover(self) -> Dict[str, int]:
        c = self.config
        model = self.model(TASK_DISCOVER)
        entity_model = self.model(TASK_DISCOVER_ENTITY) if c.discovery_mode == MODE_THREE_WAY else None
        dossiers = self.dossiers()
        results = discover_mentions(
            dossiers, self.assignments(), self.index(), self.wd_index(), self.kb, self.embeddings,
            model, entity_model, wd_k=c.wd_topk, collapse_identical_cores=c.collapse_identical_cores,
            min_tables=c.min_tables,
        )
        write_discoveries(self.output(DISCOVERIES_FILE), results)
        self._forget('discoveries')
        return {
            'dossiers': len(dossiers),
            'verdicts': len(results),
            'out_of_kb': sum(1 for d in results if d.verdict == OUT_OF_KB),
        }

    def resolve(self) -> Dict[str, int]:
        c = self.config
        memb = self.train_mention_embeddings()
        model = self.model(TASK_SURFACE) if c.surface_mode == SURFACE_MODE_MODEL else None
        clusters = resolve_mentions(
            self.profiles(), self.kb, self.assignments().values(), self.discoveries(), memb,
            model=model, mode=c.surface_mode, theta=c.theta, threshold=c.embedding_threshold,
            verdicts=c.verdicts, window=c.candidate_window, neighbours=c.candidate_neighbours,
        )
        written = write_clusters(self.output(CLUSTERS_FILE), clusters)
        aliases = alias_mentions(self.discoveries(), self.index(), self.kb)
        return {
            'embedded_mentions': len(memb),
            'clusters': written,
            'aliases': write_aliases(self.output(ALIASES_FILE), aliases),
        }

    def run_stage(self, stage: str) -> StageRecord:
        if stage not in STAGES:
            raise UsageError(f"Unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
        self.config.output_dir.mkdir(parents=True, exist_ok=True)
        started = time.perf_counter()
        counts = getattr(self, stage)()
        record = StageRecord(stage, counts, round(time.perf_counter() - started, 3))
        self.manifest.add(record)
        self.write_manifest()
        logger.info(f"Stage {stage} done in {record.seconds}s: {counts}")
        return record

    def run_all(self) -> RunManifest:
        """All stages in order; the KB is loaded first so a bad snapshot aborts before ingest."""
        self.kb
        for stage in STAGES:
            self.run_stage(stage)
        return self.manifest

    def write_manifest(self) -> Path:
        path = self.output(MANIFEST_FILE)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.manifest.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path

    # -------------------------------------------------------------- #
    # Models                                                           #
    # -------------------------------------------------------------- #

    def model_path(self, task: str) -> Path:
        return self.config.models_dir / f"{task}.json"

    def model(self, task: str) -> TreeEnsembleModel:
        path = self.model_path(task)
        if path.exists():
            return load_model(path)
        logger.info(f"No {task} model at {path}; training one from gold")
        return self.train(task)

    def dataset(self, task: str) -> Dataset:
        c = self.config
        if task == TASK_LINK:
            gold = load_link_gold(self.setting('link_gold'))
            return build_link_dataset(
                self.tables(), self.index(), self.kb, self.embeddings, gold,
                top_k=c.top_k, expand_vote_types=c.expand_vote_types,
            )
        if task == TASK_HEADINGS:
            link_gold = load_link_gold(self.setting('link_gold'))
            links_by_table: Dict[str, Dict[int, str]] = defaultdict(dict)
            for table_id, row, entity_id in link_gold:
                links_by_table[table_id][row] = entity_id
            return build_heading_dataset(
                self.tables(), links_by_table, self.kb, load_heading_gold(self.setting('heading_gold'))
            )
        if task in (TASK_DISCOVER, TASK_DISCOVER_ENTITY):
            gold = load_discovery_gold(self.setting('discovery_gold'))
            features = {
                key: discovery_features(
                    dossier, self.assignments(), self.index(), self.wd_index(), self.kb, self.embeddings,
                    c.wd_topk, c.collapse_identical_cores,
                )
                for key, dossier in self.dossiers().items()
                if key in gold
            }
            target = NOT_ENTITY if task == TASK_DISCOVER_ENTITY else OUT_OF_KB
            return build_discovery_dataset(features, gold, feature_names(c.discovery_features), target)
        if task == TASK_SURFACE:
            return build_surface_dataset(
                load_resolution_gold(self.setting('resolution_gold')),
                self.profiles(), self.mention_embeddings(), surface_feature_names(c.surface_features),
            )
        raise UsageError(f"Unknown task {task!r}")

    def train(self, task: str, data: Optional[Dataset] = None) -> TreeEnsembleModel:
        data = data if data is not None else self.dataset(task)
        model = train(data, self.config.learner(task), name=task)
        save_model(model, self.model_path(task))
        return model

    def cross_validate(self, task: str, data: Optional[Dataset] = None) -> CrossValidationReport:
        data = data if data is not None else self.dataset(task)
        return cross_validate(data, self.config.cv_folds, self.config.learner(task))

    def tune_threshold(self) -> Dict[str, float]:
        """Best embedding-only threshold on the resolution gold."""
        data = build_surface_dataset(
            load_resolution_gold(self.setting('resolution_gold')),
            self.profiles(), self.mention_embeddings(), ('mention_cosine',),
        )
        threshold, score = tune_embedding_threshold([row[0] for row in data.rows], data.labels)
        return {'threshold': threshold, 'accuracy': score}

    # -------------------------------------------------------------- #
    # Evaluation                                                       #
    # -------------------------------------------------------------- #

    def evaluate(self, task: str, with_wd_sweep: bool = False) -> Dict[str, float]:
        if task == 'link':
            gold = load_link_gold(self.setting('link_gold'))
            return _prf_report(gold, predicted_link_tuples(self.assignments().values()))
        if task == 'headings':
            gold = load_heading_gold(self.setting('heading_gold'))
            predicted = {
                (m.table_id, m.column_index, m.property_id)
                for match in self.heading_matches().values()
                for m in match.matches.values()
            }
            return _prf_report(gold, predicted)
        if task == 'discover':
            gold = load_discovery_gold(self.setting('discovery_gold'))
            predicted = {key: d.verdict for key, d in self.discoveries().items()}
            report = {'accuracy': accuracy(gold, predicted), 'gold': len(gold)}
            if with_wd_sweep:
                c = self.config
                sweep = wd_sweep(
                    {key: key for key in gold}, gold, self.kb,
                    k1=c.bm25_k1, b=c.bm25_b, popularity_lambda=c.popularity_lambda, content_weight=c.content_weight,
                )
                report.update({f"wd_{fields}@{k}": value for (fields, k), value in sweep.items()})
            return report
        if task == 'resolve':
            return self._evaluate_resolution()
        raise UsageError(f"Unknown evaluation task {task!r}")

    def _evaluate_resolution(self) -> Dict[str, float]:
        c = self.config
        gold = load_resolution_gold(self.setting('resolution_gold'))
        profiles = self.profiles()
        memb = self.mention_embeddings()
        model = self.model(TASK_SURFACE) if c.surface_mode == SURFACE_MODE_MODEL else None
        labels, predicted = [], []
        for (left, right), same in sorted(gold.items()):
            a, b = Occurrence(*left), Occurrence(*right)
            if a.table_id not in profiles or b.table_id not in profiles:
                continue
            labels.append(int(same))
            predicted.append(int(resolve_pair(
                a, b, profiles, memb, model, c.surface_mode, c.theta, c.embedding_threshold
            )))
        report = binary_prf(labels, predicted)
        report['pairs'] = len(labels)
        return report


def _prf_report(gold, predicted) -> Dict[str, float]:
    macro = macro_prf(gold, predicted)
    micro = micro_prf(gold, predicted)
    return {
        'macro_precision': macro.precision,
        'macro_recall': macro.recall,
        'macro_f1': macro.f1,
        'micro_precision': micro.precision,
        'micro_recall': micro.recall,
        'micro_f1': micro.f1,
        'gold': len(set(gold)),
        'predicted': len(set(predicted)),
    }
