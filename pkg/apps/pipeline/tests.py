import json
import tempfile
from io import StringIO
from pathlib import Path

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from apps.discover.domain import IN_KB, OUT_OF_KB
from apps.discover.services import feature_names, read_discoveries
from apps.evaluation.services import load_link_gold
from apps.headmatch.domain import HEADING_FEATURE_SCHEMA
from apps.headmatch.services import read_headings
from apps.learn.domain import Dataset
from apps.learn.services import cross_validate, load_model, save_model, write_dataset_tsv
from apps.link.domain import LINK_FEATURE_SCHEMA
from apps.link.services import read_links
from apps.resolve.domain import ALIAS_SURFACE_FORM, Occurrence
from apps.resolve.services import read_aliases, read_clusters
from core.exceptions import ConfigError
from core.testing import (
    WORLD_ALIAS_ROWS,
    WORLD_COMPANY_TABLES,
    WORLD_NOVEL_CITY,
    WORLD_NOVEL_COMPANIES,
    threshold_model,
    write_large_world,
    write_world,
)

from .domain import HEADINGS_FILE, INDEX_FILE, MANIFEST_FILE, STAGE_OUTPUTS, STAGES, derive_seed
from .models import PipelineRun
from .services import load_config
from .stages import PipelineRunner


class ConfigLoadingTest(SimpleTestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)

    def write_config(self, text: str) -> Path:
        path = self.root / 'run.env'
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults_come_from_settings(self):
        config = load_config()
        self.assertEqual(config.top_k, settings.PIPELINE_DEFAULTS['top_k'])
        self.assertEqual(config.theta, settings.PIPELINE_DEFAULTS['theta'])
        self.assertIsNone(config.corpus_path)

    def test_flags_beat_file_and_file_beats_defaults(self):
        path = self.write_config("top_k = 7\ntheta = 0.9\npropagate = false\n")
        config = load_config(path, top_k=3)
        self.assertEqual(config.top_k, 3)
        self.assertEqual(config.theta, 0.9)
        self.assertFalse(config.propagate)

    def test_none_overrides_are_ignored(self):
        path = self.write_config("top_k = 7\n")
        self.assertEqual(load_config(path, top_k=None).top_k, 7)

    def test_unknown_keys_are_rejected(self):
        with self.assertRaises(ConfigError):
            load_config(self.write_config("top_kk = 7\n"))
        with self.assertRaises(ConfigError):
            load_config(no_such_key=1)

    def test_out_of_range_value_is_rejected(self):
        with self.assertRaises(ConfigError):
            load_config(theta=1.5)

    def test_missing_input_path_is_rejected(self):
        with self.assertRaises(ConfigError):
            load_config(corpus_path=self.root / 'absent.jsonl')

    def test_missing_config_file_is_rejected(self):
        with self.assertRaises(ConfigError):
            load_config(self.root / 'absent.env')

    def test_verdict_list(self):
        config = load_config(resolve_verdicts="out_of_kb+in_kb")
        self.assertEqual(config.verdicts, ('out_of_kb', 'in_kb'))
        with self.assertRaises(ConfigError):
            load_config(resolve_verdicts="maybe")

    def test_paths_become_path_objects(self):
        config = load_config(output_dir=self.root / 'out')
        self.assertEqual(config.output_dir, self.root / 'out')
        self.assertEqual(config.to_dict()['output_dir'], str(self.root / 'out'))


class DerivedSeedTest(SimpleTestCase):

    def test_stable_and_tag_specific(self):
        self.assertEqual(derive_seed(13, 'mention2vec'), derive_seed(13, 'mention2vec'))
        self.assertNotEqual(derive_seed(13, 'mention2vec'), derive_seed(13, 'train:link'))
        self.assertNotEqual(derive_seed(13, 'train:link'), derive_seed(14, 'train:link'))

    def test_fits_in_32_bits(self):
        for tag in ('a', 'b', 'train:surface'):
            self.assertTrue(0 <= derive_seed(2**40, tag) < 2**32)

    def test_learner_seed_depends_on_task(self):
        config = load_config()
        self.assertNotEqual(config.learner('link').seed, config.learner('headings').seed)
        self.assertEqual(config.learner('link').n_trees, config.n_trees)


class PipelineCommandTestCase(TestCase):
    """A written world plus fixture models: exact-label linking, PVS heading matches,
    mentions without a close KB label judged novel."""

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)
        self.world = write_world(self.root / 'world')
        self.models = self.root / 'models'
        save_model(threshold_model(LINK_FEATURE_SCHEMA, 'edit', 0.0, above=False), self.models / 'link.json')
        save_model(threshold_model(HEADING_FEATURE_SCHEMA, 'pvs_max', 0.9), self.models / 'headings.json')
        save_model(threshold_model(feature_names('oss'), 'wd', 0.5, above=False), self.models / 'discover.json')

    def options(self, output='out', **extra):
        options = dict(
            corpus_path=str(self.world.corpus),
            kb_dir=str(self.world.kb_dir),
            models_dir=str(self.models),
            output_dir=str(self.root / output),
            link_gold=str(self.world.link_gold),
            heading_gold=str(self.world.heading_gold),
            discovery_gold=str(self.world.discovery_gold),
            resolution_gold=str(self.world.resolution_gold),
            surface_mode='embedding',
        )
        options.update(extra)
        return options

    def call(self, name, *args, output='out', **extra) -> str:
        out = StringIO()
        call_command(name, *args, stdout=out, **self.options(output, **extra))
        return out.getvalue()

    def output(self, name, output='out') -> Path:
        return self.root / output / name

    def stage_files(self):
        return sorted(name for names in STAGE_OUTPUTS.values() for name in names)


class RunTest(PipelineCommandTestCase):

    def test_run_writes_every_stage_file_and_manifest(self):
        self.call('run')
        for name in self.stage_files() + [MANIFEST_FILE]:
            self.assertTrue(self.output(name).is_file(), name)
        manifest = json.loads(self.output(MANIFEST_FILE).read_text(encoding="utf-8"))
        self.assertEqual([s['stage'] for s in manifest['stages']], list(STAGES))
        self.assertEqual(manifest['counts']['tables'], 9)
        self.assertEqual(manifest['counts']['skipped_records'], 0)
        self.assertIn('corpus', manifest['inputs'])

    def test_exact_labels_link_to_gold(self):
        self.call('run')
        links = read_links(self.output('links.tsv'))
        predicted = {(t, row, link.entity_id) for t, rows in links.items() for row, link in rows.items()}
        self.assertEqual(predicted, load_link_gold(self.world.link_gold))

    def test_headings_match_properties_by_value(self):
        self.call('run')
        headings = read_headings(self.output('headings.tsv'))
        self.assertEqual(headings['co01'].property_for(1), 'foundingYear')
        self.assertEqual(headings['co01'].property_for(2), 'location')
        self.assertIsNone(headings['co01'].property_for(0))
        self.assertEqual(headings['ci01'].property_for(1), 'populationTotal')

    def test_novel_mentions_are_discovered_and_clustered(self):
        self.call('run')
        discoveries = read_discoveries(self.output('discoveries.tsv'))
        verdicts = {key: d.verdict for key, d in discoveries.items()}
        self.assertEqual(verdicts, {
            'zorblax dynamics': OUT_OF_KB,
            'quintrel labs': OUT_OF_KB,
            'novaport': OUT_OF_KB,
            'falcon co': IN_KB,
            'apex co': IN_KB,
        })

        clusters = read_clusters(self.output('clusters.jsonl'))
        zorblax = {Occurrence('zorblax dynamics', t) for t in WORLD_COMPANY_TABLES[0::2]}
        holding = [c for c in clusters if zorblax & set(c.members)]
        self.assertEqual(len(holding), 1)
        self.assertTrue(zorblax <= set(holding[0].members))
        self.assertEqual(holding[0].assigned_type, 'Company')

    def test_in_kb_mentions_are_attached_to_entities(self):
        self.call('run')
        aliases = {a.mention_key: a for a in read_aliases(self.output('aliases.tsv'))}
        self.assertEqual(set(aliases), {'falcon co', 'apex co'})
        self.assertEqual(aliases['falcon co'].entity_id, 'C_FALCON')
        self.assertEqual(aliases['apex co'].entity_id, 'C_APEX')
        self.assertTrue(all(a.source == ALIAS_SURFACE_FORM for a in aliases.values()))
        self.assertEqual(aliases['apex co'].n_tables, 1)
        manifest = json.loads(self.output(MANIFEST_FILE).read_text(encoding="utf-8"))
        self.assertEqual(manifest['stages'][-1]['counts']['aliases'], 2)
        clustered = {m.key for c in read_clusters(self.output('clusters.jsonl')) for m in c.members}
        self.assertFalse(clustered & set(aliases))

    def test_two_runs_are_byte_identical(self):
        self.call('run', output='first')
        self.call('run', output='second')
        for name in self.stage_files():
            self.assertEqual(
                self.output(name, 'first').read_bytes(),
                self.output(name, 'second').read_bytes(),
                name,
            )

    def test_stages_one_by_one_match_run(self):
        self.call('run', output='whole')
        for stage in STAGES:
            self.call(stage, output='staged')
        for name in self.stage_files():
            self.assertEqual(
                self.output(name, 'whole').read_bytes(),
                self.output(name, 'staged').read_bytes(),
                name,
            )

    def test_broken_kb_aborts_before_ingest(self):
        (self.world.kb_dir / 'triples.tsv').unlink()
        with self.assertRaises(CommandError) as ctx:
            self.call('run')
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertFalse(self.output('corpus.jsonl').exists())

    def test_hyphenated_stage_names(self):
        self.call('ingest')
        self.call('build-index')
        self.call('link')
        self.call('match-headings')
        self.assertTrue(self.output(INDEX_FILE).is_file())
        self.assertTrue(self.output(HEADINGS_FILE).is_file())
        self.assertEqual(
            sorted(PipelineRun.objects.values_list('stage', flat=True)),
            ['build_index', 'ingest', 'link', 'match_headings'],
        )

    def test_stage_without_its_inputs_is_a_usage_error(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('link')
        self.assertEqual(ctx.exception.returncode, 1)


class RunLogTest(PipelineCommandTestCase):

    def test_successful_stage_is_recorded(self):
        self.call('ingest')
        run = PipelineRun.objects.get(stage='ingest')
        self.assertEqual(run.status, 'success')
        self.assertIsNotNone(run.finished_at)
        self.assertEqual(run.manifest['counts']['tables'], 9)
        self.assertEqual(run.config['surface_mode'], 'embedding')

    def test_failed_stage_is_recorded(self):
        with self.assertRaises(CommandError):
            self.call('match_headings')
        run = PipelineRun.objects.get(stage='match_headings')
        self.assertEqual(run.status, 'failed')
        self.assertIn('is missing', run.error_message)


class TrainCommandTest(PipelineCommandTestCase):

    def setUp(self):
        super().setUp()
        self.fresh = self.root / 'fresh_models'

    def test_train_link_from_gold(self):
        self.call('ingest')
        self.call('build_index')
        out = self.call('train', 'link', models_dir=str(self.fresh))
        model = load_model(self.fresh / 'link.json')
        self.assertEqual(model.schema, LINK_FEATURE_SCHEMA)
        self.assertEqual(len(model.trees), settings.PIPELINE_DEFAULTS['n_trees'])
        self.assertIn('examples', out)

    def test_train_headings_from_gold(self):
        self.call('ingest')
        self.call('train', 'headings', models_dir=str(self.fresh))
        self.assertEqual(load_model(self.fresh / 'headings.json').schema, HEADING_FEATURE_SCHEMA)

    def test_training_is_deterministic(self):
        self.call('ingest')
        self.call('train', 'headings', models_dir=str(self.root / 'm1'))
        self.call('train', 'headings', models_dir=str(self.root / 'm2'))
        self.assertEqual(
            (self.root / 'm1' / 'headings.json').read_bytes(),
            (self.root / 'm2' / 'headings.json').read_bytes(),
        )

    def test_train_discover_from_feature_file(self):
        schema = feature_names('oss')
        data = Dataset(schema)
        for i in range(12):
            label = i % 2
            data.add([float(label) + 0.01 * i] * len(schema), label, key=f"m{i}")
        path = self.root / 'discover.tsv'
        write_dataset_tsv(data, path)
        self.call('train', 'discover', dataset=str(path), models_dir=str(self.fresh))
        self.assertEqual(load_model(self.fresh / 'discover.json').schema, schema)

    def test_missing_gold_is_a_usage_error(self):
        self.call('ingest')
        with self.assertRaises(CommandError) as ctx:
            self.call('train', 'headings', models_dir=str(self.fresh), heading_gold='')
        self.assertEqual(ctx.exception.returncode, 1)


class EvalCommandTest(PipelineCommandTestCase):

    def setUp(self):
        super().setUp()
        self.call('run')

    def report(self, task):
        return json.loads(self.output(f"eval_{task}.json").read_text(encoding="utf-8"))

    def test_link_report(self):
        out = self.call('eval', 'link')
        metrics = self.report('link')['metrics']
        self.assertEqual(metrics['macro_f1'], 1.0)
        self.assertEqual(metrics['micro_precision'], 1.0)
        self.assertIn('macro_f1', out)

    def test_headings_report(self):
        self.call('eval', 'headings')
        self.assertEqual(self.report('headings')['metrics']['micro_recall'], 1.0)

    def test_discover_report(self):
        self.call('eval', 'discover')
        metrics = self.report('discover')['metrics']
        self.assertEqual(metrics['accuracy'], 1.0)
        self.assertEqual(metrics['gold'], len(WORLD_NOVEL_COMPANIES) + len([WORLD_NOVEL_CITY]) + len(WORLD_ALIAS_ROWS))

    def test_discover_report_with_wd_sweep(self):
        path = self.root / 'wd.json'
        self.call('eval', 'discover', wd_sweep=True, report=str(path))
        metrics = json.loads(path.read_text(encoding="utf-8"))['metrics']
        self.assertIn('wd_title@1', metrics)
        self.assertIn('wd_title+content@10', metrics)

    def test_resolve_report(self):
        self.call('eval', 'resolve')
        metrics = self.report('resolve')['metrics']
        self.assertEqual(metrics['pairs'], 4)

    def test_kb_stats(self):
        out = self.call('kb_stats')
        self.assertIn('entities: 22', out)
        self.assertIn('properties: 3', out)


class HeldOutWorldTest(TestCase):
    """Every model trained from the gold of 32 tables, scored on the 8 held-out tables."""

    @classmethod
    def setUpTestData(cls):
        tmp = tempfile.TemporaryDirectory()
        cls.addClassCleanup(tmp.cleanup)
        cls.root = Path(tmp.name)
        cls.world = write_large_world(cls.root / 'world')
        cls.train = cls.paths(cls.world.train)
        call_command('run', stdout=StringIO(), **cls.train)
        cls.metrics = {}
        for task in ('link', 'headings', 'discover', 'resolve'):
            report = cls.root / f"held_out_{task}.json"
            call_command('eval', task, report=str(report), stdout=StringIO(), **cls.paths(cls.world.test))
            cls.metrics[task] = json.loads(report.read_text(encoding="utf-8"))['metrics']

    @classmethod
    def paths(cls, world):
        return dict(
            corpus_path=str(world.corpus),
            kb_dir=str(world.kb_dir),
            models_dir=str(cls.root / 'models'),
            output_dir=str(cls.root / 'out'),
            link_gold=str(world.link_gold),
            heading_gold=str(world.heading_gold),
            discovery_gold=str(world.discovery_gold),
            resolution_gold=str(world.resolution_gold),
            surface_mode='embedding',
        )

    def test_models_were_trained_from_the_training_gold(self):
        for task in ('link', 'headings', 'discover'):
            self.assertTrue((self.root / 'models' / f"{task}.json").is_file(), task)
        self.assertEqual(len(self.world.test_tables), 8)

    def test_held_out_linking(self):
        metrics = self.metrics['link']
        self.assertEqual(metrics['gold'], 8 * 4)
        self.assertGreaterEqual(metrics['macro_f1'], 0.95)

    def test_held_out_heading_matching(self):
        metrics = self.metrics['headings']
        self.assertEqual(metrics['gold'], 8 * 2)
        self.assertGreaterEqual(metrics['macro_f1'], 0.95)

    def test_held_out_discovery(self):
        metrics = self.metrics['discover']
        self.assertEqual(metrics['gold'], 8 + 4)
        self.assertGreaterEqual(metrics['accuracy'], 0.90)

    def test_held_out_resolution(self):
        metrics = self.metrics['resolve']
        self.assertEqual(metrics['pairs'], 4 + 3)
        self.assertGreaterEqual(metrics['accuracy'], 0.95)

    def test_combined_families_keep_up_with_the_best_single_family(self):
        runner = PipelineRunner(load_config(**self.train))
        data = runner.dataset('discover')
        folds = runner.config.cv_folds
        single = {
            family: cross_validate(data.select(feature_names(family)), folds, runner.config.learner('discover'))
            .mean('accuracy')
            for family in ('origin', 'saliency', 'semantic')
        }
        combined = cross_validate(data.select(feature_names('oss')), folds, runner.config.learner('discover'))
        self.assertGreaterEqual(combined.mean('accuracy'), max(single.values()) - 0.02)
