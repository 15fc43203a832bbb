import tempfile
from collections import Counter
from pathlib import Path

from django.test import SimpleTestCase

from apps.corpus.domain import normalize_mention
from apps.corpus.services import core_mentions
from apps.headmatch.domain import ColumnMatch, HeadingMatch
from apps.learn.domain import Dataset, LearnerConfig
from apps.learn.services import train
from apps.link.domain import Link, LinkAssignment, TableTypeVote
from apps.retrieve.services import build_index
from apps.sim.services import label_similarity
from core.exceptions import SchemaMismatchError
from core.testing import SMALL_EMBEDDINGS, constant_model, make_embeddings, make_kb, single_column, threshold_model

from .domain import IN_KB, NOT_ENTITY, OUT_OF_KB, MentionDossier, OriginTable
from .services import (
    build_discovery_dataset,
    build_dossiers,
    classify_mention,
    discover_mentions,
    discovery_features,
    feature_names,
    med_features,
    read_discoveries,
    semantic_features,
    temporal_features,
    wd_accuracy,
    wd_feature,
    write_discoveries,
)


def linked(table, links, types=('Company',)):
    """Assignment for ``table`` with row index → entity id links."""
    mentions = core_mentions(table)
    by_row = {m.row_index: m for m in mentions}
    return LinkAssignment(
        table.id,
        mentions,
        TableTypeVote(frozenset(types)),
        {
            row: Link(table.id, row, by_row[row].raw, by_row[row].key, entity_id, 1.0)
            for row, entity_id in links.items()
        },
    )


def dossier_with_years(years):
    """years: year → occurrences, one origin table per year."""
    tables = {
        f't{year}': OriginTable(f't{year}', f'core{year}', 1, 0.5, 0, year, count)
        for year, count in years.items()
    }
    return MentionDossier(normalize_mention('acme'), Counter({'Acme': 1}), tables)


class DossierTest(SimpleTestCase):

    def corpus(self):
        t1 = single_column('t1', ['IBM', 'Cisco Systems', 'Acme Widgets'], year=2013)
        t2 = single_column('t2', ['IBM', 'Cisco Systems', 'Acme Widgets'], year=2014)
        t3 = single_column('t3', ['IBM', 'acme  widgets', 'Globex'], year=2015)
        t4 = single_column('t4', ['Acme Widgets', 'Initech'])
        assignments = {
            't1': linked(t1, {0: 'E_IBM', 1: 'E_CISCO'}),
            't2': linked(t2, {0: 'E_IBM', 1: 'E_CISCO'}),
            't3': linked(t3, {0: 'E_IBM'}),
            't4': linked(t4, {}),
        }
        return [t1, t2, t3, t4], assignments

    def test_counts_over_linkable_tables(self):
        tables, assignments = self.corpus()
        dossier = build_dossiers(tables, assignments)['acme widgets']
        self.assertEqual(dossier.origin_table_ids, ('t1', 't2', 't3'))
        self.assertEqual(dossier.identical_core_groups, 2)
        self.assertEqual(dossier.usage_years, {2013: 1, 2014: 1, 2015: 1})
        self.assertEqual(dossier.canonical_form, 'Acme Widgets')
        self.assertAlmostEqual(dossier.tables['t3'].link_rate, 1 / 3)

    def test_unlinkable_tables_contribute_nothing(self):
        tables, assignments = self.corpus()
        dossiers = build_dossiers(tables, assignments)
        self.assertNotIn('initech', dossiers)
        self.assertNotIn('ibm', dossiers)

    def test_link_rate(self):
        names = [f'Company {c}' for c in 'ABCDEFGHIJ']
        table = single_column('t', names)
        dossiers = build_dossiers([table], {'t': linked(table, {0: 'E_IBM', 1: 'E_IBM', 2: 'E_CISCO', 3: 'E_CISCO'})})
        self.assertEqual(dossiers['company j'].tables['t'].link_rate, 0.4)

    def test_repeated_mention_counts_its_table_once(self):
        table = single_column('t', ['IBM', 'Acme', 'acme', 'Acme'], year=2014)
        dossier = build_dossiers([table], {'t': linked(table, {0: 'E_IBM'})})['acme']
        self.assertEqual(dossier.n_tables, 1)
        self.assertEqual(dossier.usage_years, {2014: 3})
        self.assertEqual(dossier.raw_forms, {'Acme': 2, 'acme': 1})
        self.assertEqual(dossier.canonical_form, 'Acme')

    def test_header_repeated_in_body(self):
        table = single_column('t', ['IBM', 'Company'], heading='Company')
        dossiers = build_dossiers([table], {'t': linked(table, {0: 'E_IBM'})})
        self.assertTrue(dossiers['company'].appears_as_header)

    def test_matched_headings_are_counted(self):
        table = single_column('t', ['IBM', 'Acme'])
        match = HeadingMatch('t', {0: ColumnMatch('t', 0, 'name', 'location', 1.0)})
        dossiers = build_dossiers([table], {'t': linked(table, {0: 'E_IBM'})}, {'t': match})
        self.assertEqual(dossiers['acme'].tables['t'].matched_headings, 1)

    def test_merge_is_order_free(self):
        a = dossier_with_years({2013: 1})
        b = dossier_with_years({2014: 2})
        self.assertEqual(a.merge(b).tables, b.merge(a).tables)
        self.assertEqual(a.merge(b).raw_forms, Counter({'Acme': 2}))

    def test_origin_aggregates(self):
        tables, assignments = self.corpus()
        features = discovery_features(
            build_dossiers(tables, assignments)['acme widgets'], assignments,
            build_index(make_kb()), build_index(make_kb()), make_kb(), make_embeddings(SMALL_EMBEDDINGS),
        )
        self.assertEqual(features['n_tables'], 3.0)
        self.assertEqual(features['linked_sum'], 5.0)
        self.assertEqual(features['linked_max'], 2.0)
        self.assertEqual(features['linked_min'], 1.0)
        self.assertAlmostEqual(features['linked_avg'], 5 / 3)
        self.assertLessEqual(features['link_rate_min'], features['link_rate_avg'])
        self.assertLessEqual(features['link_rate_avg'], features['link_rate_max'])
        self.assertAlmostEqual(features['link_rate_sum'], features['link_rate_avg'] * 3)

    def test_single_table_std_is_zero(self):
        features = discovery_features(
            dossier_with_years({2013: 1}), {}, build_index(make_kb()), build_index(make_kb()),
            make_kb(), make_embeddings(SMALL_EMBEDDINGS),
        )
        self.assertEqual(features['linked_std'], 0.0)
        self.assertEqual(features['link_rate_std'], 0.0)


class SaliencyTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()
        cls.index = build_index(cls.kb)

    def test_identical_pair_scores_one(self):
        table = single_column('t', ['IBM', 'Acme'])
        assignments = {'t': linked(table, {0: 'E_IBM'})}
        dossier = build_dossiers([table], assignments)['acme']
        self.assertEqual(med_features(dossier, assignments, self.kb), (1.0, 1.0, 1.0, 1.0))

    def test_aggregates_over_pairs(self):
        table = single_column('t', ['IBM', 'Cisco', 'Acme'])
        assignments = {'t': linked(table, {0: 'E_IBM', 1: 'E_CISCO'})}
        dossier = build_dossiers([table], assignments)['acme']
        low = label_similarity('cisco', 'cisco systems')
        self.assertEqual(med_features(dossier, assignments, self.kb), (1.0, 1.0 + low, (1.0 + low) / 2, low))

    def test_no_linked_pairs(self):
        self.assertEqual(med_features(dossier_with_years({2013: 1}), {}, self.kb), (0.0, 0.0, 0.0, 0.0))

    def test_identical_core_duplicates_collapse(self):
        t1 = single_column('t1', ['IBM', 'Cisco', 'Acme'])
        t2 = single_column('t2', ['IBM', 'Cisco', 'Acme'])
        assignments = {'t1': linked(t1, {0: 'E_IBM', 1: 'E_CISCO'}), 't2': linked(t2, {0: 'E_IBM', 1: 'E_CISCO'})}
        single = build_dossiers([t1], assignments)['acme']
        double = build_dossiers([t1, t2], assignments)['acme']
        self.assertEqual(med_features(single, assignments, self.kb), med_features(double, assignments, self.kb))
        self.assertNotEqual(
            med_features(single, assignments, self.kb, collapse_identical_cores=False),
            med_features(double, assignments, self.kb, collapse_identical_cores=False),
        )

    def test_wd_exact_label(self):
        self.assertEqual(wd_feature('IBM', self.index, self.kb, k=1), 1.0)

    def test_wd_without_hits(self):
        self.assertEqual(wd_feature('zzzz', self.index, self.kb, k=5), 0.0)

    def test_wd_monotone_in_k(self):
        values = [wd_feature('Boston film', self.index, self.kb, k) for k in (1, 2, 3, 5)]
        self.assertEqual(values, sorted(values))


class SemanticTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()
        cls.index = build_index(cls.kb)
        cls.emb = make_embeddings(SMALL_EMBEDDINGS)

    def test_same_types_and_label(self):
        table = single_column('t', ['Cisco Systems', 'IBM'])
        assignments = {'t': linked(table, {0: 'E_CISCO'})}
        dossier = build_dossiers([table], assignments)['ibm']
        neural, topical, lexical = semantic_features('IBM', dossier, assignments, self.index, self.kb, self.emb)
        self.assertAlmostEqual(neural, 1.0)
        self.assertAlmostEqual(topical, 1.0)
        self.assertEqual(lexical, 0.0)

    def test_disjoint_types(self):
        table = single_column('t', ['Boston', 'IBM'])
        assignments = {'t': linked(table, {0: 'E_BOSTON'}, types=('City',))}
        dossier = build_dossiers([table], assignments)['ibm']
        _, topical, _ = semantic_features('IBM', dossier, assignments, self.index, self.kb, self.emb)
        self.assertEqual(topical, 0.0)

    def test_no_candidate(self):
        dossier = dossier_with_years({2013: 1})
        self.assertEqual(semantic_features('zzzz', dossier, {}, self.index, self.kb, self.emb), (0.0, 0.0, 0.0))


class TemporalTest(SimpleTestCase):

    def test_rising_usage(self):
        slope, r_squared, since, frequency = temporal_features(dossier_with_years({2013: 1, 2014: 2, 2015: 3}))
        self.assertAlmostEqual(slope, 1.0)
        self.assertAlmostEqual(r_squared, 1.0)
        self.assertEqual((since, frequency), (2013.0, 3.0))

    def test_empty(self):
        self.assertEqual(temporal_features(dossier_with_years({})), (0.0, 0.0, 0.0, 0.0))

    def test_single_year(self):
        self.assertEqual(temporal_features(dossier_with_years({2016: 4})), (0.0, 0.0, 2016.0, 1.0))

    def test_flat_usage_has_zero_r_squared(self):
        slope, r_squared, _, _ = temporal_features(dossier_with_years({2013: 2, 2014: 2}))
        self.assertEqual((slope, r_squared), (0.0, 0.0))


class ClassifyTest(SimpleTestCase):

    def test_noise_is_not_an_entity(self):
        verdict = classify_mention(constant_model(('wd',)), {}, noise_flag=True)
        self.assertEqual(verdict.label, NOT_ENTITY)

    def test_low_wd_is_out_of_kb(self):
        model = threshold_model(('wd',), 'wd', 0.5, above=False)
        self.assertEqual(classify_mention(model, {'wd': 0.2}, False), (OUT_OF_KB, 1.0))
        self.assertEqual(classify_mention(model, {'wd': 0.9}, False), (IN_KB, 0.0))

    def test_trained_model_separates(self):
        data = Dataset(('wd', 'n_tables'))
        for i in range(10):
            data.add([0.9 + i / 100, 1.0], 0, key=f'in{i}')
            data.add([0.1 + i / 100, 2.0], 1, key=f'out{i}')
        model = train(data, LearnerConfig(n_trees=15, max_depth=8, seed=5))
        verdict = classify_mention(model, {'wd': 0.12, 'n_tables': 2.0}, False)
        self.assertEqual(verdict.label, OUT_OF_KB)
        self.assertGreater(verdict.score, 0.5)

    def test_unknown_feature_is_a_schema_error(self):
        with self.assertRaises(SchemaMismatchError):
            classify_mention(constant_model(('bogus',)), {'wd': 0.1}, False)

    def test_three_way_entity_model(self):
        verdict = classify_mention(constant_model(('wd',)), {'wd': 0.1}, False, entity_model=constant_model(('wd',)))
        self.assertEqual(verdict.label, NOT_ENTITY)

    def test_feature_presets(self):
        self.assertEqual(len(feature_names('oss')), 26)
        self.assertEqual(feature_names('lin'), ('slope', 'r_squared', 'usage_since_year', 'frequency'))
        self.assertEqual(feature_names('slope'), ('slope',))
        self.assertEqual(feature_names('origin+slope')[-1], 'slope')
        with self.assertRaises(ValueError):
            feature_names('nope')


class DiscoverMentionsTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()
        cls.index = build_index(cls.kb)

    def setUp(self):
        t1 = single_column('t1', ['IBM', 'Acme', '1,234.5'])
        t2 = single_column('t2', ['Cisco Systems', 'Acme', 'Globex'])
        self.assignments = {'t1': linked(t1, {0: 'E_IBM'}), 't2': linked(t2, {0: 'E_CISCO'})}
        self.dossiers = build_dossiers([t1, t2], self.assignments)

    def run_discovery(self, **options):
        return discover_mentions(
            self.dossiers, self.assignments, self.index, self.index, self.kb,
            make_embeddings(SMALL_EMBEDDINGS), constant_model(feature_names('oss')), **options
        )

    def test_every_dossier_gets_a_verdict(self):
        results = {d.mention_key: d for d in self.run_discovery()}
        self.assertEqual(sorted(results), ['1,234.5', 'acme', 'globex'])
        self.assertEqual(results['1,234.5'].verdict, NOT_ENTITY)
        self.assertEqual(results['acme'].verdict, OUT_OF_KB)
        self.assertEqual(results['acme'].n_tables, 2)
        self.assertEqual(results['acme'].example_table_id, 't1')

    def test_min_tables(self):
        self.assertEqual([d.mention_key for d in self.run_discovery(min_tables=2)], ['acme'])

    def test_discoveries_file(self):
        results = self.run_discovery()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'discoveries.tsv'
            write_discoveries(path, results)
            restored = read_discoveries(path)
        self.assertEqual(restored['acme'].verdict, OUT_OF_KB)
        self.assertEqual(restored['globex'].n_tables, 1)

    def test_dataset_drops_non_entities_for_binary_task(self):
        features = {'acme': {'wd': 0.1}, 'globex': {'wd': 0.2}, 'noise': {'wd': 0.0}}
        gold = {'acme': OUT_OF_KB, 'globex': IN_KB, 'noise': NOT_ENTITY, 'missing': IN_KB}
        data = build_discovery_dataset(features, gold, schema=('wd',))
        self.assertEqual(data.keys, ['acme', 'globex'])
        self.assertEqual(data.labels, [1, 0])
        entity = build_discovery_dataset(features, gold, schema=('wd',), target=NOT_ENTITY)
        self.assertEqual(entity.labels, [0, 0, 1])

    def test_wd_accuracy_uses_best_threshold(self):
        scores = {'a': 1.0, 'b': 0.2, 'c': 0.9}
        gold = {'a': IN_KB, 'b': OUT_OF_KB, 'c': IN_KB}
        self.assertEqual(wd_accuracy(scores, gold), 1.0)
