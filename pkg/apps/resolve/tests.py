import math
import tempfile
from collections import Counter
from itertools import permutations
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.discover.domain import IN_KB, OUT_OF_KB, Discovery
from apps.link.domain import Link, LinkAssignment, TableTypeVote
from apps.corpus.services import core_mentions
from apps.retrieve.services import build_index
from core.exceptions import DataError, SchemaMismatchError
from core.testing import make_kb, make_table, single_column, threshold_model

from .domain import (
    ALIAS_SEARCH,
    ALIAS_SURFACE_FORM,
    SURFACE_MODE_EMBEDDING,
    EntityAlias,
    MentionEmbeddings,
    Occurrence,
    TableProfile,
    TypeDistribution,
)
from .services import (
    alias_mentions,
    build_profiles,
    build_surface_dataset,
    candidate_key_pairs,
    candidate_pairs,
    cluster,
    heading_bipartite_similarity,
    load_mention_embeddings,
    matching_score,
    read_aliases,
    read_clusters,
    resolve_mentions,
    resolve_pair,
    save_mention_embeddings,
    surface_feature_names,
    surface_features,
    surface_resolve,
    table_similarity_features,
    table_type_distribution,
    train_mention_embeddings,
    tune_embedding_threshold,
    type_resolve,
    write_aliases,
    write_clusters,
)


def brute_force_matching(weights):
    rows, cols = weights.shape
    if rows > cols:
        return brute_force_matching(weights.T)
    best = max(sum(weights[i, p[i]] for i in range(rows)) for p in permutations(range(cols), rows))
    return best / max(rows, cols)


def assignment(table, links):
    mentions = core_mentions(table)
    by_row = {m.row_index: m for m in mentions}
    return LinkAssignment(
        table.id, mentions, TableTypeVote(frozenset(['Company'])),
        {row: Link(table.id, row, by_row[row].raw, by_row[row].key, e, 1.0) for row, e in links.items()},
    )


def embeddings(vectors):
    return MentionEmbeddings(2, {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()})


class TypeDistributionTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()

    def test_same_types_share_weight(self):
        dist = table_type_distribution({0: 'E_IBM', 1: 'E_CISCO'}, self.kb)
        third = 1 / math.sqrt(3)
        for type_id in ('Company', 'Organisation', 'Agent'):
            self.assertAlmostEqual(dist.as_dict()[type_id], third)

    def test_mixed_types(self):
        dist = table_type_distribution({0: 'E_IBM', 1: 'E_BOSTON'}, self.kb)
        self.assertEqual(len(dist.weights), 6)
        self.assertAlmostEqual(sum(w * w for _, w in dist.weights), 1.0)

    def test_no_links(self):
        self.assertTrue(table_type_distribution({}, self.kb).is_empty)

    def test_type_resolution(self):
        companies = table_type_distribution({0: 'E_IBM'}, self.kb)
        cities = table_type_distribution({0: 'E_BOSTON'}, self.kb)
        self.assertTrue(type_resolve(companies, companies, 0.95))
        self.assertTrue(type_resolve(companies, companies, 1.0))
        self.assertFalse(type_resolve(companies, cities, 0.95))
        self.assertFalse(type_resolve(companies, TypeDistribution(), 0.0))

    def test_dominant_type_prefers_specific(self):
        dist = table_type_distribution({0: 'E_IBM'}, self.kb)
        self.assertEqual(dist.dominant_type(), 'Agent')
        self.assertEqual(dist.dominant_type(self.kb.hierarchy.depth), 'Company')


class BipartiteTest(SimpleTestCase):

    def test_two_by_two(self):
        self.assertAlmostEqual(matching_score([[0.9, 0.1], [0.2, 0.8]]), 0.85)

    def test_identical_headings(self):
        self.assertEqual(heading_bipartite_similarity(['name', 'year'], ['year', 'name']), 1.0)

    def test_disjoint_headings(self):
        self.assertEqual(heading_bipartite_similarity(['aaa'], ['bbb']), 0.0)

    def test_empty_side(self):
        self.assertEqual(heading_bipartite_similarity([], ['name']), 0.0)

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            rows, cols = rng.integers(1, 7, size=2)
            weights = rng.random((rows, cols))
            self.assertAlmostEqual(matching_score(weights), brute_force_matching(weights))


class TableSimilarityTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()

    def test_table_with_itself(self):
        table = make_table('t', ['name', 'city'], [['IBM', 'Armonk']], page_title='tech firms',
                           caption='largest companies', text='listed by revenue')
        features = table_similarity_features(table, table, {0: 'E_IBM'}, {0: 'E_IBM'}, self.kb)
        for name in ('caption_jaccard', 'title_jaccard', 'text_jaccard', 'heading_jaccard', 'entity_jaccard'):
            self.assertEqual(features[name], 1.0)
        self.assertAlmostEqual(features['type_cosine'], 1.0)
        self.assertEqual(features['heading_bipartite'], 1.0)

    def test_disjoint_tables(self):
        t1 = make_table('t1', ['aaa'], [['IBM']], caption='one')
        t2 = make_table('t2', ['bbb'], [['Boston']], caption='two')
        features = table_similarity_features(t1, t2, {0: 'E_IBM'}, {0: 'E_BOSTON'}, self.kb)
        self.assertEqual(set(features.values()), {0.0})

    def test_heading_set_jaccard(self):
        t1 = make_table('t1', ['a', 'b'], [['x', 'y']])
        t2 = make_table('t2', ['b', 'c'], [['x', 'y']])
        self.assertAlmostEqual(table_similarity_features(t1, t2, {}, {}, self.kb)['heading_jaccard'], 1 / 3)


class SurfaceResolutionTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        kb = make_kb()
        t1 = single_column('t1', ['IBM', 'Trustees Of Boston University'], caption='university trustees')
        t2 = single_column('t2', ['Cisco Systems', 'Trustees Of Boston'], caption='university trustees')
        cls.profiles = build_profiles([t1, t2], {'t1': assignment(t1, {0: 'E_IBM'}), 't2': assignment(t2, {0: 'E_CISCO'})}, kb)
        cls.university = Occurrence('trustees of boston university', 't1')
        cls.trustees = Occurrence('trustees of boston', 't2')
        cls.memb = embeddings({'trustees of boston university': [1.0, 0.0], 'trustees of boston': [0.0, 1.0]})

    def test_features_are_symmetric(self):
        forward = surface_features(self.university, self.trustees, self.profiles, self.memb)
        backward = surface_features(self.trustees, self.university, self.profiles, self.memb)
        self.assertEqual(forward, backward)
        self.assertEqual(forward['substring'], 1.0)

    def test_same_mention_same_table(self):
        self.assertTrue(resolve_pair(self.university, self.university, self.profiles, self.memb))

    def test_trustees_stay_apart_in_embedding_mode(self):
        self.assertFalse(surface_resolve(
            self.university, self.trustees, self.profiles, self.memb, mode=SURFACE_MODE_EMBEDDING))

    def test_trustees_stay_apart_under_cosine_model(self):
        model = threshold_model(surface_feature_names('string+embedding'), 'mention_cosine', 0.95)
        self.assertFalse(surface_resolve(self.university, self.trustees, self.profiles, self.memb, model))

    def test_embedding_threshold(self):
        close = embeddings({'a': [1.0, 0.0], 'b': [0.99, 0.05]})
        a, b = Occurrence('a', 't1'), Occurrence('b', 't2')
        self.assertTrue(surface_resolve(a, b, self.profiles, close, mode=SURFACE_MODE_EMBEDDING))
        self.assertFalse(surface_resolve(a, b, self.profiles, close, mode=SURFACE_MODE_EMBEDDING, threshold=0.9999))

    def test_model_schema_is_checked(self):
        model = threshold_model(('bogus',), 'bogus', 0.5)
        with self.assertRaises(SchemaMismatchError):
            surface_resolve(self.university, self.trustees, self.profiles, self.memb, model)

    def test_dataset_from_gold(self):
        gold = {
            (('trustees of boston', 't2'), ('trustees of boston university', 't1')): False,
            (('ibm', 't1'), ('ibm', 'missing')): True,
        }
        data = build_surface_dataset(gold, self.profiles, self.memb)
        self.assertEqual(len(data), 1)
        self.assertEqual(data.labels, [0])
        self.assertEqual(data.schema, surface_feature_names('string+table'))

    def test_feature_names(self):
        self.assertEqual(len(surface_feature_names('string+table')), 11)
        self.assertEqual(surface_feature_names(), surface_feature_names('string+table'))
        self.assertNotIn('mention_cosine', surface_feature_names())
        self.assertEqual(surface_feature_names('string+table+embedding')[-1], 'mention_cosine')
        with self.assertRaises(ValueError):
            surface_feature_names('string+nope')


class CandidatePairsTest(SimpleTestCase):

    def test_window_limits_neighbours(self):
        pairs = candidate_key_pairs(['a', 'b', 'c', 'd'], window=1, neighbours=5)
        self.assertEqual(pairs, {('a', 'b'), ('b', 'c'), ('c', 'd')})

    def test_closest_neighbours_kept(self):
        pairs = candidate_key_pairs(['acme', 'acme corp', 'acme inc', 'zeta'], window=20, neighbours=1)
        self.assertIn(('acme corp', 'acme inc'), pairs)
        self.assertNotIn(('acme', 'zeta'), pairs)

    def test_same_key_across_tables(self):
        pairs = candidate_pairs([Occurrence('acme', 't1'), Occurrence('acme', 't2')])
        self.assertEqual(pairs, [(Occurrence('acme', 't1'), Occurrence('acme', 't2'))])

    def test_threshold_tuning(self):
        threshold, score = tune_embedding_threshold([0.97, 0.96, 0.5, 0.6], [1, 1, 0, 0])
        self.assertEqual((threshold, score), (0.65, 1.0))


class ClusterTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()
        dist = table_type_distribution({0: 'E_IBM'}, cls.kb)
        table = single_column('t', ['IBM'])
        cls.profiles = {tid: TableProfile(table, {0: 'E_IBM'}, dist) for tid in ('t1', 't2', 't3')}
        cls.a, cls.b, cls.c = Occurrence('a', 't1'), Occurrence('b', 't2'), Occurrence('c', 't3')

    def test_transitive_closure(self):
        clusters = cluster([self.a, self.b, self.c], [(self.a, self.b), (self.b, self.c)], self.profiles, {}, self.kb)
        self.assertEqual(len(clusters), 1)
        self.assertEqual(clusters[0].members, [self.a, self.b, self.c])
        self.assertEqual(clusters[0].provenance, ['t1', 't2', 't3'])

    def test_order_of_pairs_does_not_matter(self):
        forward = cluster([self.a, self.b, self.c], [(self.a, self.b), (self.b, self.c)], self.profiles, {})
        backward = cluster([self.c, self.b, self.a], [(self.c, self.b), (self.b, self.a)], self.profiles, {})
        self.assertEqual([c.to_record() for c in forward], [c.to_record() for c in backward])

    def test_singletons_without_positives(self):
        clusters = cluster([self.a, self.b], [], self.profiles, {}, self.kb)
        self.assertEqual([c.size for c in clusters], [1, 1])

    def test_type_and_canonical_form(self):
        raw = {self.a: Counter({'ACME': 1}), self.b: Counter({'Acme': 2})}
        (only,) = cluster([self.a, self.b], [(self.a, self.b)], self.profiles, raw, self.kb)
        self.assertEqual(only.assigned_type, 'Company')
        self.assertEqual(only.canonical, 'Acme')

    def test_clusters_file(self):
        clusters = cluster([self.a, self.b], [(self.a, self.b)], self.profiles, {}, self.kb)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'clusters.jsonl'
            self.assertEqual(write_clusters(path, clusters), 1)
            restored = read_clusters(path)
        self.assertEqual([c.to_record() for c in restored], [c.to_record() for c in clusters])


class ResolveMentionsTest(SimpleTestCase):

    def test_out_of_kb_mentions_are_grouped_by_table_type(self):
        kb = make_kb()
        t1 = single_column('t1', ['IBM', 'Acme'])
        t2 = single_column('t2', ['Cisco Systems', 'Acme'])
        t3 = single_column('t3', ['Boston', 'Acme', 'Globex'])
        assignments = {
            't1': assignment(t1, {0: 'E_IBM'}),
            't2': assignment(t2, {0: 'E_CISCO'}),
            't3': assignment(t3, {0: 'E_BOSTON'}),
        }
        discoveries = {
            'acme': Discovery('acme', OUT_OF_KB, 1.0, 3, 't1'),
            'globex': Discovery('globex', IN_KB, 0.0, 1, 't3'),
        }
        clusters = resolve_mentions(
            build_profiles([t1, t2, t3], assignments, kb), kb, assignments.values(), discoveries,
            embeddings({'acme': [1.0, 0.0]}), mode=SURFACE_MODE_EMBEDDING,
        )
        self.assertEqual(
            [[(m.key, m.table_id) for m in c.members] for c in clusters],
            [[('acme', 't1'), ('acme', 't2')], [('acme', 't3')]],
        )
        self.assertEqual([c.assigned_type for c in clusters], ['Company', 'City'])


class MentionEmbeddingTest(SimpleTestCase):

    def corpus(self):
        tables = []
        for i in range(30):
            tables.append(single_column(f'a{i:02d}', ['alpha', 'beta', 'gamma', 'delta']))
            tables.append(single_column(f'b{i:02d}', ['red', 'green', 'blue', 'white']))
        tables.append(single_column('rare', ['lonely']))
        return tables

    def train(self, seed=1):
        return train_mention_embeddings(self.corpus(), dimension=16, window=3, negatives=3, epochs=10,
                                        seed=seed, learning_rate=0.05)

    def test_cooccurring_mentions_are_closer(self):
        memb = self.train()
        self.assertGreater(memb.cosine('alpha', 'beta'), memb.cosine('alpha', 'red'))
        self.assertGreater(memb.cosine('red', 'blue'), memb.cosine('blue', 'gamma'))

    def test_rare_mentions_have_no_vector(self):
        memb = self.train()
        self.assertNotIn('lonely', memb)
        self.assertEqual(memb.cosine('lonely', 'alpha'), 0.0)

    def test_fixed_seed_is_reproducible(self):
        first, second = self.train(seed=4), self.train(seed=4)
        for key in first.vectors:
            np.testing.assert_array_equal(first.vectors[key], second.vectors[key])

    def test_embeddings_file(self):
        memb = self.train()
        with tempfile.TemporaryDirectory() as tmp:
            path = save_mention_embeddings(memb, Path(tmp) / 'mention_embeddings.json')
            restored = load_mention_embeddings(path)
        self.assertEqual(restored.metadata['seed'], 1)
        np.testing.assert_array_equal(restored.vectors['alpha'], memb.vectors['alpha'])


class AliasTest(SimpleTestCase):
    def setUp(self):
        self.kb = make_kb()
        self.index = build_index(self.kb)

    def discoveries(self, verdicts):
        return {key: Discovery(key, verdict, 0.9, 2, 't1') for key, verdict in verdicts.items()}

    def test_in_kb_mentions_get_an_entity(self):
        aliases = alias_mentions(self.discoveries({
            'beantown': IN_KB,
            'cisco networks': IN_KB,
            'zzqx': IN_KB,
            'boston': OUT_OF_KB,
        }), self.index, self.kb)
        self.assertEqual(aliases, [
            EntityAlias('beantown', 'E_BOSTON', ALIAS_SURFACE_FORM, 2),
            EntityAlias('cisco networks', 'E_CISCO', ALIAS_SEARCH, 2),
        ])

    def test_aliases_file(self):
        aliases = [EntityAlias('beantown', 'E_BOSTON', ALIAS_SURFACE_FORM, 3)]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'aliases.tsv'
            self.assertEqual(write_aliases(path, aliases), 1)
            self.assertEqual(read_aliases(path), aliases)
            path.write_text("mention_key\tentity_id\tsource\tn_tables\nbeantown\tE_BOSTON\n")
            with self.assertRaises(DataError):
                read_aliases(path)
