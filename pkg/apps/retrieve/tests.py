import math
import pickle
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from core.exceptions import DataError
from core.testing import make_kb

from .domain import FIELDS_TITLE_CONTENT
from .services import build_index, load_index, relevance_scores, save_index, search, tokenize


class BuildIndexTest(SimpleTestCase):

    def setUp(self):
        self.kb = make_kb()

    def test_titles_include_surface_forms(self):
        index = build_index(self.kb)
        self.assertEqual(index.n_docs, 6)
        self.assertEqual([e for e, _ in index.postings['beantown']], ['E_BOSTON'])
        self.assertEqual([e for e, _ in index.postings['boston']], ['E_BOSTON', 'E_BOSTON_FILM'])
        self.assertNotIn('networking', index.vocabulary)

    def test_content_terms_are_down_weighted(self):
        index = build_index(self.kb, FIELDS_TITLE_CONTENT, content_weight=0.25)
        self.assertEqual(index.postings['networking'], [('E_CISCO', 0.25)])

    def test_unknown_fields(self):
        with self.assertRaises(ValueError):
            build_index(self.kb, 'body')

    def test_tokenize(self):
        self.assertEqual(tokenize("Boston (film)"), ['boston', 'film'])


class SearchTest(SimpleTestCase):

    def setUp(self):
        self.kb = make_kb()
        self.index = build_index(self.kb)

    def test_popularity_breaks_equal_relevance(self):
        results = search(self.index, 'Boston')
        self.assertEqual([c.entity_id for c in results], ['E_BOSTON', 'E_BOSTON_FILM'])
        self.assertEqual([c.rank for c in results], [1, 2])
        self.assertGreater(results[0].retrieval_score, results[1].retrieval_score)

    def test_popularity_boost_formula(self):
        relevance = relevance_scores(self.index, 'boston')
        results = {c.entity_id: c.retrieval_score for c in search(self.index, 'boston')}
        self.assertAlmostEqual(results['E_BOSTON'], relevance['E_BOSTON'] * (1 + 0.3 * math.log1p(80)))

    def test_entity_id_breaks_exact_ties(self):
        index = build_index(self.kb, popularity_lambda=0.0)
        results = search(index, 'boston')
        self.assertEqual(results[0].retrieval_score, results[1].retrieval_score)
        self.assertEqual([c.entity_id for c in results], ['E_BOSTON', 'E_BOSTON_FILM'])

    def test_only_matching_entities_are_returned(self):
        self.assertEqual(search(self.index, 'zzz'), [])
        self.assertEqual(search(self.index, '   '), [])

    def test_k_limits_results(self):
        self.assertEqual(len(search(self.index, 'boston', k=1)), 1)
        with self.assertRaises(ValueError):
            search(self.index, 'boston', k=0)

    def test_rarer_terms_score_higher(self):
        scores = relevance_scores(self.index, 'fc edmonton')
        self.assertGreater(scores['E_EDMONTON'], scores['E_TORONTO'])

    def test_content_search_finds_descriptions(self):
        index = build_index(self.kb, FIELDS_TITLE_CONTENT)
        self.assertEqual([c.entity_id for c in search(index, 'networking')], ['E_CISCO'])
        self.assertEqual(search(self.index, 'networking'), [])

    def test_smaller_k_is_a_prefix_and_repeats_are_stable(self):
        index = build_index(self.kb, FIELDS_TITLE_CONTENT)
        queries = ['boston', 'fc', 'canadian soccer club', 'ibm company', 'cisco systems boston', 'film drama']
        for query in queries:
            full = search(index, query, k=10)
            self.assertEqual(search(index, query, k=10), full)
            scores = [c.retrieval_score for c in full]
            self.assertEqual(scores, sorted(scores, reverse=True))
            for k in range(1, 8):
                self.assertEqual(search(index, query, k=k), full[:k], msg=(query, k))


class IndexFileTest(SimpleTestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.path = Path(tmp.name) / 'index.bin'

    def test_saved_index_searches_the_same(self):
        index = build_index(make_kb())
        save_index(index, self.path)
        self.assertEqual(search(load_index(self.path), 'boston'), search(index, 'boston'))

    def test_foreign_pickle_is_rejected(self):
        with open(self.path, "wb") as handle:
            pickle.dump({'format': 'other'}, handle)
        with self.assertRaises(DataError):
            load_index(self.path)

    def test_empty_file_is_rejected(self):
        self.path.write_bytes(b"")
        with self.assertRaises(DataError):
            load_index(self.path)
