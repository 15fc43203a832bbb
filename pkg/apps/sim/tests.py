import random
import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import DataError
from core.testing import SMALL_EMBEDDINGS, make_embeddings

from .embeddings import TermEmbeddings, load_embeddings
from .services import (
    edit_distance_norm,
    edit_similarity,
    embedding_cosine,
    jaccard_terms,
    label_similarity,
    letter_overlap,
    soft_match_phi,
    substring_indicator,
    type_label,
)


def levenshtein(a: str, b: str) -> int:
    @lru_cache(maxsize=None)
    def distance(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            distance(i - 1, j) + 1,
            distance(i, j - 1) + 1,
            distance(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
        )
    return distance(len(a), len(b))


class LexicalTest(SimpleTestCase):

    def test_edit_distance(self):
        self.assertAlmostEqual(edit_distance_norm('kitten', 'sitting'), 3 / 7)
        self.assertEqual(edit_distance_norm('', ''), 0.0)
        self.assertEqual(edit_distance_norm('abc', ''), 1.0)
        self.assertAlmostEqual(edit_similarity('kitten', 'sitting'), 4 / 7)

    def test_edit_distance_matches_recursive_definition(self):
        rng = random.Random(7)
        for _ in range(1000):
            a = "".join(rng.choice("abc ") for _ in range(rng.randint(0, 12)))
            b = "".join(rng.choice("abc ") for _ in range(rng.randint(0, 12)))
            longest = max(len(a), len(b))
            expected = levenshtein(a, b) / longest if longest else 0.0
            self.assertAlmostEqual(edit_distance_norm(a, b), expected, msg=(a, b))

    def test_letter_overlap(self):
        self.assertAlmostEqual(letter_overlap('abc', 'abd'), 2 / 3)
        self.assertAlmostEqual(letter_overlap('aab', 'ab'), 2 / 3)
        self.assertEqual(letter_overlap('', ''), 0.0)

    def test_letter_overlap_counts_distinct_letters(self):
        self.assertAlmostEqual(letter_overlap('aab', 'aab'), 2 / 3)
        self.assertEqual(letter_overlap('abc', 'cba'), 1.0)

    def test_set_measures_match_brute_force(self):
        rng = random.Random(11)
        alphabet = "abC "
        for _ in range(1000):
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            longest = max(len(a), len(b))
            shared = sum(1 for ch in set(a) if ch in b)
            self.assertAlmostEqual(letter_overlap(a, b), shared / longest if longest else 0.0, msg=(a, b))

            left, right = set(a.lower().split()), set(b.lower().split())
            union = left | right
            expected = len(left & right) / len(union) if union else 0.0
            self.assertAlmostEqual(jaccard_terms(a, b), expected, msg=(a, b))

            x, y = " ".join(a.lower().split()), " ".join(b.lower().split())
            contained = bool(x) and bool(y) and (x in y or y in x)
            self.assertEqual(substring_indicator(a, b), int(contained), msg=(a, b))

    def test_jaccard(self):
        self.assertAlmostEqual(jaccard_terms('New York City', 'new  york'), 2 / 3)
        self.assertEqual(jaccard_terms('', '  '), 0.0)

    def test_substring(self):
        self.assertEqual(substring_indicator('York', 'New York'), 1)
        self.assertEqual(substring_indicator('New York', 'york'), 1)
        self.assertEqual(substring_indicator('Boston', 'New York'), 0)
        self.assertEqual(substring_indicator('', 'New York'), 0)

    def test_label_similarity_bounds(self):
        self.assertEqual(label_similarity('ibm', 'ibm'), 1.0)
        self.assertEqual(label_similarity('abc', 'xyz'), 0.0)
        self.assertTrue(0.0 < label_similarity('Cisco', 'Cisco Systems') < 1.0)

    def test_type_label(self):
        self.assertEqual(type_label('dbo:SoccerClub'), 'soccer club')
        self.assertEqual(type_label('populationTotal'), 'population total')
        self.assertEqual(type_label('http://example.org/ontology#HTTPServer'), 'http server')
        self.assertEqual(type_label('birth_place'), 'birth place')


class EmbeddingSimilarityTest(SimpleTestCase):

    def setUp(self):
        self.emb = make_embeddings(SMALL_EMBEDDINGS)

    def test_cosine(self):
        self.assertAlmostEqual(embedding_cosine('IBM', 'ibm', self.emb), 1.0)
        self.assertAlmostEqual(embedding_cosine('ibm', 'boston', self.emb), 0.0)
        self.assertEqual(embedding_cosine('ibm', 'zzz', self.emb), 0.0)

    def test_cosine_ignores_vector_length(self):
        rng = np.random.default_rng(5)
        base = {token: rng.normal(size=4) for token in ('alpha', 'beta', 'gamma', 'delta')}
        emb = make_embeddings(base)
        factor = 2.5
        uniform = make_embeddings({t: v * factor for t, v in base.items()})
        single = make_embeddings(dict(base, alpha=base['alpha'] * 7.0))
        for a, b in (('alpha beta', 'gamma'), ('alpha', 'delta gamma'), ('beta delta', 'alpha gamma')):
            self.assertAlmostEqual(embedding_cosine(a, b, uniform), embedding_cosine(a, b, emb))
        for other in ('beta', 'gamma', 'delta'):
            self.assertAlmostEqual(embedding_cosine('alpha', other, single), embedding_cosine('alpha', other, emb))

    def test_phi_exact_tokens(self):
        self.assertAlmostEqual(soft_match_phi('IBM', 'ibm company', self.emb), 1.0)

    def test_phi_averages_over_query_tokens(self):
        self.assertAlmostEqual(soft_match_phi('ibm unknowntoken', 'ibm', self.emb), 0.5)

    def test_phi_clamps_negative_similarity(self):
        emb = make_embeddings({'up': [1.0, 0.0], 'down': [-1.0, 0.0]})
        self.assertEqual(soft_match_phi('up', 'down', emb), 0.0)

    def test_phi_out_of_vocabulary(self):
        self.assertEqual(soft_match_phi('zzz', 'ibm', self.emb), 0.0)
        self.assertEqual(soft_match_phi('ibm', '', self.emb), 0.0)
        self.assertEqual(soft_match_phi('ibm', 'ibm', TermEmbeddings.empty()), 0.0)

    def test_phi_takes_best_doc_token(self):
        expected = 0.9 / (0.82 ** 0.5)
        self.assertAlmostEqual(soft_match_phi('ibm', 'cisco systems', self.emb), expected)


class LoadEmbeddingsTest(SimpleTestCase):

    def write(self, text: str) -> Path:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        path = Path(tmp.name) / 'vectors.txt'
        path.write_text(text, encoding="utf-8")
        return path

    def test_word2vec_text_format(self):
        emb = load_embeddings(self.write("2 3\nIBM 1 0 0\nboston 0 1 0\n"))
        self.assertEqual(emb.dimension, 3)
        self.assertIn('ibm', emb)
        self.assertEqual(list(emb.vectors['boston']), [0.0, 1.0, 0.0])

    def test_wrong_arity(self):
        with self.assertRaises(DataError):
            load_embeddings(self.write("1 3\nibm 1 0\n"))

    def test_bad_header(self):
        with self.assertRaises(DataError):
            load_embeddings(self.write("ibm 1 0 0\n"))

    def test_missing_file(self):
        with self.assertRaises(DataError):
            load_embeddings(Path('/nonexistent/vectors.txt'))
