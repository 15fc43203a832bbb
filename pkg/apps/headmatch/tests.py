import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from core.exceptions import SchemaMismatchError
from core.testing import constant_model, make_kb, make_table, threshold_model

from .domain import HEADING_FEATURE_SCHEMA, ColumnMatch, HeadingMatch
from .services import (
    build_heading_dataset,
    column_candidates,
    column_data_type,
    detect_value_kind,
    match_headings,
    pvs,
    read_headings,
    value_similarity,
    write_headings,
)


def kinds(value):
    return set(detect_value_kind(value).kinds)


class ValueKindTest(SimpleTestCase):

    def test_bare_year_is_time_and_number(self):
        value = detect_value_kind('1836')
        self.assertEqual(set(value.kinds), {'time', 'numerical'})
        self.assertEqual(value.year, 1836)
        self.assertEqual(value.number, 1836.0)

    def test_number_with_unit(self):
        value = detect_value_kind('12.5 km')
        self.assertEqual(set(value.kinds), {'numerical', 'string'})
        self.assertEqual(value.number, 12.5)

    def test_null_token(self):
        self.assertEqual(kinds('N/A'), {'other'})

    def test_currency_and_thousands(self):
        self.assertEqual(detect_value_kind('$1,250,000').number, 1250000.0)
        self.assertEqual(kinds('675,647'), {'numerical'})

    def test_dates(self):
        self.assertEqual(detect_value_kind('2015-03-02').year, 2015)
        self.assertEqual(detect_value_kind('March 2, 2015').year, 2015)
        self.assertEqual(kinds('02/03/2015'), {'time'})

    def test_plain_text(self):
        self.assertEqual(kinds('Armonk, New York'), {'string'})
        self.assertEqual(kinds('***'), {'other'})


class ColumnTypeTest(SimpleTestCase):

    def typed(self, *values):
        return [detect_value_kind(v) for v in values]

    def test_majority(self):
        self.assertEqual(column_data_type(self.typed('3', '4', 'abc')), 'numerical')

    def test_time_counted_from_ambiguous_years(self):
        self.assertEqual(column_data_type(self.typed('1836', 'May 4, 1901')), 'time')

    def test_all_other(self):
        self.assertEqual(column_data_type(self.typed('n/a', '-')), 'other')

    def test_tie_prefers_numbers_over_strings(self):
        self.assertEqual(column_data_type(self.typed('5', 'abc')), 'numerical')


class ValueSimilarityTest(SimpleTestCase):

    def test_same_year(self):
        a = detect_value_kind('1990')
        self.assertEqual(value_similarity(a, a, 'time'), 1.0)

    def test_numbers(self):
        self.assertEqual(value_similarity(detect_value_kind('10'), detect_value_kind('5'), 'numerical'), 0.5)
        self.assertEqual(value_similarity(detect_value_kind('0'), detect_value_kind('0'), 'numerical'), 1.0)

    def test_equal_strings(self):
        a = detect_value_kind('Armonk')
        self.assertEqual(value_similarity(a, detect_value_kind('armonk'), 'string'), 1.0)

    def test_kind_mismatch(self):
        self.assertEqual(value_similarity(detect_value_kind('abc'), detect_value_kind('5'), 'numerical'), 0.0)

    def test_pvs_singleton(self):
        a = detect_value_kind('42')
        self.assertEqual(pvs([a], [a], 'numerical'), (1.0, 1.0, 1.0))

    def test_pvs_cross_product(self):
        col = [detect_value_kind('ab'), detect_value_kind('bb')]
        kb = [detect_value_kind('ab'), detect_value_kind('aa')]
        self.assertEqual(pvs(col, kb, 'string'), (1.0, 2.0, 0.5))

    def test_pvs_empty_after_kind_filter(self):
        self.assertEqual(pvs([detect_value_kind('abc')], [detect_value_kind('1')], 'numerical'), (0.0, 0.0, 0.0))


COMPANY_ROWS = [
    ['IBM', '1911', '$57.4 billion', 'Armonk, New York'],
    ['Cisco Systems', '1984', '$51.6 billion', 'San Jose, California'],
]
COMPANY_HEADINGS = ['name', 'founded', 'revenue', 'headquarters']


class MatchHeadingsTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()
        cls.model = threshold_model(HEADING_FEATURE_SCHEMA, 'pvs_max', 0.9)

    def test_columns_match_their_properties(self):
        table = make_table('companies', COMPANY_HEADINGS, COMPANY_ROWS)
        result = match_headings(table, {0: 'E_IBM', 1: 'E_CISCO'}, self.kb, self.model)
        self.assertIsNone(result.property_for(0))
        self.assertEqual(result.property_for(1), 'foundingYear')
        self.assertEqual(result.property_for(2), 'revenue')
        self.assertEqual(result.property_for(3), 'location')
        self.assertEqual(result.duplicate_properties(), {})

    def test_row_order_does_not_matter(self):
        forward = make_table('companies', COMPANY_HEADINGS, COMPANY_ROWS)
        backward = make_table('companies', COMPANY_HEADINGS, list(reversed(COMPANY_ROWS)))
        a = match_headings(forward, {0: 'E_IBM', 1: 'E_CISCO'}, self.kb, self.model)
        b = match_headings(backward, {0: 'E_CISCO', 1: 'E_IBM'}, self.kb, self.model)
        self.assertEqual(
            {c: m.property_id for c, m in a.matches.items()},
            {c: m.property_id for c, m in b.matches.items()},
        )

    def test_kind_filter(self):
        table = make_table('t', ['name', 'founded'], [['IBM', 'long ago']])
        candidates = column_candidates(table, {0: 'E_IBM'}, self.kb)
        self.assertNotIn('foundingYear', [p for p, _ in candidates[1]])
        self.assertEqual([p for p, _ in candidates[1]], ['location'])

    def test_no_links_no_matches(self):
        table = make_table('companies', COMPANY_HEADINGS, COMPANY_ROWS)
        self.assertEqual(match_headings(table, {}, self.kb, self.model).matches, {})

    def test_entity_without_triples(self):
        table = make_table('clubs', ['club', 'founded'], [['FC Edmonton', '2010']])
        self.assertEqual(match_headings(table, {0: 'E_EDMONTON'}, self.kb, self.model).matches, {})

    def test_model_schema_is_checked(self):
        table = make_table('companies', COMPANY_HEADINGS, COMPANY_ROWS)
        with self.assertRaises(SchemaMismatchError):
            match_headings(table, {0: 'E_IBM'}, self.kb, constant_model(('pvs_max',)))

    def test_pvs_invariants(self):
        table = make_table('companies', COMPANY_HEADINGS, COMPANY_ROWS)
        for candidates in column_candidates(table, {0: 'E_IBM', 1: 'E_CISCO'}, self.kb).values():
            for _, features in candidates:
                self.assertLessEqual(features.pvs_max, features.pvs_sum + 1e-12)
                self.assertLessEqual(features.pvs_avg, features.pvs_max + 1e-12)

    def test_duplicates_are_reported(self):
        match = HeadingMatch('t', {
            1: ColumnMatch('t', 1, 'a', 'location', 1.0),
            3: ColumnMatch('t', 3, 'b', 'location', 1.0),
            4: ColumnMatch('t', 4, 'c', 'revenue', 1.0),
        })
        self.assertEqual(match.duplicate_properties(), {'location': [1, 3]})

    def test_dataset_from_gold(self):
        table = make_table('companies', COMPANY_HEADINGS, COMPANY_ROWS)
        gold = {('companies', 1, 'foundingYear'), ('companies', 3, 'location')}
        data = build_heading_dataset([table], {'companies': {0: 'E_IBM', 1: 'E_CISCO'}}, self.kb, gold)
        positives = {data.keys[i] for i, label in enumerate(data.labels) if label}
        self.assertEqual(positives, {'companies:1:foundingYear', 'companies:3:location'})
        self.assertIn('companies:0:location', data.keys)

    def test_headings_file(self):
        table = make_table('companies', COMPANY_HEADINGS, COMPANY_ROWS)
        result = match_headings(table, {0: 'E_IBM', 1: 'E_CISCO'}, self.kb, self.model)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'headings.tsv'
            self.assertEqual(write_headings(path, [result]), 3)
            restored = read_headings(path)
        self.assertEqual(restored['companies'].property_for(2), 'revenue')
