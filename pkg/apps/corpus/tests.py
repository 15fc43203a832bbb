import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import CorpusReadError
from core.testing import make_table

from .domain import Table, TableContext, normalize_mention
from .services import (
    core_mentions,
    identical_core_key,
    is_noise_mention,
    parse_corpus,
    read_corpus,
    serialize_table,
    write_corpus,
)


def record(**overrides):
    base = {
        'id': 't1',
        'headings': ['company', 'founded'],
        'rows': [['IBM', '1911'], ['Cisco', '1984']],
        'coreColumnIndex': 0,
        'headerRowIndex': None,
        'pageTitle': 'Tech companies',
        'caption': 'Founding years',
        'surroundingText': '',
        'lastEditYear': 2014,
    }
    base.update(overrides)
    return base


def parse(*records):
    lines = [r if isinstance(r, str) else json.dumps(r) for r in records]
    return parse_corpus(StringIO("\n".join(lines) + "\n"))


class NormalizeMentionTest(SimpleTestCase):

    def test_case_fold_trim_and_collapse(self):
        self.assertEqual(normalize_mention("  Cisco   SYSTEMS "), "cisco systems")

    def test_unicode_folding(self):
        self.assertEqual(normalize_mention("Straße"), "strasse")
        self.assertEqual(normalize_mention("ＩＢＭ"), "ibm")

    def test_empty(self):
        self.assertEqual(normalize_mention("   "), "")
        self.assertEqual(normalize_mention(None), "")


class TableTest(SimpleTestCase):

    def test_rejects_ragged_rows(self):
        with self.assertRaises(ValueError):
            Table('t', ('a', 'b'), 0, (('x',),))

    def test_rejects_core_index_outside_headings(self):
        with self.assertRaises(ValueError):
            Table('t', ('a',), 1, (('x',),))

    def test_rejects_year_out_of_range(self):
        with self.assertRaises(ValueError):
            TableContext(last_edit_year=1850)

    def test_core_mentions_skip_blank_cells(self):
        table = make_table('t', ['name', 'n'], [['IBM', '1'], ['  ', '2'], ['Cisco ', '3']])
        self.assertEqual(
            [(m.row_index, m.key, m.raw) for m in core_mentions(table)],
            [(0, 'ibm', 'IBM'), (2, 'cisco', 'Cisco ')],
        )


class ParseCorpusTest(SimpleTestCase):

    def test_canonical_record(self):
        tables, warnings = parse(record())
        self.assertEqual(warnings, [])
        table = tables[0]
        self.assertEqual(table.headings, ('company', 'founded'))
        self.assertEqual(table.rows, (('IBM', '1911'), ('Cisco', '1984')))
        self.assertEqual(table.context.last_edit_year, 2014)

    def test_header_row_is_taken_out_of_the_body(self):
        tables, _ = parse(record(headings=[], rows=[['company', 'founded'], ['IBM', '1911']], headerRowIndex=0))
        self.assertEqual(tables[0].headings, ('company', 'founded'))
        self.assertEqual(tables[0].rows, (('IBM', '1911'),))

    def test_wdc_horizontal_record_is_column_major(self):
        wdc = {
            'relation': [['company', 'IBM', 'Cisco'], ['founded', '1911', '1984']],
            'keyColumnIndex': 0,
            'url': 'http://example.org/page',
            'tableNum': 3,
            'title': 'Founding years',
            'lastModified': 'Mon, 03 Mar 2014 10:00:00 GMT',
        }
        tables, warnings = parse(wdc)
        self.assertEqual(warnings, [])
        table = tables[0]
        self.assertEqual(table.id, 'http://example.org/page#3')
        self.assertEqual(table.headings, ('company', 'founded'))
        self.assertEqual(table.rows, (('IBM', '1911'), ('Cisco', '1984')))
        self.assertEqual(table.context.caption, 'Founding years')
        self.assertEqual(table.context.last_edit_year, 2014)

    def test_wdc_year_out_of_range_keeps_the_table(self):
        base = {
            'relation': [['company', 'IBM'], ['founded', '1911']],
            'keyColumnIndex': 0,
            'url': 'http://example.org/page',
        }
        tables, warnings = parse(
            dict(base, tableNum=1, tableYear=1850),
            dict(base, tableNum=2, lastModified='Sat, 01 Jan 2150 00:00:00 GMT'),
        )
        self.assertEqual(warnings, [])
        self.assertEqual([t.id for t in tables], ['http://example.org/page#1', 'http://example.org/page#2'])
        self.assertEqual([t.context.last_edit_year for t in tables], [None, None])
        self.assertEqual(tables[0].rows, (('IBM', '1911'),))

        self.assertEqual(table.context.last_edit_year, 2014)

    def test_malformed_records_are_skipped_with_warnings(self):
        tables, warnings = parse(
            record(id='good'),
            '{not json',
            '[1, 2]',
            record(id='ragged', rows=[['IBM']]),
            record(id='core', coreColumnIndex=5),
            record(id='blank', rows=[['', '1911']]),
            record(id='old', lastEditYear=1800),
        )
        self.assertEqual([t.id for t in tables], ['good'])
        self.assertEqual(len(warnings), 6)
        self.assertTrue(warnings[0].startswith("line 2:"))

    def test_blank_lines_are_ignored(self):
        tables, warnings = parse_corpus(StringIO("\n" + json.dumps(record()) + "\n\n"))
        self.assertEqual(len(tables), 1)
        self.assertEqual(warnings, [])


class CorpusFileTest(SimpleTestCase):

    def test_write_then_read_preserves_tables(self):
        table = make_table(
            't9', ['name', 'city'], [['Ácme', 'Boston'], ['Beta', '']],
            page_title='P', caption='C', text='T', year=2001,
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'corpus.jsonl'
            self.assertEqual(write_corpus([table], path), 1)
            tables, warnings = read_corpus(path)
        self.assertEqual(tables, [table])
        self.assertEqual(warnings, [])

    def test_serialized_record_has_no_header_row(self):
        payload = serialize_table(make_table('t', ['a'], [['x']]))
        self.assertIsNone(payload['headerRowIndex'])

    def test_missing_file(self):
        with self.assertRaises(CorpusReadError):
            read_corpus(Path('/nonexistent/corpus.jsonl'))


class NoiseTest(SimpleTestCase):

    def test_numbers_dates_and_emails(self):
        for text in ('1,234.5', '-12', '.5', '2014-03-01', '3/14/2015', 'March 3, 2014', 'info@example.org'):
            self.assertTrue(is_noise_mention(text), text)

    def test_names_are_not_noise(self):
        for text in ('IBM', '3M', 'Boston 2014', '', 'Route 66'):
            self.assertFalse(is_noise_mention(text), text)


class IdenticalCoreKeyTest(SimpleTestCase):

    def test_order_case_and_duplicates_ignored(self):
        a = make_table('a', ['n'], [['IBM'], ['Cisco'], ['IBM']])
        b = make_table('b', ['n'], [['cisco'], ['ibm']])
        c = make_table('c', ['n'], [['cisco'], ['oracle']])
        self.assertEqual(identical_core_key(a), identical_core_key(b))
        self.assertNotEqual(identical_core_key(a), identical_core_key(c))

    def test_shuffled_and_recased_rows_share_the_key(self):
        rng = np.random.default_rng(3)
        names = ['IBM', 'Cisco Systems', 'Oracle', 'Acme Corp', 'Bravo', 'Delta Air']
        for _ in range(50):
            chosen = [names[i] for i in rng.choice(len(names), size=int(rng.integers(1, 6)), replace=False)]
            shuffled = [chosen[i] for i in rng.permutation(len(chosen))]
            shuffled += [shuffled[0].upper()]
            recased = [n.lower() if rng.random() < 0.5 else n for n in shuffled]
            a = make_table('a', ['n'], [[n] for n in chosen])
            b = make_table('b', ['n'], [[n] for n in recased])
            self.assertEqual(identical_core_key(a), identical_core_key(b))
            extra = [n for n in names if n not in chosen][0]
            c = make_table('c', ['n'], [[n] for n in chosen + [extra]])
            self.assertNotEqual(identical_core_key(a), identical_core_key(c))
