import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from core.exceptions import EvaluationError

from .services import (
    accuracy,
    binary_prf,
    format_report,
    load_discovery_gold,
    load_heading_gold,
    load_link_gold,
    load_resolution_gold,
    macro_prf,
    micro_prf,
    per_table_prf,
    write_report,
)


class PrfTest(SimpleTestCase):

    gold = {('A', 0, 'e1'), ('A', 1, 'e2'), ('B', 0, 'e3'), ('B', 1, 'e4')}
    predicted = {('A', 0, 'e1'), ('A', 1, 'e2'), ('B', 0, 'e3'), ('B', 1, 'wrong')}

    def test_macro_averages_tables(self):
        self.assertEqual(tuple(macro_prf(self.gold, self.predicted)), (0.75, 0.75, 0.75))

    def test_micro_pools_tuples(self):
        self.assertEqual(tuple(micro_prf(self.gold, self.predicted)), (0.75, 0.75, 0.75))

    def test_macro_and_micro_differ_on_uneven_tables(self):
        gold = {('A', 0, 'x')} | {('B', i, 'y') for i in range(3)}
        predicted = {('A', 0, 'x')}
        self.assertAlmostEqual(macro_prf(gold, predicted).recall, 0.5)
        self.assertAlmostEqual(micro_prf(gold, predicted).recall, 0.25)

    def test_tables_without_gold_are_not_averaged(self):
        predicted = self.predicted | {('C', 0, 'e9')}
        self.assertEqual(set(per_table_prf(self.gold, predicted)), {'A', 'B'})
        self.assertEqual(macro_prf(self.gold, predicted).precision, 0.75)

    def test_table_without_predictions_scores_zero(self):
        results = per_table_prf(self.gold, {('A', 0, 'e1')})
        self.assertEqual(tuple(results['B']), (0.0, 0.0, 0.0))
        self.assertEqual(results['A'].precision, 1.0)

    def test_empty_gold(self):
        with self.assertRaises(EvaluationError):
            macro_prf([], self.predicted)
        with self.assertRaises(EvaluationError):
            micro_prf([], self.predicted)


class AccuracyTest(SimpleTestCase):

    def test_missing_predictions_count_as_wrong(self):
        gold = {'a': 'in_kb', 'b': 'out_of_kb', 'c': 'out_of_kb', 'd': 'not_entity'}
        predicted = {'a': 'in_kb', 'b': 'out_of_kb', 'c': 'in_kb'}
        self.assertEqual(accuracy(gold, predicted), 0.5)

    def test_empty_gold(self):
        with self.assertRaises(EvaluationError):
            accuracy({}, {'a': 'in_kb'})

    def test_binary_prf(self):
        result = binary_prf([1, 1, 0, 0], [1, 0, 1, 0])
        self.assertEqual(result, {'accuracy': 0.5, 'precision': 0.5, 'recall': 0.5, 'f1': 0.5})

    def test_binary_prf_without_positive_predictions(self):
        self.assertEqual(binary_prf([1, 0], [0, 0])['precision'], 0.0)
        with self.assertRaises(EvaluationError):
            binary_prf([1, 0], [1])


class GoldFileTest(SimpleTestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = Path(tmp.name)

    def write(self, name, text):
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_link_and_heading_gold(self):
        links = self.write('links.csv', "table_id,row_index,entity_id\nt1,0,E_IBM\nt1,2,E_CISCO\n")
        headings = self.write('headings.csv', "table_id,column_index,property_id\nt1,1,foundingYear\n")
        self.assertEqual(load_link_gold(links), {('t1', 0, 'E_IBM'), ('t1', 2, 'E_CISCO')})
        self.assertEqual(load_heading_gold(headings), {('t1', 1, 'foundingYear')})

    def test_discovery_gold_is_keyed_by_normalized_mention(self):
        path = self.write('discovery.csv', "mention,verdict\n  Zorblax  DYNAMICS ,out_of_kb\nIBM,in_kb\n")
        self.assertEqual(load_discovery_gold(path), {'zorblax dynamics': 'out_of_kb', 'ibm': 'in_kb'})

    def test_conflicting_discovery_verdicts(self):
        path = self.write('discovery.csv', "mention,verdict\nIBM,in_kb\nibm,out_of_kb\n")
        with self.assertRaises(EvaluationError):
            load_discovery_gold(path)

    def test_resolution_pairs_are_order_free(self):
        path = self.write(
            'resolution.csv',
            "mention1,table1,mention2,table2,same\nBeta,t2,Alpha,t1,true\nalpha,t1,gamma,t3,false\n",
        )
        gold = load_resolution_gold(path)
        self.assertTrue(gold[(('alpha', 't1'), ('beta', 't2'))])
        self.assertFalse(gold[(('alpha', 't1'), ('gamma', 't3'))])

    def test_bad_row_reports_its_line(self):
        path = self.write('links.csv', "table_id,row_index,entity_id\nt1,0,E_IBM\nt1,-3,E_CISCO\n")
        with self.assertRaisesMessage(EvaluationError, "line 3"):
            load_link_gold(path)

    def test_bad_verdict(self):
        path = self.write('discovery.csv', "mention,verdict\nIBM,maybe\n")
        with self.assertRaises(EvaluationError):
            load_discovery_gold(path)

    def test_missing_file(self):
        with self.assertRaises(EvaluationError):
            load_link_gold(self.dir / 'absent.csv')


class ReportTest(SimpleTestCase):

    def test_format_report(self):
        text = format_report("link evaluation", {'macro_f1': 0.75, 'gold': 4})
        self.assertEqual(text.splitlines()[0], "link evaluation")
        self.assertIn("macro_f1  0.7500", text)
        self.assertIn("gold      4", text)

    def test_write_report(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_report(Path(tmp) / 'nested' / 'report.json', {'metrics': {'f1': 1.0}})
            self.assertEqual(json.loads(path.read_text(encoding="utf-8")), {'metrics': {'f1': 1.0}})
