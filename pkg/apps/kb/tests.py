import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from core.exceptions import KbLoadError
from core.testing import HIERARCHY, SMALL_KB_ENTITIES, SMALL_KB_SURFACE_FORMS, SMALL_KB_TRIPLES, entity, make_kb

from .domain import Triple, TypeHierarchy
from .services import SNAPSHOT_FILES, load_snapshot, write_snapshot


class TypeHierarchyTest(SimpleTestCase):

    def setUp(self):
        self.hierarchy = TypeHierarchy(HIERARCHY)

    def test_ancestors_nearest_first(self):
        self.assertEqual(self.hierarchy.ancestors('SoccerClub'), ['SportsClub', 'Organisation', 'Agent'])
        self.assertEqual(self.hierarchy.ancestors('Agent'), [])

    def test_depth(self):
        self.assertEqual(self.hierarchy.depth('Agent'), 0)
        self.assertEqual(self.hierarchy.depth('Company'), 2)

    def test_expand_is_deduplicated_and_specific_first(self):
        self.assertEqual(
            self.hierarchy.expand(['Company', 'SoccerClub']),
            ('Company', 'SoccerClub', 'Organisation', 'SportsClub', 'Agent'),
        )


class LoadSnapshotTest(SimpleTestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = Path(tmp.name)

    def write(self, entities=SMALL_KB_ENTITIES, hierarchy=HIERARCHY, forms=SMALL_KB_SURFACE_FORMS, triples=SMALL_KB_TRIPLES):
        write_snapshot(self.dir, list(entities), hierarchy, list(forms), list(triples))

    def test_small_kb(self):
        kb = make_kb()
        self.assertEqual(len(kb), 6)
        self.assertEqual(kb.label('E_CISCO'), 'Cisco Systems')
        self.assertEqual(kb.get('E_IBM').popularity, 100.0)
        self.assertEqual(kb.types_for('E_EDMONTON'), ('SoccerClub',))
        self.assertEqual(kb.types_for('E_EDMONTON', expanded=True), ('SoccerClub', 'SportsClub', 'Organisation', 'Agent'))

    def test_labels_and_surface_forms_are_indexed(self):
        kb = make_kb()
        self.assertEqual(kb.surface_lookup('international business machines'), ['E_IBM'])
        self.assertEqual(kb.surface_lookup('ibm'), ['E_IBM'])
        self.assertEqual(kb.surface_lookup('edmonton'), ['E_EDMONTON'])
        self.assertEqual(kb.surface_lookup('nowhere'), [])

    def test_properties_grouped_by_predicate(self):
        kb = make_kb()
        grouped = kb.properties_of(['E_IBM', 'E_CISCO'])
        self.assertEqual(grouped['foundingYear'], [('E_IBM', '1911'), ('E_CISCO', '1984')])
        self.assertNotIn('populationTotal', grouped)

    def test_unknown_entity_lookup(self):
        with self.assertRaises(LookupError):
            make_kb().get('E_NOPE')

    def test_untyped_entities_are_dropped_with_their_rows(self):
        loose = entity('E_LOOSE', 'Loose', [], 1)
        self.write(
            entities=list(SMALL_KB_ENTITIES) + [loose],
            forms=list(SMALL_KB_SURFACE_FORMS) + [('Loosey', 'E_LOOSE')],
            triples=list(SMALL_KB_TRIPLES) + [Triple('E_LOOSE', 'p', 'o')],
        )
        kb = load_snapshot(self.dir)
        self.assertNotIn('E_LOOSE', kb)
        self.assertEqual(kb.surface_lookup('loosey'), [])
        self.assertEqual(kb.triples('E_LOOSE'), [])

    def test_missing_file(self):
        self.write()
        (self.dir / SNAPSHOT_FILES['triples']).unlink()
        with self.assertRaises(KbLoadError):
            load_snapshot(self.dir)

    def test_unknown_type(self):
        self.write(entities=[entity('E_X', 'X', ['Spaceship'])])
        with self.assertRaises(KbLoadError):
            load_snapshot(self.dir)

    def test_dangling_triple_subject(self):
        self.write(triples=[Triple('E_GHOST', 'p', 'o')])
        with self.assertRaises(KbLoadError) as ctx:
            load_snapshot(self.dir)
        self.assertEqual(ctx.exception.line_no, 1)

    def test_dangling_surface_form(self):
        self.write(forms=[('Ghost', 'E_GHOST')])
        with self.assertRaises(KbLoadError):
            load_snapshot(self.dir)

    def test_hierarchy_cycle(self):
        self.write(entities=[entity('E_A', 'A', ['A'])], hierarchy={'A': 'B', 'B': 'A'}, forms=[], triples=[])
        with self.assertRaises(KbLoadError):
            load_snapshot(self.dir)

    def test_undeclared_parent(self):
        self.write(entities=[entity('E_A', 'A', ['A'])], hierarchy={'A': 'Missing'}, forms=[], triples=[])
        with self.assertRaises(KbLoadError):
            load_snapshot(self.dir)

    def test_negative_popularity(self):
        self.write(entities=[entity('E_A', 'A', ['Agent'], popularity=-1)], forms=[], triples=[])
        with self.assertRaises(KbLoadError):
            load_snapshot(self.dir)
