import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.corpus.domain import CoreMention, normalize_mention
from apps.retrieve.domain import Candidate
from apps.retrieve.services import build_index
from apps.sim.embeddings import TermEmbeddings
from core.exceptions import SchemaMismatchError
from core.testing import SMALL_EMBEDDINGS, constant_model, make_embeddings, make_kb, single_column

from .domain import LINK_FEATURE_SCHEMA, CandidateMatrix, Link, LinkAssignment, TableTypeVote
from .services import (
    build_link_dataset,
    classify_candidates,
    disambiguate,
    extract_link_features,
    has_disambiguation_tag,
    infer_table_type,
    link_table,
    propagate_exact_matches,
    read_links,
    read_table_types,
    restore_assignments,
    shares_table_type,
    write_links,
    write_table_types,
)


def matrix(table_id, rows):
    """rows: list of (mention, [entity ids in rank order])."""
    mentions = [CoreMention(i, normalize_mention(m), m) for i, (m, _) in enumerate(rows)]
    candidates = [
        [Candidate(e, rank, 1.0 / rank) for rank, e in enumerate(entities, start=1)]
        for _, entities in rows
    ]
    return CandidateMatrix(table_id, mentions, candidates)


def vote(*types):
    return TableTypeVote(winning_types=frozenset(types))


class TableTypeTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()

    def test_majority_type_wins(self):
        cands = matrix('t', [('ibm', ['E_IBM']), ('cisco', ['E_CISCO']), ('boston', ['E_BOSTON'])])
        result = infer_table_type(cands, self.kb)
        self.assertEqual(result.winning_types, {'Company'})
        self.assertEqual(result.vote_counts, {'City': 1, 'Company': 2})

    def test_tie_returns_every_tied_type(self):
        cands = matrix('t', [('ibm', ['E_IBM']), ('boston', ['E_BOSTON'])])
        self.assertEqual(infer_table_type(cands, self.kb).winning_types, {'Company', 'City'})

    def test_no_candidates_gives_empty_vote(self):
        cands = matrix('t', [('zzz', []), ('yyy', [])])
        self.assertTrue(infer_table_type(cands, self.kb).is_empty)

    def test_only_rank_one_votes(self):
        cands = matrix('t', [('boston', ['E_BOSTON', 'E_BOSTON_FILM'])])
        self.assertEqual(infer_table_type(cands, self.kb).winning_types, {'City'})

    def test_expanded_vote_counts_ancestors(self):
        cands = matrix('t', [('edmonton', ['E_EDMONTON']), ('ibm', ['E_IBM'])])
        result = infer_table_type(cands, self.kb, expand=True)
        self.assertEqual(result.winning_types, {'Organisation', 'Agent'})


class LinkFeatureTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()
        cls.emb = make_embeddings(SMALL_EMBEDDINGS)

    def test_self_match(self):
        features = extract_link_features('IBM', Candidate('E_IBM', 1, 3.0), vote('Company'), self.kb, self.emb)
        self.assertEqual(features.edit, 0.0)
        self.assertEqual(features.jaccard, 1.0)
        self.assertEqual(features.substring, 1.0)
        self.assertEqual(features.type_matches_table, 1.0)
        self.assertEqual(features.type_exists, 1.0)
        self.assertEqual(features.phi_mention_label, 1.0)

    def test_rank_is_copied(self):
        features = extract_link_features('Boston', Candidate('E_BOSTON_FILM', 4, 1.0), vote('City'), self.kb, self.emb)
        self.assertEqual(features.rank, 4.0)
        self.assertEqual(features.has_disambig_tag, 1.0)
        self.assertEqual(features.type_matches_table, 0.0)

    def test_schema_order(self):
        self.assertEqual(len(LINK_FEATURE_SCHEMA), 11)
        self.assertEqual(LINK_FEATURE_SCHEMA[0], 'rank')
        self.assertEqual(LINK_FEATURE_SCHEMA[-1], 'phi_mention_description')

    def test_subtype_matches_parent_type_of_expanded_vote(self):
        expanded = TableTypeVote(winning_types=frozenset({'SportsClub'}), expanded=True)
        features = extract_link_features(
            'FC Edmonton', Candidate('E_EDMONTON', 1, 1.0), expanded, self.kb, TermEmbeddings.empty()
        )
        self.assertEqual(features.type_matches_table, 1.0)
        self.assertEqual(features.phi_typed, 0.0)

    def test_direct_vote_compares_direct_types(self):
        features = extract_link_features(
            'FC Edmonton', Candidate('E_EDMONTON', 1, 1.0), vote('SportsClub'), self.kb, TermEmbeddings.empty()
        )
        self.assertEqual(features.type_matches_table, 0.0)
        self.assertTrue(shares_table_type(self.kb, 'E_EDMONTON', vote('SoccerClub')))

    def test_expanded_vote_is_marked(self):
        cands = matrix('t', [('edmonton', ['E_EDMONTON'])])
        self.assertTrue(infer_table_type(cands, self.kb, expand=True).expanded)
        self.assertFalse(infer_table_type(cands, self.kb).expanded)

    def test_disambiguation_tag(self):
        self.assertTrue(has_disambiguation_tag('Boston (film)'))
        self.assertFalse(has_disambiguation_tag('Boston'))
        self.assertFalse(has_disambiguation_tag('(1999) Boston'))


class DisambiguationTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()

    def ranks(self, entities):
        return matrix('t', [('m', entities)])

    def test_lowest_rank_of_table_type_wins(self):
        cands = self.ranks(['E_BOSTON', 'E_IBM', 'E_BOSTON_FILM', 'E_TORONTO', 'E_CISCO'])
        decisions = [[0, 1, 0, 0, 1]]
        scores = [[0.0, 0.6, 0.0, 0.0, 0.9]]
        result = disambiguate(decisions, scores, cands, vote('Company'), self.kb)
        self.assertEqual(result.entity_for(0), 'E_IBM')
        self.assertEqual(result.links[0].confidence, 0.6)

    def test_score_mode_prefers_confidence(self):
        cands = self.ranks(['E_BOSTON', 'E_IBM', 'E_BOSTON_FILM', 'E_TORONTO', 'E_CISCO'])
        result = disambiguate(
            [[0, 1, 0, 0, 1]], [[0.0, 0.6, 0.0, 0.0, 0.9]], cands, vote('Company'), self.kb, mode='score'
        )
        self.assertEqual(result.entity_for(0), 'E_CISCO')

    def test_wrong_type_stays_unlinked(self):
        cands = self.ranks(['E_BOSTON', 'E_BOSTON_FILM'])
        result = disambiguate([[1, 1]], [[1.0, 1.0]], cands, vote('Company'), self.kb)
        self.assertIsNone(result.entity_for(0))
        self.assertFalse(result.is_linkable)

    def test_all_zero_row_is_unlinked(self):
        cands = self.ranks(['E_IBM'])
        result = disambiguate([[0]], [[0.2]], cands, vote('Company'), self.kb)
        self.assertEqual(result.links, {})

    def test_empty_vote_fallback(self):
        cands = self.ranks(['E_BOSTON', 'E_BOSTON_FILM', 'E_IBM', 'E_CISCO', 'E_TORONTO', 'E_EDMONTON', 'E_IBM'])
        decisions = [[0, 0, 1, 0, 0, 0, 1]]
        scores = [[0.0] * 7]
        self.assertEqual(
            disambiguate(decisions, scores, cands, TableTypeVote(), self.kb, type_fallback=True).entity_for(0),
            'E_IBM',
        )
        self.assertIsNone(disambiguate(decisions, scores, cands, TableTypeVote(), self.kb).entity_for(0))

    def test_linked_entities_share_the_table_type(self):
        cands = matrix('t', [('a', ['E_IBM', 'E_BOSTON']), ('b', ['E_BOSTON', 'E_CISCO'])])
        result = disambiguate([[1, 1], [1, 1]], [[1, 1], [1, 1]], cands, vote('Company'), self.kb)
        self.assertEqual({l.entity_id for l in result.links.values()}, {'E_IBM', 'E_CISCO'})

    def test_classifier_schema_is_checked(self):
        with self.assertRaises(SchemaMismatchError):
            classify_candidates(constant_model(('rank',)), [[]])

    def test_classifier_returns_matrix(self):
        model = constant_model(LINK_FEATURE_SCHEMA, votes=(1.0, 0.0, 1.0, 1.0))
        vector = [0.0] * len(LINK_FEATURE_SCHEMA)
        labels, scores = classify_candidates(model, [[vector, vector], []])
        self.assertEqual(labels, [[1, 1], []])
        self.assertEqual(scores, [[0.75, 0.75], []])


def assignment(table_id, types, mentions, links):
    """links: row index → entity id."""
    core = [CoreMention(i, normalize_mention(m), m) for i, m in enumerate(mentions)]
    return LinkAssignment(
        table_id,
        core,
        vote(*types),
        {
            row: Link(table_id, row, mentions[row], normalize_mention(mentions[row]), entity_id, 0.8)
            for row, entity_id in links.items()
        },
    )


class PropagationTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()

    def test_same_type_tables_share_links(self):
        donor = assignment('a', ['SoccerClub'], ['FC Edmonton'], {0: 'E_EDMONTON'})
        recipient = assignment('b', ['SoccerClub'], ['Toronto FC', 'fc  edmonton'], {0: 'E_TORONTO'})
        result = propagate_exact_matches([donor, recipient], self.kb)
        link = result[1].links[1]
        self.assertEqual(link.entity_id, 'E_EDMONTON')
        self.assertTrue(link.propagated)
        self.assertEqual(result[1].links[0].entity_id, 'E_TORONTO')

    def test_disjoint_types_do_not_propagate(self):
        donor = assignment('a', ['SoccerClub'], ['FC Edmonton'], {0: 'E_EDMONTON'})
        recipient = assignment('b', ['City'], ['FC Edmonton'], {})
        result = propagate_exact_matches([donor, recipient], self.kb)
        self.assertEqual(result[1].links, {})

    def test_conflicting_donors_leave_mention_unlinked(self):
        first = assignment('a', ['SoccerClub'], ['FC Edmonton'], {0: 'E_EDMONTON'})
        second = assignment('c', ['SoccerClub'], ['FC Edmonton'], {0: 'E_TORONTO'})
        recipient = assignment('b', ['SoccerClub'], ['FC Edmonton'], {})
        result = propagate_exact_matches([first, second, recipient], self.kb)
        self.assertEqual(result[2].links, {})

    def test_second_pass_changes_nothing(self):
        donor = assignment('a', ['SoccerClub'], ['FC Edmonton'], {0: 'E_EDMONTON'})
        recipient = assignment('b', ['SoccerClub'], ['FC Edmonton', 'Unknown United'], {})
        once = propagate_exact_matches([donor, recipient], self.kb)
        twice = propagate_exact_matches(once, self.kb)
        self.assertEqual([a.links for a in once], [a.links for a in twice])

    def test_never_unlinks(self):
        first = assignment('a', ['SoccerClub'], ['FC Edmonton'], {0: 'E_EDMONTON'})
        second = assignment('b', ['SoccerClub'], ['FC Edmonton'], {0: 'E_TORONTO'})
        result = propagate_exact_matches([first, second], self.kb)
        self.assertEqual(result[0].entity_for(0), 'E_EDMONTON')
        self.assertEqual(result[1].entity_for(0), 'E_TORONTO')


class LinkTableTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()
        cls.index = build_index(cls.kb)
        cls.emb = make_embeddings(SMALL_EMBEDDINGS)

    def test_company_table(self):
        table = single_column('companies', ['IBM', 'Cisco Systems', 'Boston'])
        result = link_table(table, self.index, self.kb, self.emb, constant_model(LINK_FEATURE_SCHEMA))
        self.assertEqual(result.vote.winning_types, {'Company'})
        self.assertEqual(result.entity_for(0), 'E_IBM')
        self.assertEqual(result.entity_for(1), 'E_CISCO')
        self.assertIsNone(result.entity_for(2))
        self.assertEqual([m.raw for m in result.unlinked()], ['Boston'])

    def test_dataset_labels_follow_gold(self):
        table = single_column('companies', ['IBM', 'Cisco Systems'])
        other = single_column('unused', ['Boston'])
        gold = {('companies', 0, 'E_IBM'), ('companies', 1, 'E_CISCO')}
        data = build_link_dataset([table, other], self.index, self.kb, self.emb, gold)
        self.assertEqual(data.schema, LINK_FEATURE_SCHEMA)
        self.assertEqual(set(data.groups), {'companies'})
        positives = {data.keys[i] for i, label in enumerate(data.labels) if label}
        self.assertEqual(positives, {'companies:0:E_IBM', 'companies:1:E_CISCO'})

    def test_files_restore_links_and_types(self):
        table = single_column('companies', ['IBM', 'Cisco Systems', 'Boston'])
        result = link_table(table, self.index, self.kb, self.emb, constant_model(LINK_FEATURE_SCHEMA))
        with tempfile.TemporaryDirectory() as tmp:
            links_path, types_path = Path(tmp) / 'links.tsv', Path(tmp) / 'table_types.tsv'
            self.assertEqual(write_links(links_path, [result]), 2)
            write_table_types(types_path, [result])
            links = read_links(links_path)
            types = read_table_types(types_path)
            header = links_path.read_text(encoding='utf-8').splitlines()[0]
        self.assertEqual(header, 'table_id\trow_index\tmention\tentity_id\tconfidence\tpropagated')
        self.assertEqual(links['companies'][1].entity_id, 'E_CISCO')
        self.assertEqual(types, {'companies': frozenset({'Company'})})

    def test_propagated_flag_survives_the_links_file(self):
        donor = assignment('a', ['SoccerClub'], ['FC Edmonton'], {0: 'E_EDMONTON'})
        recipient = assignment('b', ['SoccerClub'], ['Toronto FC', 'FC Edmonton'], {0: 'E_TORONTO'})
        propagated = propagate_exact_matches([donor, recipient], self.kb)
        tables = [
            single_column('a', ['FC Edmonton']),
            single_column('b', ['Toronto FC', 'FC Edmonton']),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'links.tsv'
            write_links(path, propagated)
            links = read_links(path)
        self.assertTrue(links['b'][1].propagated)
        self.assertFalse(links['b'][0].propagated)
        self.assertFalse(links['a'][0].propagated)

        restored = restore_assignments(tables, links, {'a': frozenset({'SoccerClub'}), 'b': frozenset({'SoccerClub'})})
        again = propagate_exact_matches(restored, self.kb)
        self.assertEqual([a.links for a in again], [a.links for a in restored])


class RandomDisambiguationTest(SimpleTestCase):
    """Random decision and score matrices over the small KB."""

    ENTITIES = ['E_IBM', 'E_CISCO', 'E_BOSTON', 'E_BOSTON_FILM', 'E_EDMONTON', 'E_TORONTO']
    TYPES = ['Company', 'City', 'Film', 'SoccerClub']

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kb = make_kb()

    def random_case(self, rng):
        rows = []
        for i in range(int(rng.integers(1, 5))):
            size = int(rng.integers(0, len(self.ENTITIES) + 1))
            rows.append((f"m{i}", [str(e) for e in rng.permutation(self.ENTITIES)[:size]]))
        cands = matrix('t', rows)
        decisions = [[int(rng.random() < 0.5) for _ in row] for row in cands.candidates]
        # Scores on a coarse grid so ties stay ties under rescaling.
        scores = [[int(rng.integers(0, 21)) / 20 for _ in row] for row in cands.candidates]
        types = [t for t in self.TYPES if rng.random() < 0.4]
        return cands, decisions, scores, vote(*types)

    def chosen(self, result):
        return {row: link.entity_id for row, link in result.links.items()}

    def test_random_matrices(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            cands, decisions, scores, table_vote = self.random_case(rng)
            rescaled = [[3 * s * s + 0.5 for s in row] for row in scores]
            for mode in ('rank', 'score'):
                for fallback in (False, True):
                    result = disambiguate(decisions, scores, cands, table_vote, self.kb, mode, fallback)
                    rows = [link.row_index for link in result.links.values()]
                    self.assertEqual(len(rows), len(set(rows)))
                    for row, link in result.links.items():
                        self.assertEqual(link.row_index, row)
                        offered = [
                            c.entity_id for j, c in enumerate(cands.candidates[row]) if decisions[row][j]
                        ]
                        self.assertIn(link.entity_id, offered)
                        if not table_vote.is_empty:
                            self.assertTrue(shares_table_type(self.kb, link.entity_id, table_vote))
                    if table_vote.is_empty and not fallback:
                        self.assertEqual(result.links, {})
                    other = disambiguate(decisions, rescaled, cands, table_vote, self.kb, mode, fallback)
                    self.assertEqual(self.chosen(result), self.chosen(other))
                    retrieval = CandidateMatrix(cands.table_id, cands.mentions, [
                        [c._replace(retrieval_score=10 * c.retrieval_score + 1) for c in row]
                        for row in cands.candidates
                    ])
                    moved = disambiguate(decisions, scores, retrieval, table_vote, self.kb, mode, fallback)
                    self.assertEqual(self.chosen(result), self.chosen(moved))
