"""
Shared test fixtures: a small typed KB, hand-built embeddings, table
builders, constant-vote models and a synthetic world for end-to-end runs.
"""

import csv
import tempfile
from pathlib import Path
from typing import Dict, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from apps.corpus.domain import Table, TableContext
from apps.corpus.services import write_corpus
from apps.kb.domain import KbEntity, KbSnapshot, Triple
from apps.kb.services import load_snapshot, write_snapshot
from apps.learn.domain import DecisionTree, TreeEnsembleModel
from apps.sim.embeddings import TermEmbeddings

HIERARCHY = {
    'Agent': None,
    'Organisation': 'Agent',
    'Company': 'Organisation',
    'SportsClub': 'Organisation',
    'SoccerClub': 'SportsClub',
    'Place': None,
    'Settlement': 'Place',
    'City': 'Settlement',
    'Work': None,
    'Film': 'Work',
}


def entity(entity_id, label, types, popularity=1.0, description=""):
    return KbEntity(entity_id, label, float(popularity), description, tuple(types))


SMALL_KB_ENTITIES = [
    entity('E_IBM', 'IBM', ['Company'], 100, 'american technology company'),
    entity('E_CISCO', 'Cisco Systems', ['Company'], 50, 'networking hardware company'),
    entity('E_BOSTON', 'Boston', ['City'], 80, 'capital city of massachusetts'),
    entity('E_BOSTON_FILM', 'Boston (film)', ['Film'], 1, 'drama film'),
    entity('E_EDMONTON', 'FC Edmonton', ['SoccerClub'], 10, 'canadian soccer club'),
    entity('E_TORONTO', 'Toronto FC', ['SoccerClub'], 20, 'canadian soccer club'),
]

SMALL_KB_SURFACE_FORMS = [
    ('International Business Machines', 'E_IBM'),
    ('Cisco', 'E_CISCO'),
    ('Beantown', 'E_BOSTON'),
    ('Edmonton', 'E_EDMONTON'),
]

SMALL_KB_TRIPLES = [
    Triple('E_IBM', 'foundingYear', '1911'),
    Triple('E_IBM', 'revenue', '$57.4 billion'),
    Triple('E_IBM', 'location', 'Armonk, New York'),
    Triple('E_CISCO', 'foundingYear', '1984'),
    Triple('E_CISCO', 'revenue', '$51.6 billion'),
    Triple('E_CISCO', 'location', 'San Jose, California'),
    Triple('E_BOSTON', 'populationTotal', '675,647'),
]


def make_kb(
    entities: Sequence[KbEntity] = SMALL_KB_ENTITIES,
    hierarchy: Dict[str, Optional[str]] = None,
    surface_forms: Iterable[tuple] = SMALL_KB_SURFACE_FORMS,
    triples: Iterable[Triple] = SMALL_KB_TRIPLES,
) -> KbSnapshot:
    """Round-trip the given KB through the snapshot files so fixtures obey the loader."""
    with tempfile.TemporaryDirectory() as tmp:
        write_snapshot(tmp, list(entities), hierarchy or HIERARCHY, list(surface_forms), list(triples))
        return load_snapshot(tmp)


def make_embeddings(vectors: Dict[str, Sequence[float]]) -> TermEmbeddings:
    arrays = {token: np.asarray(v, dtype=np.float64) for token, v in vectors.items()}
    dimension = len(next(iter(arrays.values())))
    return TermEmbeddings(dimension, arrays)


# 2-d vectors: companies along x, places along y.
SMALL_EMBEDDINGS = {
    'ibm': [1.0, 0.0],
    'cisco': [0.9, 0.1],
    'systems': [0.8, 0.2],
    'company': [1.0, 0.1],
    'boston': [0.0, 1.0],
    'city': [0.1, 1.0],
}


def make_table(
    table_id: str,
    headings: Sequence[str],
    rows: Sequence[Sequence[str]],
    core: int = 0,
    page_title: str = "",
    caption: str = "",
    text: str = "",
    year: Optional[int] = None,
) -> Table:
    return Table(
        id=table_id,
        headings=tuple(headings),
        core_column_index=core,
        rows=tuple(tuple(row) for row in rows),
        context=TableContext(page_title, caption, text, year),
    )


def single_column(table_id: str, mentions: Sequence[str], heading: str = "name", **context) -> Table:
    return make_table(table_id, [heading], [[m] for m in mentions], **context)


def constant_model(schema: Sequence[str], votes: Sequence[float] = (1.0,), name: str = "") -> TreeEnsembleModel:
    """Ensemble of leaf-only trees; each leaf value is one tree's vote fraction."""
    trees = [
        DecisionTree(feature=[-1], threshold=[0.0], left=[-1], right=[-1], value=[float(v)])
        for v in votes
    ]
    return TreeEnsembleModel(
        schema=tuple(schema),
        trees=trees,
        seed=0,
        config={},
        importances=[0.0] * len(schema),
        name=name,
    )


def threshold_model(schema: Sequence[str], feature: str, threshold: float, above: bool = True) -> TreeEnsembleModel:
    """One stump: votes 1 when ``feature`` is above (or at most) ``threshold``."""
    index = list(schema).index(feature)
    low, high = (0.0, 1.0) if above else (1.0, 0.0)
    tree = DecisionTree(
        feature=[index, -1, -1],
        threshold=[float(threshold), 0.0, 0.0],
        left=[1, -1, -1],
        right=[2, -1, -1],
        value=[0.5, low, high],
    )
    importances = [0.0] * len(schema)
    importances[index] = 1.0
    return TreeEnsembleModel(tuple(schema), [tree], seed=0, config={}, importances=importances)


# ------------------------------------------------------------------ #
# Synthetic end-to-end world                                           #
# ------------------------------------------------------------------ #

WORLD_COMPANIES = ('Apex', 'Birch', 'Cobalt', 'Delta', 'Ember', 'Falcon', 'Granite', 'Harbor')
WORLD_CITIES = ('Avalon', 'Brookfield', 'Cedarville', 'Dunmore', 'Elmwood', 'Fairhaven')
WORLD_NOVEL_COMPANIES = ('Zorblax Dynamics', 'Quintrel Labs')
WORLD_NOVEL_CITY = 'Novaport'
WORLD_COMPANY_TABLES = tuple(f"co{t + 1:02d}" for t in range(6))
WORLD_CITY_TABLES = ('ci01', 'ci02', 'ci03')
# Company tables that also list a KB company under its "<Name> Co" surface form.
WORLD_ALIAS_ROWS = {'co01': 'Falcon', 'co04': 'Apex'}


class World(NamedTuple):
    root: Path
    corpus: Path
    kb_dir: Path
    link_gold: Path
    heading_gold: Path
    discovery_gold: Path
    resolution_gold: Path


def _world_kb():
    entities, triples = [], []
    for i, name in enumerate(WORLD_COMPANIES):
        corp, holdings = f"C_{name.upper()}", f"H_{name.upper()}"
        entities.append(entity(corp, f"{name} Corp", ['Company'], 20 + i, 'manufacturing firm'))
        entities.append(entity(holdings, f"{name} Holdings", ['Company'], 5 + i, 'investment firm'))
        triples += [
            Triple(corp, 'foundingYear', str(1950 + 3 * i)),
            Triple(corp, 'location', WORLD_CITIES[i % len(WORLD_CITIES)]),
            Triple(holdings, 'foundingYear', str(1901 + i)),
            Triple(holdings, 'location', WORLD_CITIES[(i + 3) % len(WORLD_CITIES)]),
        ]
    for i, name in enumerate(WORLD_CITIES):
        city = f"P_{name.upper()}"
        entities.append(entity(city, name, ['City'], 30 + i, 'town in the valley'))
        triples.append(Triple(city, 'populationTotal', f"{(i + 1) * 12500:,}"))
    return entities, triples


def _world_tables():
    """Company and city tables plus their gold rows."""
    kb_entities, kb_triples = _world_kb()
    facts = {}
    for t in kb_triples:
        facts.setdefault(t.subject, {})[t.predicate] = t.object
    labels = {e.entity_id: e.label for e in kb_entities}

    tables, link_gold, heading_gold = [], [], []
    for t, table_id in enumerate(WORLD_COMPANY_TABLES):
        rows, gold_rows = [], []
        for j in range(4):
            name = WORLD_COMPANIES[(t + j) % len(WORLD_COMPANIES)]
            entity_id = f"C_{name.upper()}" if (t + j) % 3 else f"H_{name.upper()}"
            gold_rows.append((len(rows), entity_id))
            rows.append([labels[entity_id], facts[entity_id]['foundingYear'], facts[entity_id]['location']])
            if j == 1:
                novel = WORLD_NOVEL_COMPANIES[t % 2]
                rows.append([novel, str(2012 + t % 2), WORLD_CITIES[t % 2]])
        if table_id in WORLD_ALIAS_ROWS:
            known = f"C_{WORLD_ALIAS_ROWS[table_id].upper()}"
            rows.append([f"{WORLD_ALIAS_ROWS[table_id]} Co", facts[known]['foundingYear'], facts[known]['location']])
        tables.append(make_table(
            table_id, ['company', 'founded', 'headquarters'], rows,
            page_title="Companies of the valley", caption="Firms by founding year",
            text="Regional manufacturing and investment firms.", year=2010 + t,
        ))
        link_gold += [(table_id, row, entity_id) for row, entity_id in gold_rows]
        heading_gold += [(table_id, 1, 'foundingYear'), (table_id, 2, 'location')]

    for t, table_id in enumerate(WORLD_CITY_TABLES):
        rows, gold_rows = [], []
        for j in range(4):
            name = WORLD_CITIES[(t + j) % len(WORLD_CITIES)]
            entity_id = f"P_{name.upper()}"
            gold_rows.append((len(rows), entity_id))
            rows.append([name, facts[entity_id]['populationTotal']])
            if j == 0 and t < 2:
                rows.append([WORLD_NOVEL_CITY, "8,200"])
        tables.append(make_table(
            table_id, ['town', 'population'], rows,
            page_title="Towns of the valley", caption="Population by town", year=2015 + t,
        ))
        link_gold += [(table_id, row, entity_id) for row, entity_id in gold_rows]
        heading_gold.append((table_id, 1, 'populationTotal'))
    return kb_entities, kb_triples, tables, link_gold, heading_gold


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_world(root) -> World:
    """Write a small KB, corpus and gold files under ``root``.

    Exact-label linking separates the "<Name> Corp" and "<Name> Holdings"
    companies; the novel mentions never share a token with the KB and the
    "<Name> Co" rows are surface forms of KB companies.
    """
    root = Path(root)
    kb_entities, kb_triples, tables, link_gold, heading_gold = _world_tables()
    surface_forms = [(f"{name} Co", f"C_{name.upper()}") for name in WORLD_COMPANIES]
    write_snapshot(root / 'kb', kb_entities, HIERARCHY, surface_forms, kb_triples)
    write_corpus(tables, root / 'corpus.jsonl')

    zorblax_tables = WORLD_COMPANY_TABLES[0::2]
    return World(
        root=root,
        corpus=root / 'corpus.jsonl',
        kb_dir=root / 'kb',
        link_gold=_write_csv(root / 'link_gold.csv', ('table_id', 'row_index', 'entity_id'), link_gold),
        heading_gold=_write_csv(root / 'heading_gold.csv', ('table_id', 'column_index', 'property_id'), heading_gold),
        discovery_gold=_write_csv(root / 'discovery_gold.csv', ('mention', 'verdict'), [
            (mention, 'out_of_kb') for mention in WORLD_NOVEL_COMPANIES + (WORLD_NOVEL_CITY,)
        ] + [(f"{name} Co", 'in_kb') for name in WORLD_ALIAS_ROWS.values()]),
        resolution_gold=_write_csv(root / 'resolution_gold.csv', ('mention1', 'table1', 'mention2', 'table2', 'same'), [
            ('Zorblax Dynamics', zorblax_tables[0], 'Zorblax Dynamics', zorblax_tables[1], 'true'),
            ('Zorblax Dynamics', zorblax_tables[1], 'Zorblax Dynamics', zorblax_tables[2], 'true'),
            ('Zorblax Dynamics', zorblax_tables[0], 'Quintrel Labs', WORLD_COMPANY_TABLES[1], 'false'),
            ('Novaport', 'ci01', 'Zorblax Dynamics', zorblax_tables[0], 'false'),
        ]),
    )


# ------------------------------------------------------------------ #
# Larger world with a held-out split                                   #
# ------------------------------------------------------------------ #

LARGE_ONSETS = (
    'Bel', 'Cor', 'Dar', 'Fen', 'Gal', 'Hol', 'Kel', 'Lor', 'Mar', 'Nor',
    'Pel', 'Ros', 'Sal', 'Tor', 'Val', 'Wes', 'Bar', 'Cal', 'Dun', 'Har',
)
LARGE_CODAS = (
    'ton', 'vik', 'more', 'dale', 'wick', 'field', 'ham', 'stone',
    'worth', 'brook', 'mere', 'gate', 'ford', 'by', 'haven',
)
LARGE_NOVEL_ONSETS = ('Zor', 'Qui', 'Xan', 'Jyx', 'Yul')
LARGE_NOVEL_CODAS = ('blax', 'trel', 'dyne', 'quor')
LARGE_CITIES = (
    'Avalon', 'Brookfield', 'Cedarville', 'Dunmore', 'Elmwood', 'Fairhaven',
    'Glenrock', 'Hillcrest', 'Ironwood', 'Juniper', 'Kingsbridge', 'Lakeshore',
)
LARGE_TABLES = 40
LARGE_HELD_OUT = 8
LARGE_LINKED_PER_TABLE = 4


class HeldOutWorld(NamedTuple):
    """One KB and corpus; gold files split by table into a training and a held-out part."""

    train: World
    test: World
    test_tables: frozenset


def large_company_names():
    return [onset + coda for onset in LARGE_ONSETS for coda in LARGE_CODAS]


def large_novel_names():
    return [f"{onset}{coda} Labs" for onset in LARGE_NOVEL_ONSETS for coda in LARGE_NOVEL_CODAS]


def large_table_id(t: int) -> str:
    return f"lw{t:02d}"


def write_large_world(root) -> HeldOutWorld:
    """A 300-company KB and 40 six-row company tables.

    Every table links four companies by exact label, lists one more under its
    "<Name> Co" surface form and carries one novel "<Name> Labs" mention that
    also appears in the neighbouring table. The last eight tables are held out.
    """
    root = Path(root)
    names = large_company_names()
    novels = large_novel_names()
    entities, triples, surface_forms = [], [], []
    for i, name in enumerate(names):
        entity_id = f"L_{name.upper()}"
        entities.append(entity(entity_id, f"{name} Corp", ['Company'], 10, 'manufacturing firm'))
        surface_forms.append((f"{name} Co", entity_id))
        triples += [
            Triple(entity_id, 'foundingYear', str(1900 + (7 * i) % 120)),
            Triple(entity_id, 'location', LARGE_CITIES[i % len(LARGE_CITIES)]),
        ]
    facts = {t.subject: {} for t in triples}
    for t in triples:
        facts[t.subject][t.predicate] = t.object

    def row_for(i, text):
        entity_id = f"L_{names[i].upper()}"
        return [text, facts[entity_id]['foundingYear'], facts[entity_id]['location']]

    tables, link_gold, heading_gold, verdicts = [], [], [], []
    alias_start = LARGE_TABLES * LARGE_LINKED_PER_TABLE
    for t in range(LARGE_TABLES):
        table_id = large_table_id(t)
        rows = []
        for j in range(LARGE_LINKED_PER_TABLE):
            i = LARGE_LINKED_PER_TABLE * t + j
            link_gold.append((table_id, len(rows), f"L_{names[i].upper()}"))
            rows.append(row_for(i, f"{names[i]} Corp"))
            if j == 1:
                rows.append([novels[t // 2], str(2000 + t // 2), LARGE_CITIES[t % len(LARGE_CITIES)]])
        alias = alias_start + t
        rows.append(row_for(alias, f"{names[alias]} Co"))
        verdicts.append((table_id, f"{names[alias]} Co", 'in_kb'))
        if t % 2 == 0:
            verdicts.append((table_id, novels[t // 2], 'out_of_kb'))
        tables.append(make_table(
            table_id, ['company', 'founded', 'headquarters'], rows,
            page_title="Regional companies", caption="Firms by founding year",
            text="Manufacturing firms of the region.", year=2000 + t % 10,
        ))
        heading_gold += [(table_id, 1, 'foundingYear'), (table_id, 2, 'location')]

    write_snapshot(root / 'kb', entities, HIERARCHY, surface_forms, triples)
    write_corpus(tables, root / 'corpus.jsonl')

    test_tables = frozenset(large_table_id(t) for t in range(LARGE_TABLES - LARGE_HELD_OUT, LARGE_TABLES))

    def resolution_pairs(novel_indices):
        pairs = []
        for n in novel_indices:
            pairs.append((novels[n], large_table_id(2 * n), novels[n], large_table_id(2 * n + 1), 'true'))
            if n + 1 in novel_indices:
                pairs.append((novels[n], large_table_id(2 * n), novels[n + 1], large_table_id(2 * n + 2), 'false'))
        return pairs

    def split(name, held_out: bool) -> World:
        def keep(table_id):
            return (table_id in test_tables) == held_out

        novel_indices = [n for n in range(len(novels)) if keep(large_table_id(2 * n))]
        folder = root / name
        folder.mkdir(parents=True, exist_ok=True)
        return World(
            root=root,
            corpus=root / 'corpus.jsonl',
            kb_dir=root / 'kb',
            link_gold=_write_csv(folder / 'link_gold.csv', ('table_id', 'row_index', 'entity_id'),
                                 [row for row in link_gold if keep(row[0])]),
            heading_gold=_write_csv(folder / 'heading_gold.csv', ('table_id', 'column_index', 'property_id'),
                                    [row for row in heading_gold if keep(row[0])]),
            discovery_gold=_write_csv(folder / 'discovery_gold.csv', ('mention', 'verdict'),
                                      [(mention, verdict) for table_id, mention, verdict in verdicts if keep(table_id)]),
            resolution_gold=_write_csv(folder / 'resolution_gold.csv',
                                       ('mention1', 'table1', 'mention2', 'table2', 'same'),
                                       resolution_pairs(novel_indices)),
        )

    return HeldOutWorld(split('train', False), split('test', True), test_tables)
