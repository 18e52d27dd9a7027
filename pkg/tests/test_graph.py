"""Condition graph: ingestion, lookup against a brute-force scan, schema."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgqa.graph import (
    BadTimestampError,
    ConditionGraph,
    Edge,
    EmptyFieldError,
    EmptyHeaderError,
    KindMismatchError,
    RaggedRowError,
    compare_values,
    dump_graph,
    infer_scalar,
    ingest_table,
    ingest_temporal,
    ingest_triples,
    load_graph,
    normalize,
    schema_summary,
    time_key,
)


def brute_lookup(cg, head=None, relation=None, tail=None, tail_cmp="=",
                 qual_key=None, qual_value=None, qual_cmp="="):
    """Linear filter over all edges: the index-free reference for lookup."""
    hits = []
    for edge in cg.edges:
        if head is not None and normalize(str(edge.head)) != normalize(str(head)):
            continue
        if relation is not None and normalize(edge.relation) != normalize(relation):
            continue
        if tail is not None and not compare_values(edge.tail, tail, tail_cmp):
            continue
        if qual_key is not None and (
            edge.qualifier is None
            or normalize(edge.qualifier[0]) != normalize(qual_key)
        ):
            continue
        if qual_value is not None and (
            edge.qualifier is None
            or not compare_values(edge.qualifier[1], qual_value, qual_cmp)
        ):
            continue
        hits.append(edge)
    return hits


class TestIngestTable:
    def test_column_to_edge_mapping(self):
        cg = ingest_table([["Alice", "Utah", "20"]], ["Name", "Colleges", "Age"])
        assert len(cg) == 2
        by_rel = {e.relation: e for e in cg.edges}
        assert by_rel["Colleges"].head == "Alice"
        assert by_rel["Colleges"].tail == "Utah"
        assert by_rel["Colleges"].tail_kind == "text"
        assert by_rel["Age"].tail == 20
        assert by_rel["Age"].tail_kind == "numeric"

    def test_empty_rows(self):
        cg = ingest_table([], ["Name"])
        assert len(cg) == 0

    def test_hundred_rows_by_construction(self):
        rows = [[f"row{i}", f"v{i}", str(i)] for i in range(100)]
        cg = ingest_table(rows, ["Key", "ColA", "ColB"])
        assert len(cg) == 200
        for rel in ("ColA", "ColB"):
            ids = cg.relation_index[normalize(rel)]
            assert len(ids) == 100

    def test_ragged_row(self):
        with pytest.raises(RaggedRowError):
            ingest_table([["a", "b"], ["a"]], ["X", "Y"])

    def test_empty_header(self):
        with pytest.raises(EmptyHeaderError):
            ingest_table([], [])
        with pytest.raises(EmptyHeaderError):
            ingest_table([], ["A", " "])

    def test_key_column_by_name(self):
        cg = ingest_table([["1", "Alice"]], ["Id", "Name"], key_column="Name")
        (edge,) = cg.edges
        assert edge.head == "Alice"
        assert edge.relation == "Id"


class TestIngestTriples:
    def test_single_triple(self):
        cg = ingest_triples([("Bob", "Hometown", "Texas")])
        assert len(cg) == 1

    def test_duplicates_collapse(self):
        cg = ingest_triples([("a", "r", "b"), ("a", "r", "b")])
        assert len(cg) == 1

    def test_empty_field(self):
        with pytest.raises(EmptyFieldError):
            ingest_triples([("", "r", "b")])

    def test_edge_count_equals_distinct_count(self):
        rng = random.Random(7)
        triples = [
            (f"h{rng.randrange(40)}", f"r{rng.randrange(5)}",
             f"t{rng.randrange(40)}")
            for _ in range(5000)
        ]
        distinct = len(set(triples))
        cg = ingest_triples(triples)
        assert len(cg) == distinct


class TestIngestTemporal:
    def test_year_qualifier(self):
        cg = ingest_temporal([("X", "president_of", "Y", "1999")])
        (edge,) = cg.edges
        assert edge.qualifier == ("time", "1999")

    def test_bad_timestamp(self):
        with pytest.raises(BadTimestampError):
            ingest_temporal([("X", "r", "Y", "abc")])

    def test_mixed_year_and_date_ordering(self):
        stamps = [
            "2001", "1999-06-15", "2000", "1999", "2000-01-02",
            "1998-12-31", "2001-01-01", "1997", "2000-11-30", "1999-01-01",
        ]
        ordered = sorted(stamps, key=time_key)
        manual = [
            "1997", "1998-12-31", "1999", "1999-01-01", "1999-06-15",
            "2000", "2000-01-02", "2000-11-30", "2001", "2001-01-01",
        ]
        assert ordered == manual


class TestLookup:
    def test_single_match(self, toy_graph):
        hits = toy_graph.lookup(relation="Colleges", tail="Utah")
        assert [(e.head, e.tail) for e in hits] == [("Alice", "Utah")]
        assert hits == brute_lookup(toy_graph, relation="Colleges", tail="Utah")

    def test_empty_result(self, toy_graph):
        assert toy_graph.lookup(relation="Hometown", tail="Utah") == []

    def test_numeric_comparator(self, toy_graph):
        hits = toy_graph.lookup(relation="Age", tail=21, tail_cmp="<")
        assert [(e.head, e.tail) for e in hits] == [("Alice", 20)]
        assert hits == brute_lookup(toy_graph, relation="Age", tail=21,
                                    tail_cmp="<")

    def test_text_comparator_rejected(self, toy_graph):
        with pytest.raises(KindMismatchError):
            toy_graph.lookup(relation="Colleges", tail="Utah", tail_cmp="<")

    def test_qualifier_lookup(self, terms_graph):
        hits = terms_graph.lookup(relation="president", qual_key="time",
                                  qual_value=1996)
        assert sorted(e.head for e in hits) == ["France", "USA"]

    def test_monotone_restriction(self, toy_graph):
        broad = set(toy_graph.lookup(relation="Age"))
        narrow = set(toy_graph.lookup(relation="Age", tail=20))
        assert narrow <= broad


@st.composite
def graphs_and_patterns(draw):
    n = draw(st.integers(min_value=0, max_value=25))
    heads = [f"h{i}" for i in range(5)]
    rels = ["age", "city"]
    edges = []
    for _ in range(n):
        head = draw(st.sampled_from(heads))
        rel = draw(st.sampled_from(rels))
        if rel == "age":
            tail, kind = draw(st.integers(0, 50)), "numeric"
        else:
            tail, kind = draw(st.sampled_from(["x", "y", "z"])), "text"
        qual = draw(st.sampled_from([None, ("time", "1999"), ("time", "2001")]))
        edges.append(Edge(head, rel, tail, kind, qual))
    cg = ConditionGraph(edges)
    pattern = {}
    if draw(st.booleans()):
        pattern["head"] = draw(st.sampled_from(heads))
    if draw(st.booleans()):
        pattern["relation"] = draw(st.sampled_from(rels))
    if pattern.get("relation") == "age" and draw(st.booleans()):
        pattern["tail"] = draw(st.integers(0, 50))
        pattern["tail_cmp"] = draw(st.sampled_from(["=", "<", ">", "<=", ">="]))
    if not pattern:
        pattern["relation"] = "age"
    if draw(st.booleans()):
        pattern["qual_key"] = "time"
        pattern["qual_value"] = draw(st.sampled_from([1999, 2001]))
    return cg, pattern


@settings(max_examples=150, deadline=None)
@given(graphs_and_patterns())
def test_lookup_equals_brute_force(case):
    cg, pattern = case
    assert cg.lookup(**pattern) == brute_lookup(cg, **pattern)


@settings(max_examples=100, deadline=None)
@given(graphs_and_patterns())
def test_lookup_monotone_restriction(case):
    cg, pattern = case
    narrow = set(cg.lookup(**pattern))
    for dropped in list(pattern):
        if dropped in ("tail_cmp", "qual_cmp"):
            continue
        broad_pattern = {
            k: v for k, v in pattern.items()
            if k != dropped and not (dropped == "tail" and k == "tail_cmp")
            and not (dropped == "qual_value" and k == "qual_cmp")
        }
        if not any(k in broad_pattern
                   for k in ("head", "relation", "tail", "qual_key",
                             "qual_value")):
            continue
        try:
            broad = set(cg.lookup(**broad_pattern))
        except KindMismatchError:
            continue  # widening exposed a text tail to a comparator
        assert narrow <= broad


@given(st.text(max_size=40))
def test_normalize_idempotent(s):
    assert normalize(normalize(s)) == normalize(s)


def test_indices_cover_every_edge(people_graph):
    for i, edge in enumerate(people_graph.edges):
        assert i in people_graph.entity_index[normalize(edge.head)]
        assert i in people_graph.relation_index[normalize(edge.relation)]


def test_dedup_no_identical_edges(people_graph):
    seen = set()
    for edge in people_graph.edges:
        key = (edge.head, edge.relation, edge.tail, edge.qualifier)
        assert key not in seen
        seen.add(key)


class TestSchemaSummary:
    def test_lexicographic_relations(self, toy_graph):
        schema = schema_summary(toy_graph)
        assert schema.relations == ["Age", "Colleges", "Hometown"]

    def test_empty_graph(self):
        schema = schema_summary(ConditionGraph([]))
        assert schema.relations == []
        assert schema.sample_values == {}

    def test_relation_count_from_table(self):
        rows = [[f"row{i}", f"v{i}", str(i)] for i in range(100)]
        cg = ingest_table(rows, ["Key", "ColA", "ColB"])
        schema = schema_summary(cg)
        assert len(schema.relations) == 2

    def test_sample_cap_and_first_seen(self, people_graph):
        schema = schema_summary(people_graph)
        assert schema.sample_values["Age"] == ["20", "25", "30"]
        assert schema.sample_values["Colleges"] == ["Utah", "Princeton",
                                                    "Stanford"]

    def test_ingest_then_summary_lists_distinct_relations(self, movies_graph):
        schema = schema_summary(movies_graph)
        assert schema.relations == sorted({"directed_by", "genre"})


def test_infer_scalar_kinds():
    assert infer_scalar("20") == (20, "numeric")
    assert infer_scalar("20.5") == (20.5, "numeric")
    assert infer_scalar("1999") == (1999, "numeric")  # numbers win over years
    assert infer_scalar("1999-06-15") == ("1999-06-15", "date")
    assert infer_scalar("hello") == ("hello", "text")


def test_dump_load_round_trip(tmp_path, people_graph, terms_graph):
    for cg in (people_graph, terms_graph):
        path = str(tmp_path / f"{cg.source_kind}.jsonl")
        dump_graph(cg, path)
        back = load_graph(path)
        assert back.edges == cg.edges
        assert back.source_kind == cg.source_kind
