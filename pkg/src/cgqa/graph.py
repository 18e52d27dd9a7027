"""Condition graph: a uniform edge store for tables, triples, and temporal facts.

Every data source is flattened to (head, relation, tail[, qualifier]) edges.
Tails carry a scalar kind fixed at ingestion — number, date, or text — so the
executor's comparators have stable semantics. Graphs are immutable once built
and safe for concurrent readers.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

Scalar = str | int | float

KIND_TEXT = "text"
KIND_NUMERIC = "numeric"
KIND_DATE = "date"

_NUM_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_DATE_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_YEAR_RE = re.compile(r"^\d{4}$")


class GraphError(Exception):
    """Base for ingestion and lookup failures."""


class EmptyHeaderError(GraphError):
    pass


class RaggedRowError(GraphError):
    pass


class EmptyFieldError(GraphError):
    pass


class BadTimestampError(GraphError):
    pass


class KindMismatchError(GraphError):
    """A non-equality comparator was applied to a text value."""


def normalize(label: str) -> str:
    """Trim and case-fold a label. Idempotent."""
    return label.strip().casefold()


def infer_scalar(text: str) -> tuple[Scalar, str]:
    """Infer (typed value, kind) for a cell. Numbers win over bare years."""
    cell = text.strip()
    if _NUM_RE.match(cell):
        value = float(cell)
        if value.is_integer() and "e" not in cell.lower() and "." not in cell:
            return int(cell), KIND_NUMERIC
        return value, KIND_NUMERIC
    if _DATE_RE.match(cell):
        return cell, KIND_DATE
    return cell, KIND_TEXT


def time_key(value: Scalar) -> tuple[int, int, int] | None:
    """Comparable (year, month, day) for a date or bare-year value."""
    if isinstance(value, (int, float)):
        if float(value).is_integer():
            return (int(value), 1, 1)
        return None
    m = _DATE_RE.match(value.strip())
    if m:
        return (int(m.group(1)), int(m.group(2)), int(m.group(3)))
    if _YEAR_RE.match(value.strip()):
        return (int(value), 1, 1)
    return None


def value_text(value: Scalar) -> str:
    """Canonical text form of a scalar (integral floats print as ints)."""
    if isinstance(value, bool):  # guard: bools are ints but never stored
        return str(value)
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def value_key(value: Scalar) -> tuple[str, Any]:
    """Identity key used for set membership and deduplication."""
    if isinstance(value, (int, float)):
        return ("n", float(value))
    return ("t", normalize(value))


def compare_values(left: Scalar, right: Scalar, op: str) -> bool:
    """Compare two scalars under =, <, >, <=, >=.

    Numbers compare numerically; date-shaped text compares chronologically
    (bare years count as January 1). Text supports only equality; a non-equal
    comparator against text raises KindMismatchError.
    """
    if op == "=":
        return _equal(left, right)
    lk, rk = _order_key(left), _order_key(right)
    if lk is not None and rk is not None and lk[0] != rk[0]:
        # Year against full date: promote integral numbers to January 1.
        if lk[0] == "d" and rk[0] == "n":
            promoted = time_key(right)
            rk = ("d", promoted) if promoted else rk
        elif lk[0] == "n" and rk[0] == "d":
            promoted = time_key(left)
            lk = ("d", promoted) if promoted else lk
    if lk is None or rk is None or lk[0] != rk[0]:
        raise KindMismatchError(
            f"comparison symbol '{op}' is not supported between "
            f"'{value_text(left)}' and '{value_text(right)}'"
        )
    if op == "<":
        return lk < rk
    if op == ">":
        return lk > rk
    if op == "<=":
        return lk <= rk
    if op == ">=":
        return lk >= rk
    raise KindMismatchError(f"unknown comparison symbol '{op}'")


def _equal(left: Scalar, right: Scalar) -> bool:
    return value_key(_coerce_numeric(left)) == value_key(_coerce_numeric(right))


def _coerce_numeric(value: Scalar) -> Scalar:
    # '20' and 20 must match under equality.
    if isinstance(value, str) and _NUM_RE.match(value.strip()):
        return float(value)
    return value


def _order_key(value: Scalar) -> tuple[str, Any] | None:
    if isinstance(value, (int, float)):
        return ("n", float(value))
    if isinstance(value, str):
        text = value.strip()
        if _NUM_RE.match(text):
            return ("n", float(text))
        tk = time_key(text)
        if tk is not None:
            return ("d", tk)
    return None


@dataclass(frozen=True)
class Edge:
    """One fact: head --relation--> tail, optionally qualified (e.g. by time)."""

    head: str
    relation: str
    tail: Scalar
    tail_kind: str
    qualifier: tuple[str, str] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "head": self.head,
            "relation": self.relation,
            "tail": self.tail,
            "tail_kind": self.tail_kind,
            "qualifier": (
                {"key": self.qualifier[0], "value": self.qualifier[1]}
                if self.qualifier
                else None
            ),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Edge":
        qual = data.get("qualifier")
        return cls(
            head=data["head"],
            relation=data["relation"],
            tail=data["tail"],
            tail_kind=data["tail_kind"],
            qualifier=(qual["key"], qual["value"]) if qual else None,
        )


@dataclass
class SchemaDescriptor:
    """Relation inventory with sample values, rendered into prompts."""

    relations: list[str]
    sample_values: dict[str, list[str]]
    source_kind: str


class ConditionGraph:
    """Immutable, indexed edge set.

    entity_index maps normalized head labels to edge ids; relation_index maps
    normalized relation labels to edge ids. Both are accelerators only: lookup
    results always equal a brute-force scan.
    """

    def __init__(self, edges: Iterable[Edge], source_kind: str = "kg") -> None:
        seen: dict[Edge, None] = {}
        for edge in edges:
            if normalize(edge.head) == "" or normalize(edge.relation) == "":
                raise EmptyFieldError(
                    f"edge with empty head or relation: {edge.to_dict()!r}"
                )
            seen.setdefault(edge, None)
        self.edges: tuple[Edge, ...] = tuple(seen)
        self.source_kind = source_kind
        self.entity_index: dict[str, tuple[int, ...]] = {}
        self.relation_index: dict[str, tuple[int, ...]] = {}
        ent: dict[str, list[int]] = {}
        rel: dict[str, list[int]] = {}
        for i, edge in enumerate(self.edges):
            ent.setdefault(normalize(edge.head), []).append(i)
            rel.setdefault(normalize(edge.relation), []).append(i)
        self.entity_index = {k: tuple(v) for k, v in ent.items()}
        self.relation_index = {k: tuple(v) for k, v in rel.items()}

    def __len__(self) -> int:
        return len(self.edges)

    def head_entities(self) -> list[str]:
        """Distinct head labels, first-seen surface form, insertion order."""
        seen: dict[str, str] = {}
        for edge in self.edges:
            seen.setdefault(normalize(edge.head), edge.head)
        return list(seen.values())

    def lookup(
        self,
        head: Scalar | None = None,
        relation: str | None = None,
        tail: Scalar | None = None,
        tail_cmp: str = "=",
        qual_key: str | None = None,
        qual_value: Scalar | None = None,
        qual_cmp: str = "=",
    ) -> list[Edge]:
        """Edges matching every bound field, in stable edge order.

        tail_cmp/qual_cmp apply =, <, >, <=, >= on the tail / qualifier value;
        non-equality against text raises KindMismatchError.
        """
        if all(v is None for v in (head, relation, tail, qual_key, qual_value)):
            raise GraphError("lookup requires at least one bound field")
        ids: Sequence[int]
        if relation is not None:
            ids = self.relation_index.get(normalize(str(relation)), ())
        elif head is not None and isinstance(head, str):
            ids = self.entity_index.get(normalize(head), ())
        else:
            ids = range(len(self.edges))
        out = []
        for i in ids:
            edge = self.edges[i]
            if head is not None and not _equal(edge.head, head):
                continue
            if relation is not None and normalize(edge.relation) != normalize(
                str(relation)
            ):
                continue
            if tail is not None:
                if edge.tail_kind == KIND_TEXT and tail_cmp != "=":
                    raise KindMismatchError(
                        f"comparison symbol '{tail_cmp}' applied to text "
                        f"value '{value_text(edge.tail)}'"
                    )
                if not compare_values(edge.tail, tail, tail_cmp):
                    continue
            if qual_key is not None:
                if edge.qualifier is None:
                    continue
                if normalize(edge.qualifier[0]) != normalize(qual_key):
                    continue
            if qual_value is not None:
                if edge.qualifier is None:
                    continue
                if not compare_values(edge.qualifier[1], qual_value, qual_cmp):
                    continue
            out.append(edge)
        return out


def ingest_table(
    rows: Sequence[Sequence[str]],
    header: Sequence[str],
    key_column: int | str = 0,
) -> ConditionGraph:
    """Flatten a table into edges: (row key, column name, cell value).

    The key column names each row's entity and produces no edge of its own.
    """
    if not header or any(not h.strip() for h in header):
        raise EmptyHeaderError("header must be non-empty names")
    if isinstance(key_column, str):
        try:
            key_idx = [normalize(h) for h in header].index(normalize(key_column))
        except ValueError:
            raise EmptyHeaderError(f"key column {key_column!r} not in header")
    else:
        key_idx = key_column
        if not 0 <= key_idx < len(header):
            raise EmptyHeaderError(f"key column index {key_idx} out of range")
    edges = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise RaggedRowError(
                f"row {r} has {len(row)} cells, header has {len(header)}"
            )
        head = str(row[key_idx]).strip()
        for c, cell in enumerate(row):
            if c == key_idx:
                continue
            value, kind = infer_scalar(str(cell))
            edges.append(Edge(head, header[c].strip(), value, kind))
    return ConditionGraph(edges, source_kind="table")


def ingest_triples(triples: Iterable[Sequence[str]]) -> ConditionGraph:
    """Build a graph from (head, relation, tail) triples; duplicates collapse."""
    edges = []
    for head, relation, tail in triples:
        if not str(head).strip() or not str(relation).strip():
            raise EmptyFieldError(f"triple with empty head or relation: "
                                  f"{(head, relation, tail)!r}")
        value, kind = infer_scalar(str(tail))
        edges.append(Edge(str(head).strip(), str(relation).strip(), value, kind))
    return ConditionGraph(edges, source_kind="kg")


def ingest_temporal(quads: Iterable[Sequence[str]]) -> ConditionGraph:
    """Build a graph from (head, relation, tail, time) facts.

    The time must be an ISO date or an integer year; it lands in the edge
    qualifier under key "time" and stays comparable across both forms.
    """
    edges = []
    for head, relation, tail, when in quads:
        if not str(head).strip() or not str(relation).strip():
            raise EmptyFieldError(f"quad with empty head or relation: "
                                  f"{(head, relation, tail, when)!r}")
        stamp = str(when).strip()
        if time_key(stamp) is None:
            raise BadTimestampError(f"cannot parse time {when!r}")
        value, kind = infer_scalar(str(tail))
        edges.append(
            Edge(str(head).strip(), str(relation).strip(), value, kind,
                 qualifier=("time", stamp))
        )
    return ConditionGraph(edges, source_kind="temporal_kg")


def schema_summary(cg: ConditionGraph, max_samples: int = 3) -> SchemaDescriptor:
    """Relations (sorted) with up to max_samples first-seen tail values each."""
    surfaces: dict[str, str] = {}
    samples: dict[str, list[str]] = {}
    for edge in cg.edges:
        key = normalize(edge.relation)
        surfaces.setdefault(key, edge.relation)
        bucket = samples.setdefault(key, [])
        text = value_text(edge.tail)
        if text not in bucket and len(bucket) < max_samples:
            bucket.append(text)
    relations = sorted(surfaces.values())
    return SchemaDescriptor(
        relations=relations,
        sample_values={surfaces[k]: v for k, v in samples.items()},
        source_kind=cg.source_kind,
    )


def read_delimited(path: str, delimiter: str | None = None) -> list[list[str]]:
    """Read a CSV/TSV file; the delimiter defaults from the extension."""
    if delimiter is None:
        delimiter = "\t" if path.endswith((".tsv", ".tab")) else ","
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh, delimiter=delimiter) if row]


def load_table_file(path: str, key_column: int | str = 0,
                    delimiter: str | None = None) -> ConditionGraph:
    rows = read_delimited(path, delimiter)
    if not rows:
        raise EmptyHeaderError(f"{path} is empty")
    return ingest_table(rows[1:], rows[0], key_column=key_column)


def load_triples_file(path: str, delimiter: str = "\t") -> ConditionGraph:
    return ingest_triples(read_delimited(path, delimiter))


def load_temporal_file(path: str, delimiter: str = "\t") -> ConditionGraph:
    return ingest_temporal(read_delimited(path, delimiter))


def dump_graph(cg: ConditionGraph, path: str) -> None:
    """Write one JSON object per line: a meta line, then one line per edge."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": {"source_kind": cg.source_kind}}) + "\n")
        for edge in cg.edges:
            fh.write(json.dumps(edge.to_dict(), ensure_ascii=False) + "\n")


def load_graph(path: str) -> ConditionGraph:
    source_kind = "kg"
    edges = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if "meta" in data:
                source_kind = data["meta"].get("source_kind", source_kind)
                continue
            edges.append(Edge.from_dict(data))
    return ConditionGraph(edges, source_kind=source_kind)
