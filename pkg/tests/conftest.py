from __future__ import annotations

import pytest

from cgqa.graph import ConditionGraph, ingest_table, ingest_temporal, ingest_triples


@pytest.fixture
def toy_graph() -> ConditionGraph:
    """Two-person table: the smallest graph the executor examples use."""
    return ingest_table(
        [
            ["Alice", "Utah", "20", "Texas"],
            ["Bob", "Princeton", "25", "Boston"],
        ],
        ["Name", "Colleges", "Age", "Hometown"],
    )


@pytest.fixture
def people_graph() -> ConditionGraph:
    """Four-person table with a text-only column for fault scenarios."""
    return ingest_table(
        [
            ["Alice", "Utah", "20", "Texas", "Ace"],
            ["Bob", "Princeton", "25", "Boston", "Bo"],
            ["Carol", "Stanford", "30", "Dallas", "Caz"],
            ["Dave", "Utah", "35", "Boston", "Dee"],
        ],
        ["Name", "Colleges", "Age", "Hometown", "Nickname"],
    )


@pytest.fixture
def movies_graph() -> ConditionGraph:
    return ingest_triples(
        [
            ("Inception", "directed_by", "Nolan"),
            ("Inception", "genre", "SciFi"),
            ("Memento", "directed_by", "Nolan"),
            ("Memento", "genre", "Thriller"),
            ("Interstellar", "directed_by", "Nolan"),
            ("Interstellar", "genre", "SciFi"),
            ("Heat", "directed_by", "Mann"),
            ("Heat", "genre", "Crime"),
        ]
    )


@pytest.fixture
def terms_graph() -> ConditionGraph:
    return ingest_temporal(
        [
            ("France", "president", "Chirac", "1996"),
            ("France", "president", "Sarkozy", "2008"),
            ("USA", "president", "Clinton", "1996"),
            ("USA", "president", "Bush", "2004"),
        ]
    )
