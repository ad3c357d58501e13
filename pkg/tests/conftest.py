from __future__ import annotations

import random

import pytest

from app.core.graph import ReasoningGraph
from tests.factories import make_graph


@pytest.fixture(autouse=True)
def _no_api_key(monkeypatch: pytest.MonkeyPatch) -> None:
    """Ninguna prueba debe depender de credenciales reales."""
    monkeypatch.delenv("LLM_API_KEY", raising=False)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


@pytest.fixture
def side_review_graph() -> ReasoningGraph:
    """A -> B -> C(terminal) con una revisión lateral R colgando de A."""
    return make_graph(
        [("A", "p", [0]), ("B", "p", [1]), ("C", "p", [3]), ("R", "r", [2])],
        [("A", "B"), ("B", "C"), ("A", "R")],
        terminal="C",
    )
