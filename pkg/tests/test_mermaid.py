from __future__ import annotations

import random

import pytest

from app.core.errors import MermaidParseError
from app.core.graph import Edge, Node, NodeType, ReasoningGraph, graph_to_dict
from app.core.mermaid import from_mermaid, to_mermaid
from tests.factories import make_graph, random_dag


def test_render_dialect(side_review_graph):
    text = to_mermaid(side_review_graph, with_metadata=False)
    assert text.splitlines() == [
        "graph TD",
        '    A["step A"]:::progress',
        '    B["step B"]:::progress',
        '    C["final answer"]:::progress',
        '    R["step R"]:::review',
        "    A --> B",
        "    A --> R",
        "    B --> C",
        "    classDef progress fill:#e8f0fe,stroke:#1a73e8",
        "    classDef review fill:#fdecea,stroke:#d93025",
    ]


def test_empty_graph_renders_header_only():
    assert to_mermaid(ReasoningGraph()) == "graph TD\n"


def test_metadata_comments(side_review_graph):
    text = to_mermaid(side_review_graph)
    assert "    %% chunks A: 0" in text
    assert "    %% terminal C" in text


def test_labels_and_escaping_round_trip():
    g = ReasoningGraph()
    g.nodes["A"] = Node("A", 'dice "hola" | #1\nnueva línea', NodeType.PROGRESS, (0,))
    g.nodes["B"] = Node("B", "final answer", NodeType.PROGRESS, (1,))
    g.edges.append(Edge("A", "B", "usa | el #dato"))
    g.terminal = "B"
    text = to_mermaid(g)
    assert "\n" not in text.splitlines()[1]
    assert graph_to_dict(from_mermaid(text)) == graph_to_dict(g)


def test_round_trip_random_graphs():
    for seed in range(200):
        g = random_dag(random.Random(seed))
        parsed = from_mermaid(to_mermaid(g))
        assert parsed.nodes == g.nodes, seed
        assert set(parsed.edges) == set(g.edges), seed
        assert parsed.terminal == g.terminal


def test_terminal_inferred_without_metadata(side_review_graph):
    parsed = from_mermaid(to_mermaid(side_review_graph, with_metadata=False))
    assert parsed.terminal == "C"
    assert parsed.nodes["A"].chunk_indices == ()


@pytest.mark.parametrize(
    ("text", "line"),
    [
        ("flowchart LR\n", 1),
        ('graph TD\n    A["x"]:::progress\n    A --> B\n', 3),
        ('graph TD\n    A["x"]:::weird\n', 2),
        ('graph TD\n    A["x"]:::progress\n    A["y"]:::progress\n', 3),
        ('graph TD\n    A["x"]:::progress\n    %% terminal Q\n', 3),
        ('graph TD\n    A["x"]:::progress\n    %% chunks Q: 0\n    %% chunks A: 1\n', 3),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(MermaidParseError) as info:
        from_mermaid(text)
    assert info.value.line == line


def test_unknown_comments_are_ignored():
    g = from_mermaid('graph TD\n    %% cualquier cosa\n    A["final answer"]:::progress\n')
    assert g.terminal == "A"
    assert make_graph([("A", "p")], terminal="A").nodes == g.nodes


@pytest.mark.parametrize("separator", ["\u2028", "\u2029", "\x0b", "\x0c", "\x1c", "\x85", "\r\n"])
def test_unicode_line_separators_survive_round_trip(separator):
    g = make_graph([("A", "p", [0]), ("B", "p", [1])], [("A", "B")], terminal="B")
    g.nodes["A"] = Node("A", f"antes{separator}después", NodeType.PROGRESS, (0,))
    g.edges[0] = Edge("A", "B", f"usa{separator}A")
    text = to_mermaid(g)
    assert len(text.splitlines()) == len(text.split("\n")) - 1
    assert graph_to_dict(from_mermaid(text)) == graph_to_dict(g)


def test_crlf_input_is_accepted():
    text = to_mermaid(make_graph([("A", "p", [0]), ("B", "p", [1])], [("A", "B")], terminal="B"))
    parsed = from_mermaid(text.replace("\n", "\r\n"))
    assert parsed.has_edge("A", "B")
    assert parsed.nodes["B"].chunk_indices == (1,)
