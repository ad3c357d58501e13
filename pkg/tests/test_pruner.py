from __future__ import annotations

import random

import pytest
from pydantic import ValidationError

from app.core.errors import NoTerminal
from app.core.graph import Edge, Node, NodeType, ReasoningGraph, node_id_from_index, sources, validate
from app.core.pruner import (
    BYPASS_LABEL,
    PruneParams,
    PruneReport,
    find_branch_redundant,
    find_depth_redundant,
    prune,
)
from tests.factories import brute_depths, brute_descendants, make_graph, random_dag


def _long_chain_with_side_reviews() -> ReasoningGraph:
    """Cadena de 21 nodos (terminal a profundidad 20) con revisiones a profundidad 18 y 19."""
    ids = [node_id_from_index(i) for i in range(23)]
    chain, side_18, side_19 = ids[:21], ids[21], ids[22]
    nodes = [(v, "p") for v in chain] + [(side_18, "r"), (side_19, "r")]
    edges = list(zip(chain, chain[1:]))
    edges += [(chain[17], side_18), (chain[18], side_19)]
    return make_graph(nodes, edges, terminal=chain[-1])


# ==========================
#   CRITERIO DE RAMA
# ==========================


def test_branch_criterion_is_strict():
    # R tiene exactamente 2 descendientes (S y el terminal); L es una hoja.
    g = make_graph(
        [("A", "p"), ("B", "p"), ("L", "r"), ("R", "r"), ("S", "p"), ("T", "p"), ("Z", "p")],
        [("A", "B"), ("B", "L"), ("A", "R"), ("R", "S"), ("S", "Z"), ("B", "T"), ("B", "Z")],
        terminal="Z",
    )
    assert validate(g) == []
    assert find_branch_redundant(g, k=2) == {"L"}
    assert find_branch_redundant(g, k=3) == {"L", "R"}


def test_branch_criterion_ignores_progress_leaves(side_review_graph):
    side_review_graph.nodes["R"] = Node("R", "paso", NodeType.PROGRESS, (2,))
    assert find_branch_redundant(side_review_graph, k=5) == set()


# ==========================
#   CRITERIO DE PROFUNDIDAD
# ==========================


def test_depth_criterion_boundaries():
    g = _long_chain_with_side_reviews()
    assert validate(g) == []
    assert find_depth_redundant(g, m=0.9) == {"W"}
    assert find_depth_redundant(g, m=0.85) == {"V", "W"}
    assert find_depth_redundant(g, m=1.0) == set()


def test_depth_criterion_single_terminal_graph():
    g = make_graph([("A", "p")], terminal="A")
    assert find_depth_redundant(g, m=0.1) == set()


def test_depth_criterion_requires_terminal():
    with pytest.raises(NoTerminal):
        find_depth_redundant(make_graph([("A", "r")]), m=0.9)


@pytest.mark.slow
def test_criteria_agree_with_brute_force():
    for seed in range(500):
        g = random_dag(random.Random(seed), max_nodes=8)
        reviews = {v for v, n in g.nodes.items() if n.node_type is NodeType.REVIEW and v != g.terminal}
        depths = brute_depths(g)
        d_max = depths[g.terminal]
        for k in (1, 2, 3):
            expected = {v for v in reviews if len(brute_descendants(g, v)) < k}
            assert find_branch_redundant(g, k) == expected, seed
        for m in (0.5, 0.9):
            expected = {v for v in reviews if d_max and depths[v] / d_max > m}
            assert find_depth_redundant(g, m) == expected, seed


# ==========================
#   PODA
# ==========================


def test_progress_only_graph_is_unchanged():
    g = make_graph([("A", "p"), ("B", "p"), ("C", "p")], [("A", "B"), ("B", "C"), ("A", "C")], terminal="C")
    pruned, report = prune(g)
    assert report.is_empty()
    assert pruned.nodes == g.nodes
    assert pruned.edges == g.edges
    assert pruned is not g


def test_side_review_leaf_is_removed(side_review_graph):
    pruned, report = prune(side_review_graph)
    assert report.branch_pruned == {"R"}
    assert report.cascade_removed == set()
    assert report.bypass_edges_added == []
    assert set(pruned.nodes) == {"A", "B", "C"}
    assert {(e.source, e.target) for e in pruned.edges} == {("A", "B"), ("B", "C")}


def test_review_on_main_chain_gets_bypass():
    g = make_graph([("A", "p", [0]), ("B", "r", [1]), ("C", "p", [2])], [("A", "B"), ("B", "C")], terminal="C")
    pruned, report = prune(g)
    assert report.branch_pruned == {"B"}
    assert report.bypass_edges_added == [Edge("A", "C", BYPASS_LABEL)]
    assert pruned.has_edge("A", "C")
    assert validate(pruned) == []


def test_exclusive_descendants_cascade():
    g = make_graph(
        [("A", "p"), ("B", "p"), ("C", "r"), ("D", "p"), ("E", "p")],
        [("A", "B"), ("B", "E"), ("A", "C"), ("C", "D")],
        terminal="E",
    )
    pruned, report = prune(g)
    assert report.branch_pruned == {"C"}
    assert report.cascade_removed == {"D"}
    assert set(pruned.nodes) == {"A", "B", "E"}


def test_shared_descendant_survives_without_bypass():
    g = make_graph(
        [("A", "p"), ("B", "p"), ("C", "r"), ("D", "p"), ("E", "p")],
        [("A", "B"), ("A", "C"), ("C", "D"), ("B", "D"), ("D", "E")],
        terminal="E",
    )
    pruned, report = prune(g, PruneParams(k=3))
    assert report.removed == {"C"}
    assert "D" in pruned.nodes
    assert report.bypass_edges_added == []


def test_bypass_from_every_feeder():
    g = make_graph(
        [("A", "p"), ("B", "p"), ("C", "r"), ("D", "p")],
        [("A", "C"), ("B", "C"), ("C", "D")],
        terminal="D",
    )
    pruned, report = prune(g)
    assert report.bypass_edges_added == [Edge("A", "D", BYPASS_LABEL), Edge("B", "D", BYPASS_LABEL)]
    assert validate(pruned) == []


def test_prune_does_not_mutate_input(side_review_graph):
    before = (dict(side_review_graph.nodes), list(side_review_graph.edges))
    prune(side_review_graph)
    assert (side_review_graph.nodes, side_review_graph.edges) == before


def test_prune_requires_terminal():
    with pytest.raises(NoTerminal):
        prune(make_graph([("A", "p")]))


@pytest.mark.parametrize("params", [{"k": 0}, {"m": 0.0}, {"m": 1.5}])
def test_params_range(params):
    with pytest.raises(ValidationError):
        PruneParams(**params)


def test_report_dict_is_sorted_and_restorable():
    report = PruneReport(
        branch_pruned={"AA", "B"},
        depth_pruned={"C"},
        bypass_edges_added=[Edge("A", "D", BYPASS_LABEL)],
    )
    data = report.to_dict()
    assert data["branch_pruned"] == ["B", "AA"]
    assert data["bypass_edges_added"] == [{"from": "A", "to": "D", "label": BYPASS_LABEL}]
    assert PruneReport.from_dict(data) == report


# ==========================
#   PROPIEDADES
# ==========================


def _reachable_from_sources(g: ReasoningGraph) -> set[str]:
    reached: set[str] = set()
    for s in sources(g):
        reached |= {s} | brute_descendants(g, s)
    return reached


@pytest.mark.slow
def test_pruning_is_safe_on_random_graphs():
    for seed in range(500):
        g = random_dag(random.Random(seed), max_nodes=8)
        pruned, report = prune(g)
        assert validate(pruned) == [], seed
        assert pruned.terminal == g.terminal
        assert g.terminal in _reachable_from_sources(pruned)
        assert g.terminal not in report.removed
        assert set(pruned.nodes) == set(g.nodes) - report.removed
        for v in report.branch_pruned | report.depth_pruned:
            assert g.nodes[v].node_type is NodeType.REVIEW
        # Solo el terminal puede quedarse sin padres y recibir aristas de bypass.
        for v in set(pruned.nodes) - {g.terminal}:
            had_parent = any(e.target == v for e in g.edges)
            has_parent = any(e.target == v for e in pruned.edges)
            assert had_parent == has_parent, (seed, v)


def test_removal_is_monotone_in_k_and_m():
    for seed in range(300):
        g = random_dag(random.Random(seed), max_nodes=8)
        removed = {
            (k, m): prune(g, PruneParams(k=k, m=m))[1].removed
            for k in (1, 2)
            for m in (0.9, 0.95)
        }
        assert removed[(1, 0.9)] <= removed[(2, 0.9)], seed
        assert removed[(2, 0.95)] <= removed[(2, 0.9)], seed


def test_second_pass_never_targets_progress_survivors():
    for seed in range(300):
        g = random_dag(random.Random(seed), max_nodes=8)
        params = PruneParams()
        pruned, _ = prune(g, params)
        progress_survivors = {
            v for v, n in pruned.nodes.items() if n.node_type is not NodeType.REVIEW
        }
        assert find_branch_redundant(pruned, params.k).isdisjoint(progress_survivors), seed
        again, report = prune(pruned, params)
        assert validate(again) == [], seed
        assert again.terminal == g.terminal
        roots = report.branch_pruned | report.depth_pruned
        assert roots.isdisjoint(progress_survivors), seed
