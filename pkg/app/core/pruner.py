# pruner.py

"""
Poda de nodos de revisión redundantes.

Dos criterios, evaluados una sola vez sobre el grafo de entrada:
    - rama: nodos review con menos de ``k`` descendientes (B(v) < k);
    - profundidad: nodos review con profundidad relativa d(v)/d_max > ``m``.

Con cada nodo eliminado caen también sus descendientes exclusivos (los que
solo eran alcanzables a través de él). Si un superviviente se queda sin
aristas de entrada, se re-engancha con aristas "pruned-bypass" desde los
supervivientes que alimentaban la región eliminada.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Final

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import InvalidGraph, NoTerminal
from app.core.graph import (
    Edge,
    NodeId,
    NodeType,
    ReasoningGraph,
    all_depths,
    descendant_count,
    node_id_key,
    sources,
    validate,
)

logger = logging.getLogger(__name__)

BYPASS_LABEL: Final[str] = "pruned-bypass"


class PruneParams(BaseModel):
    """Umbrales de poda; por defecto k=2 y m=0.9."""

    model_config = ConfigDict(frozen=True)

    k: int = Field(2, ge=1, description="Umbral de descendientes (B(v) < k).")
    m: float = Field(0.9, gt=0, le=1, description="Umbral de profundidad relativa.")


@dataclass
class PruneReport:
    """Auditoría de una poda."""

    branch_pruned: set[NodeId] = field(default_factory=set)
    depth_pruned: set[NodeId] = field(default_factory=set)
    cascade_removed: set[NodeId] = field(default_factory=set)
    bypass_edges_added: list[Edge] = field(default_factory=list)

    @property
    def removed(self) -> set[NodeId]:
        return self.branch_pruned | self.depth_pruned | self.cascade_removed

    def is_empty(self) -> bool:
        return not self.removed and not self.bypass_edges_added

    def to_dict(self) -> dict[str, Any]:
        def ordered(ids: set[NodeId]) -> list[NodeId]:
            return sorted(ids, key=node_id_key)

        return {
            "branch_pruned": ordered(self.branch_pruned),
            "depth_pruned": ordered(self.depth_pruned),
            "cascade_removed": ordered(self.cascade_removed),
            "bypass_edges_added": [
                {"from": e.source, "to": e.target, "label": e.label}
                for e in self.bypass_edges_added
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PruneReport:
        return cls(
            branch_pruned=set(data.get("branch_pruned", [])),
            depth_pruned=set(data.get("depth_pruned", [])),
            cascade_removed=set(data.get("cascade_removed", [])),
            bypass_edges_added=[
                Edge(source=e["from"], target=e["to"], label=e.get("label", ""))
                for e in data.get("bypass_edges_added", [])
            ],
        )


def _review_ids(graph: ReasoningGraph) -> list[NodeId]:
    return [
        v
        for v in graph.sorted_ids()
        if graph.nodes[v].node_type is NodeType.REVIEW and v != graph.terminal
    ]


def find_branch_redundant(graph: ReasoningGraph, k: int) -> set[NodeId]:
    """Nodos review con menos de ``k`` descendientes."""
    return {v for v in _review_ids(graph) if descendant_count(graph, v) < k}


def find_depth_redundant(graph: ReasoningGraph, m: float) -> set[NodeId]:
    """
    Nodos review cuya profundidad relativa supera ``m`` (estrictamente).

    Raises:
        NoTerminal: Si el grafo no tiene terminal.
    """
    if graph.terminal is None:
        raise NoTerminal("El grafo no tiene nodo terminal.")
    depths = all_depths(graph)
    d_max = depths.get(graph.terminal, 0)
    if d_max == 0:
        return set()
    return {v for v in _review_ids(graph) if depths.get(v, 0) / d_max > m}


def _bypass_sources(
    graph: ReasoningGraph, node: NodeId, removed: set[NodeId]
) -> list[NodeId]:
    """Supervivientes que alimentaban la región eliminada que desemboca en ``node``."""
    preds: dict[NodeId, list[NodeId]] = {}
    for e in graph.edges:
        preds.setdefault(e.target, []).append(e.source)

    region: set[NodeId] = set()
    stack = [p for p in preds.get(node, []) if p in removed]
    while stack:
        v = stack.pop()
        if v in region:
            continue
        region.add(v)
        stack.extend(p for p in preds.get(v, []) if p in removed)

    feeders = {
        p for v in region for p in preds.get(v, []) if p not in removed
    }
    return sorted(feeders, key=node_id_key)


def prune(
    graph: ReasoningGraph, params: PruneParams | None = None
) -> tuple[ReasoningGraph, PruneReport]:
    """
    Elimina los nodos review redundantes y sus descendientes exclusivos.

    Returns:
        (grafo podado, informe). El grafo de entrada no se modifica.

    Raises:
        NoTerminal: Si el grafo no tiene terminal.
        InvalidGraph: Si el resultado no valida (no debería ocurrir).
    """
    params = params or PruneParams()
    if graph.terminal is None:
        raise NoTerminal("El grafo no tiene nodo terminal.")

    report = PruneReport(
        branch_pruned=find_branch_redundant(graph, params.k),
        depth_pruned=find_depth_redundant(graph, params.m),
    )
    roots = (report.branch_pruned | report.depth_pruned) - {graph.terminal}
    if not roots:
        return graph.copy(), report

    # Descendientes exclusivos: lo que deja de ser alcanzable sin las raíces.
    remaining = graph.to_networkx()
    original_sources = [s for s in sources(graph) if s not in roots]
    remaining.remove_nodes_from(roots)
    reachable: set[NodeId] = set(original_sources)
    for s in original_sources:
        reachable |= nx.descendants(remaining, s)
    report.cascade_removed = (
        set(graph.nodes) - roots - reachable - {graph.terminal}
    )
    removed = roots | report.cascade_removed

    pruned = ReasoningGraph(
        nodes={v: n for v, n in graph.nodes.items() if v not in removed},
        edges=[
            e for e in graph.edges if e.source not in removed and e.target not in removed
        ],
        terminal=graph.terminal,
    )

    had_incoming = {e.target for e in graph.edges}
    still_incoming = {e.target for e in pruned.edges}
    for v in pruned.sorted_ids():
        if v in had_incoming and v not in still_incoming:
            for source in _bypass_sources(graph, v, removed):
                edge = Edge(source=source, target=v, label=BYPASS_LABEL)
                pruned.edges.append(edge)
                report.bypass_edges_added.append(edge)

    violations = validate(pruned)
    if violations:
        raise InvalidGraph(f"Grafo podado inválido: {violations}")
    logger.debug(
        f"Poda: {len(report.branch_pruned)} por rama, {len(report.depth_pruned)} por "
        f"profundidad, {len(report.cascade_removed)} en cascada, "
        f"{len(report.bypass_edges_added)} aristas de bypass"
    )
    return pruned, report
