# graph.py

"""
Modelo de grafo de razonamiento G=(V, E, l): nodos tipados (progress/review)
unidos por aristas de dependencia etiquetadas.

Las aristas siempre van de un id menor a uno mayor (orden de hoja de cálculo:
A < Z < AA < AB), lo que garantiza que el grafo sea acíclico. Las consultas
estructurales (descendientes, profundidad) se resuelven con networkx.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import Any, Final

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import (
    DuplicateEdge,
    GraphError,
    IdOrderViolation,
    InvalidEdge,
    InvalidNodeId,
    NoTerminal,
    TerminalViolation,
    UnknownEndpoint,
    UnknownNode,
    Unreachable,
)

logger = logging.getLogger(__name__)

NodeId = str

TERMINAL_SUMMARY: Final[str] = "final answer"

_NODE_ID_RE = re.compile(r"^[A-Z]+$")


# ==========================
#   IDENTIFICADORES
# ==========================


def is_valid_node_id(node_id: str) -> bool:
    return bool(_NODE_ID_RE.match(node_id))


def node_id_key(node_id: NodeId) -> tuple[int, str]:
    """Clave de orden: primero longitud, luego lexicográfico (A < Z < AA)."""
    return (len(node_id), node_id)


def node_id_from_index(index: int) -> NodeId:
    """Convierte un ordinal 0-based en id de hoja de cálculo (0 -> A, 26 -> AA)."""
    if index < 0:
        raise ValueError(f"Índice negativo: {index}")
    letters: list[str] = []
    n = index + 1
    while n > 0:
        n, rem = divmod(n - 1, 26)
        letters.append(chr(ord("A") + rem))
    return "".join(reversed(letters))


def node_id_to_index(node_id: NodeId) -> int:
    """Inversa de ``node_id_from_index``."""
    if not is_valid_node_id(node_id):
        raise InvalidNodeId(f"Id de nodo inválido: {node_id!r}")
    n = 0
    for char in node_id:
        n = n * 26 + (ord(char) - ord("A") + 1)
    return n - 1


def next_node_id(node_id: NodeId | None) -> NodeId:
    """Siguiente id en orden de hoja de cálculo; ``None`` arranca en "A"."""
    if node_id is None:
        return "A"
    return node_id_from_index(node_id_to_index(node_id) + 1)


# ==========================
#   MODELOS DE DATOS
# ==========================


class NodeType(StrEnum):
    """Tipo funcional de un nodo."""

    PROGRESS = "progress"
    REVIEW = "review"


@dataclass(frozen=True, slots=True)
class Node:
    """Unidad de razonamiento: resumen, tipo y chunks que la componen."""

    id: NodeId
    summary: str
    node_type: NodeType
    chunk_indices: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class Edge:
    """Dependencia ``source -> target``; la etiqueta es texto libre."""

    source: NodeId
    target: NodeId
    label: str = ""


@dataclass
class ReasoningGraph:
    """DAG de razonamiento. Un único escritor durante la construcción."""

    nodes: dict[NodeId, Node] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    terminal: NodeId | None = None

    def max_id(self) -> NodeId | None:
        if not self.nodes:
            return None
        return max(self.nodes, key=node_id_key)

    def sorted_ids(self) -> list[NodeId]:
        return sorted(self.nodes, key=node_id_key)

    def has_edge(self, source: NodeId, target: NodeId) -> bool:
        return any(e.source == source and e.target == target for e in self.edges)

    def out_degree(self, node_id: NodeId) -> int:
        return sum(1 for e in self.edges if e.source == node_id)

    def copy(self) -> ReasoningGraph:
        return ReasoningGraph(
            nodes=dict(self.nodes), edges=list(self.edges), terminal=self.terminal
        )

    def to_networkx(self) -> nx.DiGraph:
        g: nx.DiGraph = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(
            (e.source, e.target)
            for e in self.edges
            if e.source in self.nodes and e.target in self.nodes
        )
        return g


def is_terminal_summary(summary: str) -> bool:
    return summary.strip().lower() == TERMINAL_SUMMARY


# ==========================
#   MUTACIONES
# ==========================


def insert_node(
    graph: ReasoningGraph, node: Node, incoming: list[Edge] | None = None
) -> ReasoningGraph:
    """
    Inserta un nodo nuevo con sus aristas entrantes.

    Devuelve un grafo nuevo; el de entrada nunca se modifica.

    Raises:
        InvalidNodeId, IdOrderViolation, UnknownEndpoint, DuplicateEdge,
        InvalidEdge, TerminalViolation.
    """
    incoming = incoming or []
    if not is_valid_node_id(node.id):
        raise InvalidNodeId(f"Id de nodo inválido: {node.id!r}")
    if not node.summary.strip():
        raise GraphError(f"El nodo {node.id} no tiene resumen.")
    current_max = graph.max_id()
    if current_max is not None and node_id_key(node.id) <= node_id_key(current_max):
        raise IdOrderViolation(
            f"El id {node.id} debe ser mayor que el máximo existente ({current_max})."
        )

    becomes_terminal = is_terminal_summary(node.summary)
    if becomes_terminal and graph.terminal is not None:
        raise TerminalViolation(f"Ya existe el nodo terminal {graph.terminal}.")

    seen: set[NodeId] = set()
    for edge in incoming:
        if edge.target != node.id:
            raise InvalidEdge(
                f"La arista {edge.source}->{edge.target} no apunta al nodo nuevo {node.id}."
            )
        if edge.source == node.id:
            raise InvalidEdge(f"Auto-arista en {node.id}.")
        if edge.source not in graph.nodes:
            raise UnknownEndpoint(f"La arista parte de un nodo inexistente: {edge.source}.")
        if edge.source == graph.terminal:
            raise TerminalViolation(
                f"El terminal {graph.terminal} no puede tener aristas salientes."
            )
        if edge.source in seen:
            raise DuplicateEdge(f"Arista duplicada {edge.source}->{edge.target}.")
        seen.add(edge.source)

    updated = graph.copy()
    updated.nodes[node.id] = node
    updated.edges.extend(incoming)
    if becomes_terminal:
        updated.terminal = node.id
    return updated


def merge_into(
    graph: ReasoningGraph,
    target: NodeId,
    addition_text: str,
    chunk_index: int,
    incoming: list[Edge] | None = None,
) -> ReasoningGraph:
    """
    Fusiona un chunk en un nodo existente.

    El resumen se reemplaza por la descripción actualizada que aporta el
    llamador (si no está vacía); el terminal conserva su nombre. Las aristas
    de ``incoming`` deben llegar a ``target`` desde nodos de id menor.
    Devuelve un grafo nuevo.

    Raises:
        UnknownNode: Si ``target`` no existe.
        UnknownEndpoint, DuplicateEdge, InvalidEdge, TerminalViolation.
    """
    node = graph.nodes.get(target)
    if node is None:
        raise UnknownNode(f"No existe el nodo {target}.")

    if is_terminal_summary(addition_text) and target != graph.terminal:
        raise TerminalViolation(
            f"Solo el terminal puede llamarse '{TERMINAL_SUMMARY}' (fusión en {target})."
        )

    incoming = incoming or []
    seen: set[NodeId] = set()
    for edge in incoming:
        if edge.target != target:
            raise InvalidEdge(
                f"La arista {edge.source}->{edge.target} no apunta al nodo fusionado {target}."
            )
        if edge.source not in graph.nodes:
            raise UnknownEndpoint(f"La arista parte de un nodo inexistente: {edge.source}.")
        if node_id_key(edge.source) >= node_id_key(target):
            raise InvalidEdge(
                f"La arista {edge.source}->{target} no respeta el orden de ids."
            )
        if edge.source == graph.terminal:
            raise TerminalViolation(
                f"El terminal {graph.terminal} no puede tener aristas salientes."
            )
        if edge.source in seen or graph.has_edge(edge.source, target):
            raise DuplicateEdge(f"Arista duplicada {edge.source}->{target}.")
        seen.add(edge.source)

    summary = node.summary
    if addition_text.strip() and target != graph.terminal:
        summary = addition_text.strip()
    indices = tuple(sorted({*node.chunk_indices, chunk_index}))
    updated = graph.copy()
    updated.nodes[target] = replace(node, summary=summary, chunk_indices=indices)
    updated.edges.extend(incoming)
    return updated


# ==========================
#   CONSULTAS
# ==========================


def _require(graph: ReasoningGraph, v: NodeId) -> None:
    if v not in graph.nodes:
        raise UnknownNode(f"No existe el nodo {v}.")


def sources(graph: ReasoningGraph) -> list[NodeId]:
    """Nodos con grado de entrada 0, en orden de id."""
    targets = {e.target for e in graph.edges}
    return [v for v in graph.sorted_ids() if v not in targets]


def descendants(graph: ReasoningGraph, v: NodeId) -> set[NodeId]:
    """Desc(v): nodos alcanzables desde ``v``, excluido ``v``."""
    _require(graph, v)
    return set(nx.descendants(graph.to_networkx(), v))


def descendant_count(graph: ReasoningGraph, v: NodeId) -> int:
    """B(v) = |Desc(v)|."""
    return len(descendants(graph, v))


def all_depths(graph: ReasoningGraph) -> dict[NodeId, int]:
    """Profundidad de cada nodo: camino más corto desde cualquier fuente."""
    roots = sources(graph)
    if not roots:
        return {}
    lengths = nx.multi_source_dijkstra_path_length(graph.to_networkx(), set(roots))
    return {v: int(d) for v, d in lengths.items()}


def depth(graph: ReasoningGraph, v: NodeId) -> int:
    """d(v): mínimo, sobre todas las fuentes, del camino más corto hasta ``v``."""
    _require(graph, v)
    depths = all_depths(graph)
    if v not in depths:
        raise Unreachable(f"El nodo {v} no es alcanzable desde ninguna fuente.")
    return depths[v]


def max_depth(graph: ReasoningGraph) -> int:
    """d_max = d(terminal)."""
    if graph.terminal is None:
        raise NoTerminal("El grafo no tiene nodo terminal.")
    return depth(graph, graph.terminal)


def main_path_nodes(graph: ReasoningGraph) -> set[NodeId]:
    """Nodos sobre algún camino fuente -> terminal (el terminal y sus ancestros)."""
    if graph.terminal is None:
        raise NoTerminal("El grafo no tiene nodo terminal.")
    _require(graph, graph.terminal)
    return {graph.terminal, *nx.ancestors(graph.to_networkx(), graph.terminal)}


def review_count(graph: ReasoningGraph) -> int:
    return sum(1 for n in graph.nodes.values() if n.node_type is NodeType.REVIEW)


# ==========================
#   VALIDACIÓN
# ==========================


class ViolationKind(StrEnum):
    INVALID_NODE_ID = "InvalidNodeId"
    EMPTY_SUMMARY = "EmptySummary"
    EDGE_DIRECTION = "EdgeDirectionViolation"
    SELF_EDGE = "SelfEdge"
    DANGLING_ENDPOINT = "DanglingEndpoint"
    DUPLICATE_EDGE = "DuplicateEdge"
    MISSING_TERMINAL = "MissingTerminal"
    TERMINAL_NAME = "TerminalNameViolation"
    TERMINAL_OUT_EDGES = "TerminalOutEdges"


@dataclass(frozen=True, slots=True)
class Violation:
    """Invariante incumplido; los resultados de validación son datos."""

    kind: ViolationKind
    detail: str


def validate(graph: ReasoningGraph) -> list[Violation]:
    """Devuelve todas las violaciones de invariantes (lista vacía = válido)."""
    violations: list[Violation] = []

    for node_id, node in graph.nodes.items():
        if not is_valid_node_id(node_id) or node.id != node_id:
            violations.append(Violation(ViolationKind.INVALID_NODE_ID, node_id))
        if not node.summary.strip():
            violations.append(Violation(ViolationKind.EMPTY_SUMMARY, node_id))
        elif node_id != graph.terminal and is_terminal_summary(node.summary):
            violations.append(Violation(ViolationKind.TERMINAL_NAME, node_id))

    seen: set[tuple[NodeId, NodeId]] = set()
    for e in graph.edges:
        pair = f"{e.source}->{e.target}"
        if e.source not in graph.nodes or e.target not in graph.nodes:
            violations.append(Violation(ViolationKind.DANGLING_ENDPOINT, pair))
        if e.source == e.target:
            violations.append(Violation(ViolationKind.SELF_EDGE, pair))
        elif node_id_key(e.source) > node_id_key(e.target):
            violations.append(Violation(ViolationKind.EDGE_DIRECTION, pair))
        if (e.source, e.target) in seen:
            violations.append(Violation(ViolationKind.DUPLICATE_EDGE, pair))
        seen.add((e.source, e.target))

    if graph.terminal is None:
        if graph.nodes:
            violations.append(
                Violation(ViolationKind.MISSING_TERMINAL, "no hay nodo 'final answer'")
            )
    elif graph.terminal not in graph.nodes:
        violations.append(Violation(ViolationKind.DANGLING_ENDPOINT, graph.terminal))
    else:
        if not is_terminal_summary(graph.nodes[graph.terminal].summary):
            violations.append(
                Violation(
                    ViolationKind.TERMINAL_NAME,
                    f"{graph.terminal}: {graph.nodes[graph.terminal].summary!r}",
                )
            )
        if graph.out_degree(graph.terminal) > 0:
            violations.append(
                Violation(ViolationKind.TERMINAL_OUT_EDGES, graph.terminal)
            )
    return violations


# ==========================
#   SERIALIZACIÓN JSON
# ==========================


class NodePayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    summary: str
    type: NodeType
    chunk_indices: list[int] = Field(default_factory=list)


class EdgePayload(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    source: str = Field(..., alias="from")
    target: str = Field(..., alias="to")
    label: str = ""


class GraphPayload(BaseModel):
    """Formato JSON del grafo: {nodes, edges, terminal}."""

    model_config = ConfigDict(extra="forbid")

    nodes: list[NodePayload] = Field(default_factory=list)
    edges: list[EdgePayload] = Field(default_factory=list)
    terminal: str | None = None


def graph_to_dict(graph: ReasoningGraph) -> dict[str, Any]:
    payload = GraphPayload(
        nodes=[
            NodePayload(
                id=n.id,
                summary=n.summary,
                type=n.node_type,
                chunk_indices=list(n.chunk_indices),
            )
            for n in (graph.nodes[v] for v in graph.sorted_ids())
        ],
        edges=[
            EdgePayload(source=e.source, target=e.target, label=e.label)
            for e in graph.edges
        ],
        terminal=graph.terminal,
    )
    return payload.model_dump(mode="json", by_alias=True)


def graph_from_dict(data: dict[str, Any]) -> ReasoningGraph:
    """Reconstruye un grafo desde su JSON (sin validar invariantes)."""
    payload = GraphPayload.model_validate(data)
    return ReasoningGraph(
        nodes={
            n.id: Node(
                id=n.id,
                summary=n.summary,
                node_type=n.type,
                chunk_indices=tuple(n.chunk_indices),
            )
            for n in payload.nodes
        },
        edges=[Edge(source=e.source, target=e.target, label=e.label) for e in payload.edges],
        terminal=payload.terminal,
    )
