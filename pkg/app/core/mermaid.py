# mermaid.py

"""
Serialización del grafo de razonamiento al dialecto Mermaid ``graph TD`` y
lectura de vuelta.

Dialecto emitido:
    graph TD
        A["plantear la ecuación"]:::progress
        B["comprobar el signo"]:::review
        A -->|usa la ecuación| B

Con ``with_metadata=True`` se añaden comentarios ``%% chunks`` y ``%% terminal``
para que la ida y vuelta conserve también la procedencia de los chunks.
"""

from __future__ import annotations

import re
from typing import Final

from app.core.errors import MermaidParseError
from app.core.graph import (
    Edge,
    Node,
    NodeId,
    NodeType,
    ReasoningGraph,
    is_terminal_summary,
    node_id_key,
)

HEADER: Final[str] = "graph TD"
INDENT: Final[str] = "    "

CLASS_DEFS: Final[tuple[str, ...]] = (
    "classDef progress fill:#e8f0fe,stroke:#1a73e8",
    "classDef review fill:#fdecea,stroke:#d93025",
)

_NODE_LINE = re.compile(r'^([A-Z]+)\["(.*)"\]:::(progress|review)$')
_EDGE_LINE = re.compile(r"^([A-Z]+)\s*-->\s*(?:\|([^|]*)\|)?\s*([A-Z]+)$")
_CHUNKS_LINE = re.compile(r"^%%\s*chunks\s+([A-Z]+):\s*([\d,\s]*)$")
_TERMINAL_LINE = re.compile(r"^%%\s*terminal\s+([A-Z]+)$")
_ENTITY = re.compile(r"#(quot|\d+);")


# Todo lo que ``str.splitlines`` trata como salto de línea va como entidad.
_LINE_BREAKS: Final[str] = "\n\r\x0b\x0c\x1c\x1d\x1e\x85\u2028\u2029"
_ESCAPES: Final[dict[int, str]] = {
    ord('"'): "#quot;",
    ord("|"): "#124;",
    **{ord(ch): f"#{ord(ch)};" for ch in _LINE_BREAKS},
}


def _escape(text: str) -> str:
    # '#' primero: a partir de aquí todo '#' abre una entidad.
    return text.replace("#", "#35;").translate(_ESCAPES)


def _unescape(text: str) -> str:
    def repl(match: re.Match[str]) -> str:
        code = match.group(1)
        return '"' if code == "quot" else chr(int(code))

    return _ENTITY.sub(repl, text)


def to_mermaid(graph: ReasoningGraph, with_metadata: bool = True) -> str:
    """Renderiza el grafo como texto Mermaid (nodos y aristas en orden de id)."""
    lines = [HEADER]
    ordered = graph.sorted_ids()
    for node_id in ordered:
        node = graph.nodes[node_id]
        lines.append(
            f'{INDENT}{node_id}["{_escape(node.summary)}"]:::{node.node_type.value}'
        )

    for edge in sorted(
        graph.edges, key=lambda e: (node_id_key(e.source), node_id_key(e.target))
    ):
        if edge.label:
            lines.append(f"{INDENT}{edge.source} -->|{_escape(edge.label)}| {edge.target}")
        else:
            lines.append(f"{INDENT}{edge.source} --> {edge.target}")

    if with_metadata:
        for node_id in ordered:
            indices = graph.nodes[node_id].chunk_indices
            if indices:
                joined = ",".join(str(i) for i in indices)
                lines.append(f"{INDENT}%% chunks {node_id}: {joined}")
        if graph.terminal is not None:
            lines.append(f"{INDENT}%% terminal {graph.terminal}")

    if ordered:
        lines.extend(f"{INDENT}{class_def}" for class_def in CLASS_DEFS)
    return "\n".join(lines) + "\n"


def from_mermaid(text: str) -> ReasoningGraph:
    """
    Lee un grafo en el dialecto de ``to_mermaid``.

    Sin comentarios de metadatos, el terminal se deduce por el nombre
    "final answer".

    Raises:
        MermaidParseError: Con el número de línea (1-based) del problema.
    """
    graph = ReasoningGraph()
    chunk_map: dict[NodeId, tuple[tuple[int, ...], int]] = {}
    terminal: NodeId | None = None
    terminal_line = 0
    header_seen = False

    # Solo "\n" separa líneas; el resto de saltos viajan escapados.
    for line_number, raw_line in enumerate(text.split("\n"), 1):
        line = raw_line.strip()
        if not line:
            continue
        if not header_seen:
            if line != HEADER:
                raise MermaidParseError(line_number, f"se esperaba '{HEADER}'")
            header_seen = True
            continue
        if line.startswith("classDef "):
            continue

        if match := _CHUNKS_LINE.match(line):
            node_id, raw_indices = match.groups()
            try:
                indices = tuple(int(p) for p in raw_indices.split(",") if p.strip())
            except ValueError as e:
                raise MermaidParseError(line_number, f"índices inválidos: {e}") from e
            chunk_map[node_id] = (indices, line_number)
            continue
        if match := _TERMINAL_LINE.match(line):
            terminal, terminal_line = match.group(1), line_number
            continue
        if line.startswith("%%"):
            continue

        if match := _NODE_LINE.match(line):
            node_id, summary, node_type = match.groups()
            if node_id in graph.nodes:
                raise MermaidParseError(line_number, f"nodo {node_id} duplicado")
            graph.nodes[node_id] = Node(
                id=node_id, summary=_unescape(summary), node_type=NodeType(node_type)
            )
            continue
        if match := _EDGE_LINE.match(line):
            source, label, target = match.groups()
            for endpoint in (source, target):
                if endpoint not in graph.nodes:
                    raise MermaidParseError(
                        line_number, f"arista hacia nodo no declarado {endpoint}"
                    )
            graph.edges.append(
                Edge(source=source, target=target, label=_unescape(label or ""))
            )
            continue

        raise MermaidParseError(line_number, f"línea no reconocida: {line!r}")

    if not header_seen:
        raise MermaidParseError(1, f"se esperaba '{HEADER}'")

    for node_id, (indices, chunks_line) in chunk_map.items():
        node = graph.nodes.get(node_id)
        if node is None:
            raise MermaidParseError(
                chunks_line, f"metadatos de chunks para nodo inexistente {node_id}"
            )
        graph.nodes[node_id] = Node(
            id=node.id, summary=node.summary, node_type=node.node_type, chunk_indices=indices
        )

    if terminal is not None:
        if terminal not in graph.nodes:
            raise MermaidParseError(terminal_line, f"terminal inexistente {terminal}")
        graph.terminal = terminal
    else:
        graph.terminal = next(
            (v for v in graph.sorted_ids() if is_terminal_summary(graph.nodes[v].summary)),
            None,
        )
    return graph
