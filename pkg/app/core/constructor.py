# constructor.py

"""
Construcción iterativa del grafo de razonamiento.

Para cada chunk se consulta un oráculo de operaciones con (grafo actual en
Mermaid, texto del chunk); el oráculo responde un JSON estricto con una
decisión Insert o Merge que se valida y se aplica sobre el grafo.
"""

from __future__ import annotations

import json
import logging
import re
from enum import StrEnum
from typing import Any, Final, Protocol

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.core.errors import (
    BackendError,
    ConstructionError,
    GraphError,
    InconsistentDecision,
    InvalidGraph,
    MalformedJson,
    MergeConstraintViolation,
    OracleExhausted,
    OracleUnavailable,
    SchemaViolation,
    UnknownNode,
)
from app.core.graph import (
    TERMINAL_SUMMARY,
    Edge,
    Node,
    NodeId,
    NodeType,
    ReasoningGraph,
    insert_node,
    is_terminal_summary,
    is_valid_node_id,
    merge_into,
    next_node_id,
    node_id_key,
    validate,
)
from app.core.mermaid import from_mermaid, to_mermaid
from app.core.trace import Chunk, ChunkedTrace, is_reflective
from app.core.utils import first_words

logger = logging.getLogger(__name__)

SUMMARY_WORDS: Final[int] = 12
EMPTY_STEP_SUMMARY: Final[str] = "(empty step)"
FOLLOW_LABEL: Final[str] = "follows"
CONCLUDE_LABEL: Final[str] = "concludes"


# ==========================
#   MODELOS DE DATOS
# ==========================


class Decision(StrEnum):
    INSERT = "insert"
    MERGE = "merge"


class OracleBackend(StrEnum):
    LLM = "llm"
    HEURISTIC = "heuristic"


class ExhaustionPolicy(StrEnum):
    FALLBACK_INSERT = "fallback_insert"
    FAIL = "fail"


class OracleConfig(BaseModel):
    """Política de reintentos del oráculo."""

    model_config = ConfigDict(frozen=True)

    backend: OracleBackend = OracleBackend.HEURISTIC
    max_retries: int = Field(2, ge=0)
    on_exhausted: ExhaustionPolicy = ExhaustionPolicy.FALLBACK_INSERT


class NewNodeDraft(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    description: str
    type: NodeType


class OpEdge(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: str
    target: str
    label: str = ""


class GraphOp(BaseModel):
    """Decisión del oráculo para un chunk (Insert o Merge)."""

    model_config = ConfigDict(frozen=True)

    decision: Decision
    target_node: str | None = None
    new_node: NewNodeDraft | None = None
    edges: tuple[OpEdge, ...] = ()
    updated_node_description: str | None = None
    # En un Merge el oráculo puede declarar el tipo del contenido fusionado.
    declared_type: NodeType | None = None


# Formato de cable, campo a campo. Los opcionales vacíos equivalen a ausentes.
class _WireNewNode(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = ""
    description: str = ""
    type: str = ""


class _WireEdge(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    source: str = Field(..., alias="from")
    target: str = Field(..., alias="to")
    label: str = ""


class _WireGraphOp(BaseModel):
    model_config = ConfigDict(extra="forbid")

    decision: str
    target_node: str = ""
    new_node: _WireNewNode | None = None
    edges: list[_WireEdge] = Field(default_factory=list)
    updated_node_description: str = ""


class Oracle(Protocol):
    """f_L: dado el grafo (Mermaid) y el chunk, devuelve JSON crudo."""

    def __call__(
        self, graph_mermaid: str, chunk: Chunk, feedback: str | None = None
    ) -> str: ...


# ==========================
#   PARSEO
# ==========================

_FENCE = re.compile(r"```(?:json)?\s*([\s\S]*?)\s*```")


def strip_fences(raw: str) -> str:
    """Quita las vallas de código Markdown que rodean al JSON, si las hay."""
    match = _FENCE.search(raw)
    return match.group(1) if match else raw.strip()


def _field_path(loc: tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc) or "root"


def parse_graph_op(raw: str) -> GraphOp:
    """
    Parsea estrictamente la respuesta del oráculo.

    Raises:
        MalformedJson: Si no es JSON.
        SchemaViolation: Campo desconocido, ausente o con valor no permitido.
        InconsistentDecision: Campos que no corresponden a la decisión.
    """
    try:
        data = json.loads(strip_fences(raw))
    except json.JSONDecodeError as e:
        raise MalformedJson(f"Respuesta no es JSON válido: {e}") from e
    if not isinstance(data, dict):
        raise SchemaViolation("root", "se esperaba un objeto JSON")

    try:
        wire = _WireGraphOp.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise SchemaViolation(_field_path(first["loc"]), first["msg"]) from e

    try:
        decision = Decision(wire.decision.strip().lower())
    except ValueError as e:
        raise SchemaViolation(
            "decision", f"{wire.decision!r} no es Insert ni Merge"
        ) from e

    node_draft = wire.new_node or _WireNewNode()
    declared_type: NodeType | None = None
    if node_draft.type.strip():
        try:
            declared_type = NodeType(node_draft.type.strip().lower())
        except ValueError as e:
            raise SchemaViolation(
                "new_node.type", f"{node_draft.type!r} no es progress ni review"
            ) from e

    edges = tuple(
        OpEdge(source=e.source.strip(), target=e.target.strip(), label=e.label.strip())
        for e in wire.edges
    )
    for i, edge in enumerate(edges):
        for name, value in (("from", edge.source), ("to", edge.target)):
            if not is_valid_node_id(value):
                raise SchemaViolation(f"edges.{i}.{name}", f"id inválido {value!r}")

    target = wire.target_node.strip()
    updated = wire.updated_node_description.strip()

    if decision is Decision.INSERT:
        if target or updated:
            raise InconsistentDecision(
                "Un Insert no admite target_node ni updated_node_description."
            )
        node_id = node_draft.id.strip()
        description = node_draft.description.strip()
        if not node_id:
            raise SchemaViolation("new_node.id", "obligatorio en un Insert")
        if not is_valid_node_id(node_id):
            raise SchemaViolation("new_node.id", f"id inválido {node_id!r}")
        if not description:
            raise SchemaViolation("new_node.description", "obligatorio en un Insert")
        if declared_type is None:
            raise SchemaViolation("new_node.type", "obligatorio en un Insert")
        return GraphOp(
            decision=decision,
            new_node=NewNodeDraft(id=node_id, description=description, type=declared_type),
            edges=edges,
            declared_type=declared_type,
        )

    if node_draft.id.strip() or node_draft.description.strip():
        raise InconsistentDecision("Un Merge no puede declarar un nodo nuevo.")
    if not target:
        raise SchemaViolation("target_node", "obligatorio en un Merge")
    if not is_valid_node_id(target):
        raise SchemaViolation("target_node", f"id inválido {target!r}")
    stray = [e for e in edges if e.target != target]
    if stray:
        raise InconsistentDecision(
            f"Las aristas de un Merge deben llegar a {target}, no a {stray[0].target}."
        )
    if not updated:
        raise SchemaViolation("updated_node_description", "obligatorio en un Merge")
    return GraphOp(
        decision=decision,
        target_node=target,
        edges=edges,
        updated_node_description=updated,
        declared_type=declared_type,
    )


def serialize_graph_op(op: GraphOp) -> str:
    """Serializa una operación en el formato JSON estricto del oráculo."""
    new_node = op.new_node
    payload = {
        "decision": "Insert" if op.decision is Decision.INSERT else "Merge",
        "target_node": op.target_node or "",
        "new_node": {
            "id": new_node.id if new_node else "",
            "description": new_node.description if new_node else "",
            "type": op.declared_type.value if op.declared_type else "",
        },
        "edges": [{"from": e.source, "to": e.target, "label": e.label} for e in op.edges],
        "updated_node_description": op.updated_node_description or "",
    }
    return json.dumps(payload, ensure_ascii=False)


# ==========================
#   APLICACIÓN
# ==========================


def chunk_type_hint(chunk: Chunk, declared: NodeType | None = None) -> NodeType:
    """Tipo estimado del chunk: review si su trigger es reflexivo, si no el declarado."""
    if is_reflective(chunk):
        return NodeType.REVIEW
    return declared or NodeType.PROGRESS


def apply_op(
    graph: ReasoningGraph, op: GraphOp, chunk: Chunk, chunk_type_hint: NodeType
) -> ReasoningGraph:
    """
    Aplica una operación parseada sobre el grafo.

    Raises:
        MergeConstraintViolation: Revisión fusionada en un nodo de progreso.
        GraphError: Cualquier error de ``insert_node``/``merge_into``, sin cambios.
    """
    if op.decision is Decision.INSERT:
        assert op.new_node is not None
        node_type = op.new_node.type
        if is_terminal_summary(op.new_node.description):
            # El terminal es siempre progress: nunca debe ser podable.
            node_type = NodeType.PROGRESS
        node = Node(
            id=op.new_node.id,
            summary=op.new_node.description,
            node_type=node_type,
            chunk_indices=(chunk.index,),
        )
        incoming = [Edge(source=e.source, target=e.target, label=e.label) for e in op.edges]
        return insert_node(graph, node, incoming)

    assert op.target_node is not None
    target = graph.nodes.get(op.target_node)
    if target is None:
        raise UnknownNode(f"No existe el nodo {op.target_node}.")
    if chunk_type_hint is NodeType.REVIEW and target.node_type is NodeType.PROGRESS:
        raise MergeConstraintViolation(
            f"El chunk {chunk.index} es de revisión y no puede fusionarse "
            f"en el nodo de progreso {target.id}."
        )
    incoming = [Edge(source=e.source, target=e.target, label=e.label) for e in op.edges]
    return merge_into(
        graph, op.target_node, op.updated_node_description or "", chunk.index, incoming
    )


def _last_content_node(graph: ReasoningGraph) -> NodeId | None:
    """Nodo de mayor id que no es el terminal."""
    candidates = [v for v in graph.nodes if v != graph.terminal]
    return max(candidates, key=node_id_key) if candidates else None


def fallback_insert(graph: ReasoningGraph, chunk: Chunk) -> ReasoningGraph:
    """Inserta el chunk como nodo nuevo resumido por sus primeras palabras."""
    new_id = next_node_id(graph.max_id())
    summary = first_words(chunk.text, SUMMARY_WORDS) or EMPTY_STEP_SUMMARY
    if is_terminal_summary(summary):
        summary = f"{summary} (step)"
    node_type = chunk_type_hint(chunk)
    predecessor = _last_content_node(graph)
    incoming = (
        [Edge(source=predecessor, target=new_id, label=FOLLOW_LABEL)]
        if predecessor
        else []
    )
    node = Node(
        id=new_id,
        summary=summary,
        node_type=node_type,
        chunk_indices=(chunk.index,),
    )
    return insert_node(graph, node, incoming)


def ensure_terminal(graph: ReasoningGraph) -> ReasoningGraph:
    """Añade el nodo terminal "final answer" si el oráculo no lo produjo."""
    if graph.terminal is not None:
        return graph
    predecessor = _last_content_node(graph)
    terminal_id = next_node_id(graph.max_id())
    logger.debug(f"Añadiendo terminal {terminal_id} tras {predecessor}")
    incoming = (
        [Edge(source=predecessor, target=terminal_id, label=CONCLUDE_LABEL)]
        if predecessor
        else []
    )
    node = Node(id=terminal_id, summary=TERMINAL_SUMMARY, node_type=NodeType.PROGRESS)
    return insert_node(graph, node, incoming)


def build_graph(
    trace: ChunkedTrace, oracle: Oracle, config: OracleConfig | None = None
) -> ReasoningGraph:
    """
    Convierte una traza troceada en un DAG, chunk a chunk.

    Ante un fallo de parseo o de aplicación se reintenta hasta
    ``max_retries`` veces, añadiendo el error a la consulta. Agotados los
    reintentos se aplica la política configurada.

    Raises:
        OracleExhausted / OracleUnavailable: Con ``on_exhausted=fail``.
        InvalidGraph: Si el grafo final no valida (no debería ocurrir).
    """
    config = config or OracleConfig()
    if not trace.chunks:
        raise ConstructionError("La traza no tiene chunks.")

    graph = ReasoningGraph()
    for chunk in trace.chunks:
        feedback: str | None = None
        last_error: Exception | None = None
        applied = False
        for attempt in range(config.max_retries + 1):
            try:
                raw = oracle(to_mermaid(graph, with_metadata=False), chunk, feedback)
                op = parse_graph_op(raw)
                hint = chunk_type_hint(chunk, op.declared_type)
                graph = apply_op(graph, op, chunk, hint)
                applied = True
                break
            except (ConstructionError, GraphError, BackendError) as e:
                last_error = e
                feedback = str(e)
                logger.warning(
                    f"Traza {trace.trace.trace_id}, chunk {chunk.index}: "
                    f"intento {attempt + 1}/{config.max_retries + 1} fallido ({e})"
                )
        if applied:
            continue

        if config.on_exhausted is ExhaustionPolicy.FAIL:
            error_cls = (
                OracleUnavailable if isinstance(last_error, BackendError) else OracleExhausted
            )
            raise error_cls(chunk.index, str(last_error)) from last_error
        logger.warning(
            f"Traza {trace.trace.trace_id}: inserción de respaldo para el chunk {chunk.index}"
        )
        graph = fallback_insert(graph, chunk)

    graph = ensure_terminal(graph)
    violations = validate(graph)
    if violations:
        raise InvalidGraph(f"Grafo inválido tras la construcción: {violations}")
    return graph


# ==========================
#   ORÁCULO HEURÍSTICO
# ==========================


def heuristic_oracle(
    graph_mermaid: str, chunk: Chunk, feedback: str | None = None
) -> str:
    """
    Oráculo determinista sin red.

    Siempre inserta: review si el trigger del chunk es reflexivo, progress en
    otro caso; resumen con las primeras palabras y una arista desde el nodo
    de mayor id (ninguna para el primer chunk).
    """
    graph = from_mermaid(graph_mermaid)
    new_id = next_node_id(graph.max_id())
    summary = first_words(chunk.text, SUMMARY_WORDS) or EMPTY_STEP_SUMMARY
    if is_terminal_summary(summary):
        summary = f"{summary} (step)"
    node_type = NodeType.REVIEW if is_reflective(chunk) else NodeType.PROGRESS
    predecessor = _last_content_node(graph)
    op = GraphOp(
        decision=Decision.INSERT,
        new_node=NewNodeDraft(id=new_id, description=summary, type=node_type),
        edges=(
            (OpEdge(source=predecessor, target=new_id, label=FOLLOW_LABEL),)
            if predecessor
            else ()
        ),
        declared_type=node_type,
    )
    return serialize_graph_op(op)
