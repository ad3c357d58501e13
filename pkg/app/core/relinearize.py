# relinearize.py

"""
Re-emisión de un grafo (podado) como CoT lineal para datos de entrenamiento.

Se concatenan los textos originales de los chunks que siguen referenciados
por algún nodo superviviente, en orden cronológico. Los resúmenes de los
nodos no se usan nunca y no se suaviza el texto en los empalmes.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import DanglingChunkIndex
from app.core.graph import ReasoningGraph
from app.core.trace import ChunkedTrace
from app.core.utils import TokenCounter, token_count


class SftRecord(BaseModel):
    """Registro (pregunta, CoT podado, respuesta) listo para JSONL."""

    model_config = ConfigDict(frozen=True)

    trace_id: str
    question: str
    pruned_cot: str
    answer: str
    tokens_before: int = Field(..., ge=0)
    tokens_after: int = Field(..., ge=0)


def surviving_chunk_indices(graph: ReasoningGraph, n_chunks: int) -> list[int]:
    """
    Índices de chunk referenciados por los nodos del grafo, ordenados.

    Raises:
        DanglingChunkIndex: Si algún índice cae fuera de ``[0, n_chunks)``.
    """
    indices: set[int] = set()
    for node in graph.nodes.values():
        for i in node.chunk_indices:
            if not 0 <= i < n_chunks:
                raise DanglingChunkIndex(
                    f"El nodo {node.id} referencia el chunk {i}, "
                    f"pero la traza solo tiene {n_chunks}."
                )
            indices.add(i)
    return sorted(indices)


def relinearize(graph: ReasoningGraph, trace: ChunkedTrace) -> str:
    """Concatena, en orden de índice, los chunks que sobreviven en el grafo."""
    kept = surviving_chunk_indices(graph, trace.n)
    return "".join(trace.chunks[i].text for i in kept)


def build_sft_record(
    trace: ChunkedTrace,
    pruned: ReasoningGraph,
    counter: TokenCounter | None = None,
) -> SftRecord:
    """Empareja el CoT relinealizado con la pregunta y la respuesta originales."""
    pruned_cot = relinearize(pruned, trace)
    return SftRecord(
        trace_id=trace.trace.trace_id,
        question=trace.trace.question,
        pruned_cot=pruned_cot,
        answer=trace.trace.answer,
        tokens_before=token_count(trace.trace.cot, counter),
        tokens_after=token_count(pruned_cot, counter),
    )
