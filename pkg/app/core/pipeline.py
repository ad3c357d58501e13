# pipeline.py

"""
Registros JSONL del pipeline y etapas que los transforman.

Cada etapa recibe el registro de la etapa anterior y arrastra la traza y sus
chunks, de modo que encadenar las etapas a través de archivos produce
exactamente los mismos registros SFT que la versión fusionada ``sft_record``.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Generic, TypeVar

from pydantic import BaseModel, ConfigDict, Field

from app.core.constructor import Oracle, OracleConfig, build_graph
from app.core.errors import DivisionDomain, RecordError
from app.core.graph import graph_from_dict, graph_to_dict, review_count
from app.core.pruner import PruneParams, prune
from app.core.relinearize import SftRecord, build_sft_record
from app.core.scoring import ScoredTrajectory, redundancy_score
from app.core.stats import answer_consistency
from app.core.trace import (
    DEFAULT_SPLIT_TOKENS,
    Chunk,
    ChunkedTrace,
    RawTrace,
    chunk_trace,
)
from app.core.utils import TokenCounter, token_count

logger = logging.getLogger(__name__)

In = TypeVar("In")
Out = TypeVar("Out")


# ==========================
#   REGISTROS
# ==========================


class ChunkPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=0)
    text: str
    trigger: str | None = None


class ChunkRecord(BaseModel):
    """Traza cruda más su partición en chunks."""

    trace: RawTrace
    chunks: list[ChunkPayload]

    @property
    def trace_id(self) -> str:
        return self.trace.trace_id

    def to_chunked(self) -> ChunkedTrace:
        """
        Reconstruye la traza troceada.

        Raises:
            RecordError: Si los chunks no reproducen el CoT o sus índices no son 0..n-1.
        """
        chunks = tuple(Chunk(c.index, c.text, c.trigger) for c in self.chunks)
        if [c.index for c in chunks] != list(range(len(chunks))):
            raise RecordError(f"Traza {self.trace_id}: índices de chunk no consecutivos.")
        if "".join(c.text for c in chunks) != self.trace.cot:
            raise RecordError(f"Traza {self.trace_id}: los chunks no reproducen el CoT.")
        return ChunkedTrace(trace=self.trace, chunks=chunks)


class GraphRecord(BaseModel):
    trace_id: str
    trace: RawTrace | None = None
    chunks: list[ChunkPayload] | None = None
    graph: dict[str, Any]


class PrunedRecord(BaseModel):
    trace_id: str
    trace: RawTrace | None = None
    chunks: list[ChunkPayload] | None = None
    graph: dict[str, Any]
    pruned_graph: dict[str, Any]
    report: dict[str, Any]


class TrajectoryRecord(BaseModel):
    """Trayectoria muestreada para una pregunta, con veredicto externo."""

    model_config = ConfigDict(extra="ignore")

    trajectory_id: str = Field(..., min_length=1)
    question_id: str = Field(..., min_length=1)
    question: str = ""
    cot: str = ""
    answer: str = ""
    correct: bool
    length: int | None = Field(None, ge=0)

    def resolved_length(self, counter: TokenCounter | None = None) -> int:
        return self.length if self.length is not None else token_count(self.cot, counter)


def _payloads(chunks: Sequence[Chunk]) -> list[ChunkPayload]:
    return [ChunkPayload(index=c.index, text=c.text, trigger=c.trigger) for c in chunks]


def dump_record(record: BaseModel) -> dict[str, Any]:
    return record.model_dump(mode="json")


# ==========================
#   EJECUCIÓN POR REGISTRO
# ==========================


@dataclass(frozen=True, slots=True)
class RecordFailure:
    index: int
    record_id: str
    error: str

    def to_dict(self) -> dict[str, Any]:
        return {"index": self.index, "record_id": self.record_id, "error": self.error}


@dataclass
class RunResult(Generic[Out]):
    outputs: list[Out] = field(default_factory=list)
    failures: list[RecordFailure] = field(default_factory=list)


def _record_id(item: Any, index: int) -> str:
    if isinstance(item, dict):
        for key in ("trace_id", "trajectory_id", "question_id"):
            value = item.get(key)
            if value is None and isinstance(item.get("trace"), dict):
                value = item["trace"].get(key)
            if value:
                return str(value)
    return f"#{index}"


def run_records(
    items: Sequence[In],
    fn: Callable[[In], Out],
    jobs: int = 1,
    id_of: Callable[[In, int], str] = _record_id,
) -> RunResult[Out]:
    """
    Aplica ``fn`` a cada registro con ``jobs`` hilos.

    El orden de salida es el de entrada. Las excepciones por registro se
    capturan como fallos; la política de qué hacer con ellos es del llamador.
    """

    def safe(pair: tuple[int, In]) -> tuple[Out | None, RecordFailure | None]:
        index, item = pair
        try:
            return fn(item), None
        except Exception as e:  # noqa: BLE001
            record_id = id_of(item, index)
            logger.error(f"Registro {record_id} fallido: {type(e).__name__}: {e}")
            return None, RecordFailure(index, record_id, f"{type(e).__name__}: {e}")

    result: RunResult[Out] = RunResult()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for output, failure in pool.map(safe, enumerate(items)):
            if failure is not None:
                result.failures.append(failure)
            else:
                result.outputs.append(output)  # type: ignore[arg-type]
    return result


# ==========================
#   ETAPAS
# ==========================


def chunk_record(
    trace: RawTrace, triggers: Sequence[str] = DEFAULT_SPLIT_TOKENS
) -> ChunkRecord:
    chunked = chunk_trace(trace, triggers)
    return ChunkRecord(trace=trace, chunks=_payloads(chunked.chunks))


def graph_record(
    record: ChunkRecord, oracle: Oracle, config: OracleConfig | None = None
) -> GraphRecord:
    graph = build_graph(record.to_chunked(), oracle, config)
    return GraphRecord(
        trace_id=record.trace_id,
        trace=record.trace,
        chunks=record.chunks,
        graph=graph_to_dict(graph),
    )


def prune_record(record: GraphRecord, params: PruneParams | None = None) -> PrunedRecord:
    pruned, report = prune(graph_from_dict(record.graph), params)
    return PrunedRecord(
        trace_id=record.trace_id,
        trace=record.trace,
        chunks=record.chunks,
        graph=record.graph,
        pruned_graph=graph_to_dict(pruned),
        report=report.to_dict(),
    )


def pruned_chunked_trace(
    record: PrunedRecord, triggers: Sequence[str] = DEFAULT_SPLIT_TOKENS
) -> ChunkedTrace:
    """Traza troceada de un registro podado (re-trocea si faltan los chunks)."""
    if record.trace is None:
        raise RecordError(f"Traza {record.trace_id}: el registro no incluye la traza.")
    if record.chunks is None:
        return chunk_trace(record.trace, triggers)
    return ChunkRecord(trace=record.trace, chunks=record.chunks).to_chunked()


def relinearize_record(
    record: PrunedRecord,
    triggers: Sequence[str] = DEFAULT_SPLIT_TOKENS,
    counter: TokenCounter | None = None,
) -> SftRecord:
    chunked = pruned_chunked_trace(record, triggers)
    return build_sft_record(chunked, graph_from_dict(record.pruned_graph), counter)


def sft_record(
    trace: RawTrace,
    oracle: Oracle,
    config: OracleConfig | None = None,
    params: PruneParams | None = None,
    triggers: Sequence[str] = DEFAULT_SPLIT_TOKENS,
    counter: TokenCounter | None = None,
) -> SftRecord:
    """chunk -> build-graph -> prune -> relinearize, en memoria."""
    chunks = chunk_record(trace, triggers)
    graphed = graph_record(chunks, oracle, config)
    pruned = prune_record(graphed, params)
    return relinearize_record(pruned, triggers, counter)


# ==========================
#   TRAYECTORIAS
# ==========================


def group_by_question(items: Iterable[In], key: Callable[[In], str]) -> dict[str, list[In]]:
    """Agrupa conservando el orden de primera aparición."""
    groups: dict[str, list[In]] = {}
    for item in items:
        groups.setdefault(key(item), []).append(item)
    return groups


@dataclass(frozen=True, slots=True)
class _GraphCounts:
    position: int
    record: TrajectoryRecord
    review_count: int
    node_count: int


def score_trajectories(
    records: Sequence[TrajectoryRecord],
    oracle: Oracle,
    config: OracleConfig | None = None,
    triggers: Sequence[str] = DEFAULT_SPLIT_TOKENS,
    counter: TokenCounter | None = None,
    jobs: int = 1,
) -> RunResult[ScoredTrajectory]:
    """
    Construye el grafo de cada trayectoria y calcula su redundancia R(y).

    La media de longitud y la consistencia de respuestas se calculan sobre
    todas las trayectorias de la pregunta, correctas o no, incluidas las que
    fallen al construir su grafo.
    """
    lengths = [record.resolved_length(counter) for record in records]
    groups = group_by_question(range(len(records)), lambda i: records[i].question_id)
    means = {q: sum(lengths[i] for i in g) / len(g) for q, g in groups.items()}
    consistency = {
        q: answer_consistency(records[i].answer for i in g) for q, g in groups.items()
    }

    def count(item: tuple[int, TrajectoryRecord]) -> _GraphCounts:
        position, record = item
        trace = RawTrace(
            trace_id=record.trajectory_id,
            question=record.question,
            cot=record.cot,
            answer=record.answer,
            correct=record.correct,
        )
        graph = build_graph(chunk_trace(trace, triggers), oracle, config)
        return _GraphCounts(
            position=position,
            record=record,
            review_count=review_count(graph),
            node_count=len(graph.nodes),
        )

    counted = run_records(
        list(enumerate(records)), count, jobs, id_of=lambda item, _: item[1].trajectory_id
    )
    result: RunResult[ScoredTrajectory] = RunResult(failures=counted.failures)

    for c in counted.outputs:
        question_id = c.record.question_id
        length = lengths[c.position]
        try:
            redundancy = redundancy_score(
                c.review_count, c.node_count, length, means[question_id]
            )
        except DivisionDomain as e:
            logger.error(f"Trayectoria {c.record.trajectory_id} ({question_id}): {e}")
            result.failures.append(
                RecordFailure(c.position, c.record.trajectory_id, f"DivisionDomain: {e}")
            )
            continue
        result.outputs.append(
            ScoredTrajectory(
                trajectory_id=c.record.trajectory_id,
                question_id=question_id,
                question=c.record.question,
                cot=c.record.cot,
                length=length,
                review_count=c.review_count,
                node_count=c.node_count,
                correct=c.record.correct,
                redundancy=redundancy,
                answer_consistency=consistency[question_id],
            )
        )
    result.failures.sort(key=lambda f: f.index)
    return result
