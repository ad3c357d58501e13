"""Factorías y generadores sintéticos compartidos por las pruebas."""

from __future__ import annotations

import random
from collections.abc import Iterable, Sequence

import factory
from faker import Faker

from app.core.graph import (
    TERMINAL_SUMMARY,
    Edge,
    Node,
    NodeType,
    ReasoningGraph,
    node_id_from_index,
)
from app.core.pipeline import TrajectoryRecord
from app.core.scoring import ScoredTrajectory
from app.core.trace import DEFAULT_SPLIT_TOKENS, REFLECTIVE_TRIGGERS, RawTrace

fake = Faker()

FILLER_WORDS = (
    "compute", "the", "sum", "of", "roots", "equals", "seven", "so", "x",
    "is", "positive", "note", "that", "value", "check", "ok", "hence", "2+2",
)


def synthetic_cot(rng: random.Random, steps: int | None = None) -> str:
    """CoT aleatorio: intercala triggers y texto de relleno, a veces sin prefijo."""
    steps = rng.randint(0, 12) if steps is None else steps
    parts: list[str] = []
    if rng.random() < 0.5:
        parts.append(" ".join(rng.choices(FILLER_WORDS, k=rng.randint(1, 6))) + ". ")
    for _ in range(steps):
        trigger = rng.choice(DEFAULT_SPLIT_TOKENS)
        body = " ".join(rng.choices(FILLER_WORDS, k=rng.randint(0, 8)))
        separator = rng.choice([" ", "\n", ", ", ".\n\n"])
        parts.append(f"{trigger}{separator}{body}")
        if rng.random() < 0.7:
            parts.append(rng.choice([". ", "\n", "? ", "! "]))
    return "".join(parts)


def reflective_cot(rng: random.Random, progress_steps: int = 4) -> str:
    """CoT que termina con una re-verificación reflexiva tras avanzar."""
    reflective = sorted(REFLECTIVE_TRIGGERS - {"Maybe"})
    parts = ["Okay, let me set up the equation x + 3 = 7. "]
    for _ in range(progress_steps):
        parts.append(f"So we subtract {rng.randint(1, 9)} from both sides. ")
        if rng.random() < 0.5:
            parts.append(f"{rng.choice(reflective)}, is that sign right? ")
    parts.append("Therefore x = 4. ")
    parts.append(f"{rng.choice(reflective)}, let me re-check x = 4 once more. ")
    return "".join(parts)


class RawTraceFactory(factory.Factory):
    class Meta:
        model = RawTrace

    trace_id = factory.Sequence(lambda n: f"t{n:04d}")
    question = factory.LazyFunction(lambda: fake.sentence(nb_words=8))
    cot = factory.LazyFunction(lambda: synthetic_cot(random.Random(fake.random_int())))
    answer = factory.LazyFunction(lambda: str(fake.random_int(0, 99)))
    correct = True


class TrajectoryRecordFactory(factory.Factory):
    class Meta:
        model = TrajectoryRecord

    trajectory_id = factory.Sequence(lambda n: f"y{n:04d}")
    question_id = "q1"
    question = factory.LazyFunction(lambda: fake.sentence(nb_words=6))
    cot = factory.LazyFunction(lambda: synthetic_cot(random.Random(fake.random_int())))
    answer = "4"
    correct = True


class ScoredTrajectoryFactory(factory.Factory):
    class Meta:
        model = ScoredTrajectory

    trajectory_id = factory.Sequence(lambda n: f"y{n:04d}")
    question_id = "q1"
    question = "¿Cuánto es x?"
    cot = factory.LazyAttribute(lambda o: f"cot de {o.trajectory_id}")
    length = 1000
    review_count = 0
    node_count = 1
    correct = True
    redundancy = 1.0


def make_graph(
    nodes: Iterable[tuple[str, str] | tuple[str, str, Sequence[int]]],
    edges: Iterable[tuple[str, str]] = (),
    terminal: str | None = None,
) -> ReasoningGraph:
    """
    Grafo a mano: ``nodes`` como (id, "p"|"r") o (id, tipo, índices de chunk).

    El nodo ``terminal`` recibe el resumen "final answer".
    """
    graph = ReasoningGraph(terminal=terminal)
    for entry in nodes:
        node_id, kind, *rest = entry
        indices = tuple(rest[0]) if rest else ()
        graph.nodes[node_id] = Node(
            id=node_id,
            summary=TERMINAL_SUMMARY if node_id == terminal else f"step {node_id}",
            node_type=NodeType.REVIEW if kind == "r" else NodeType.PROGRESS,
            chunk_indices=indices,
        )
    graph.edges.extend(Edge(source=s, target=t) for s, t in edges)
    return graph


def random_dag(
    rng: random.Random, max_nodes: int = 8, edge_prob: float = 0.35
) -> ReasoningGraph:
    """DAG válido aleatorio: ids A.., aristas hacia delante, terminal al final."""
    n = rng.randint(1, max_nodes)
    ids = [node_id_from_index(i) for i in range(n)]
    terminal = ids[-1]
    nodes = [
        (v, "p" if v == terminal or rng.random() < 0.5 else "r") for v in ids
    ]
    edges = []
    for j in range(1, n):
        for i in range(j):
            if ids[i] != terminal and rng.random() < edge_prob:
                edges.append((ids[i], ids[j]))
    return make_graph(nodes, edges, terminal=terminal)


def brute_descendants(graph: ReasoningGraph, v: str) -> set[str]:
    """Descendientes por recorrido exhaustivo, sin pasar por networkx."""
    succ: dict[str, list[str]] = {u: [] for u in graph.nodes}
    for e in graph.edges:
        succ[e.source].append(e.target)
    seen: set[str] = set()
    frontier = list(succ[v])
    while frontier:
        u = frontier.pop()
        if u not in seen:
            seen.add(u)
            frontier.extend(succ[u])
    return seen


def brute_depths(graph: ReasoningGraph) -> dict[str, int]:
    """Profundidad mínima de cada nodo enumerando todos los caminos desde las fuentes."""
    succ: dict[str, list[str]] = {u: [] for u in graph.nodes}
    has_parent: set[str] = set()
    for e in graph.edges:
        succ[e.source].append(e.target)
        has_parent.add(e.target)
    best: dict[str, int] = {}

    def walk(v: str, length: int) -> None:
        best[v] = min(best.get(v, length), length)
        for nxt in succ[v]:
            walk(nxt, length + 1)

    for s in graph.nodes:
        if s not in has_parent:
            walk(s, 0)
    return best
