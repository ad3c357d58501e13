# stats.py

"""
Estadísticas del corpus (completo frente a podado), frecuencia de palabras
de reflexión y métricas de evaluación de etiquetas de nodo.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Final

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.core.errors import EmptyDataset, LengthMismatch, NoTerminal
from app.core.graph import NodeType, ReasoningGraph, main_path_nodes, review_count
from app.core.utils import TokenCounter, token_count

logger = logging.getLogger(__name__)

DEFAULT_KEYWORDS: Final[tuple[str, ...]] = (
    "wait",
    "but",
    "hmm",
    "maybe",
    "check",
    "therefore",
)


# ==========================
#   ESTADÍSTICAS DEL CORPUS
# ==========================


@dataclass(frozen=True, slots=True)
class StatsSample:
    """Una traza en sus dos variantes: grafo y CoT completos y podados."""

    full_graph: ReasoningGraph
    pruned_graph: ReasoningGraph
    full_cot: str
    pruned_cot: str


class DatasetStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    samples: int
    avg_nodes_full: float
    avg_nodes_pruned: float
    avg_review_full: float
    avg_review_pruned: float
    avg_tokens_full: float
    avg_tokens_pruned: float
    review_nodes_removed: int
    review_removed_fraction: float
    main_path_fraction_full: float
    main_path_fraction_pruned: float
    keywords_full: dict[str, float]
    keywords_pruned: dict[str, float]
    total_cost: float | None = None
    cost_is_estimated: bool = False


def main_path_fraction(graph: ReasoningGraph) -> float:
    """Proporción de nodos que están en algún camino fuente -> terminal."""
    if not graph.nodes:
        return 0.0
    try:
        return len(main_path_nodes(graph)) / len(graph.nodes)
    except NoTerminal:
        return 0.0


def dataset_stats(
    samples: Sequence[StatsSample],
    counter: TokenCounter | None = None,
    keywords: Sequence[str] = DEFAULT_KEYWORDS,
    total_cost: float | None = None,
    cost_is_estimated: bool = False,
) -> DatasetStats:
    """
    Resume el corpus completo frente al podado.

    Raises:
        EmptyDataset: Si no hay muestras.
    """
    if not samples:
        raise EmptyDataset("No hay muestras para calcular estadísticas.")

    nodes_full = np.array([len(s.full_graph.nodes) for s in samples], dtype=np.float64)
    nodes_pruned = np.array([len(s.pruned_graph.nodes) for s in samples], dtype=np.float64)
    review_full = np.array([review_count(s.full_graph) for s in samples], dtype=np.float64)
    review_pruned = np.array(
        [review_count(s.pruned_graph) for s in samples], dtype=np.float64
    )
    tokens_full = np.array([token_count(s.full_cot, counter) for s in samples])
    tokens_pruned = np.array([token_count(s.pruned_cot, counter) for s in samples])

    removed = int(review_full.sum() - review_pruned.sum())
    total_review = float(review_full.sum())

    return DatasetStats(
        samples=len(samples),
        avg_nodes_full=float(nodes_full.mean()),
        avg_nodes_pruned=float(nodes_pruned.mean()),
        avg_review_full=float(review_full.mean()),
        avg_review_pruned=float(review_pruned.mean()),
        avg_tokens_full=float(tokens_full.mean()),
        avg_tokens_pruned=float(tokens_pruned.mean()),
        review_nodes_removed=removed,
        review_removed_fraction=removed / total_review if total_review else 0.0,
        main_path_fraction_full=float(
            np.mean([main_path_fraction(s.full_graph) for s in samples])
        ),
        main_path_fraction_pruned=float(
            np.mean([main_path_fraction(s.pruned_graph) for s in samples])
        ),
        keywords_full=keyword_frequencies([s.full_cot for s in samples], keywords),
        keywords_pruned=keyword_frequencies([s.pruned_cot for s in samples], keywords),
        total_cost=total_cost,
        cost_is_estimated=cost_is_estimated,
    )


# ==========================
#   PALABRAS CLAVE
# ==========================


def keyword_frequencies(
    responses: Sequence[str], keywords: Sequence[str] = DEFAULT_KEYWORDS
) -> dict[str, float]:
    """
    Media de apariciones por respuesta de cada palabra clave.

    Sin distinguir mayúsculas y solo palabras completas ("thereforeX" no cuenta).
    """
    if not keywords:
        raise ValueError("La lista de palabras clave no puede estar vacía.")
    result: dict[str, float] = {}
    for keyword in keywords:
        pattern = re.compile(rf"(?<!\w){re.escape(keyword)}(?!\w)", re.IGNORECASE)
        if not responses:
            result[keyword] = 0.0
            continue
        counts = [len(pattern.findall(text)) for text in responses]
        result[keyword] = float(np.mean(counts))
    return result


# ==========================
#   MÉTRICAS DE ETIQUETAS
# ==========================


def f1_score(precision: float, recall: float) -> float:
    """Media armónica de precisión y exhaustividad (0 si ambas son 0)."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


class ClassMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: float
    recall: float
    f1: float
    support: int
    # Denominador nulo: el valor se informa como 0.
    precision_undefined: bool = False
    recall_undefined: bool = False


class LabelMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    total: int
    per_class: dict[NodeType, ClassMetrics]
    accuracy: float
    atomicity_valid_rate: float | None = None
    valid_node_rate: float | None = None


def label_metrics(
    predicted: Sequence[NodeType],
    gold: Sequence[NodeType],
    atomic: Sequence[bool] | None = None,
) -> LabelMetrics:
    """
    Precisión, exhaustividad y F1 por clase, tomando cada clase como positiva.

    Con ``atomic`` (paralela a ``gold``) se calculan también la tasa de nodos
    atómicos y la de nodos válidos (tipo correcto y atómicos).

    Raises:
        LengthMismatch: Si las listas no tienen la misma longitud.
    """
    if len(predicted) != len(gold):
        raise LengthMismatch(
            f"predicted tiene {len(predicted)} etiquetas y gold {len(gold)}."
        )
    if atomic is not None and len(atomic) != len(gold):
        raise LengthMismatch(f"atomic tiene {len(atomic)} filas y gold {len(gold)}.")

    pairs = list(zip(predicted, gold, strict=True))
    per_class: dict[NodeType, ClassMetrics] = {}
    for cls in NodeType:
        tp = sum(1 for p, g in pairs if p == cls and g == cls)
        fp = sum(1 for p, g in pairs if p == cls and g != cls)
        fn = sum(1 for p, g in pairs if p != cls and g == cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        per_class[cls] = ClassMetrics(
            precision=precision,
            recall=recall,
            f1=f1_score(precision, recall),
            support=tp + fn,
            precision_undefined=tp + fp == 0,
            recall_undefined=tp + fn == 0,
        )

    total = len(pairs)
    hits = [p == g for p, g in pairs]
    accuracy = sum(hits) / total if total else 0.0
    atomicity_rate: float | None = None
    valid_rate: float | None = None
    if atomic is not None:
        atomicity_rate = sum(atomic) / total if total else 0.0
        valid = sum(1 for hit, ok in zip(hits, atomic, strict=True) if hit and ok)
        valid_rate = valid / total if total else 0.0

    return LabelMetrics(
        total=total,
        per_class=per_class,
        accuracy=accuracy,
        atomicity_valid_rate=atomicity_rate,
        valid_node_rate=valid_rate,
    )


def answer_consistency(answers: Iterable[str]) -> float:
    """
    Acuerdo entre N respuestas muestreadas: suma de (n_y / N)^2 sobre cada
    respuesta distinta y. Vale 1 si todas coinciden.

    Raises:
        EmptyDataset: Si no hay respuestas.
    """
    counts = Counter(a.strip() for a in answers)
    total = sum(counts.values())
    if total == 0:
        raise EmptyDataset("No hay respuestas para medir la consistencia.")
    return sum((n / total) ** 2 for n in counts.values())
