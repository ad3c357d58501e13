# scoring.py

"""
Puntuación de redundancia, pares de preferencia (DPO) y recompensas con
penalización de longitud (GRPO).

    R(y) = |review| / |V| + |y| / media(|y|)
    δ = max(L - L* - Δ, 0) / (L* + Δ)
    recompensa = V - λ · 1{V=1} · δ^γ
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import DivisionDomain

logger = logging.getLogger(__name__)


# ==========================
#   MODELOS DE DATOS
# ==========================


class ScoredTrajectory(BaseModel):
    """Trayectoria muestreada con su grafo ya resumido en contadores."""

    model_config = ConfigDict(frozen=True)

    trajectory_id: str
    question_id: str
    question: str = ""
    cot: str = ""
    length: int = Field(..., ge=0, description="L(y): tokens de razonamiento.")
    review_count: int = Field(0, ge=0)
    node_count: int = Field(0, ge=0)
    correct: bool
    redundancy: float = Field(0.0, ge=0)
    answer_consistency: float | None = Field(
        None, ge=0, le=1, description="Acuerdo entre las respuestas del grupo."
    )


class RewardParams(BaseModel):
    """λ (peso), Δ (margen de tolerancia, en tokens) y γ (agudeza)."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    penalty_lambda: float = Field(0.5, ge=0, alias="lambda")
    delta: float = Field(256.0, ge=0)
    gamma: float = Field(2.0, ge=1)


class RewardRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    trajectory_id: str
    question_id: str
    correct: bool
    length: int
    l_star: int | None
    delta: float
    r_length: float
    reward: float


class DpoPair(BaseModel):
    """Par (preferida, rechazada) para una misma pregunta."""

    model_config = ConfigDict(frozen=True)

    question_id: str
    question: str
    preferred_id: str
    dispreferred_id: str
    preferred_cot: str
    dispreferred_cot: str
    r_preferred: float
    r_dispreferred: float


# ==========================
#   REDUNDANCIA Y DPO
# ==========================


def redundancy_score(
    review_count: int, node_count: int, length: int, group_mean_length: float
) -> float:
    """
    Fracción de nodos review más longitud normalizada por la media del grupo.

    Raises:
        DivisionDomain: Si ``node_count`` o ``group_mean_length`` son 0.
    """
    if node_count <= 0:
        raise DivisionDomain("El grafo no tiene nodos (node_count = 0).")
    if group_mean_length <= 0:
        raise DivisionDomain("La longitud media del grupo es 0.")
    return review_count / node_count + length / group_mean_length


def build_dpo_pairs(
    group: Sequence[ScoredTrajectory],
) -> tuple[ScoredTrajectory, ScoredTrajectory] | None:
    """
    Elige (menor R, mayor R) entre las trayectorias correctas.

    Devuelve ``None`` con menos de dos correctas. Los empates se resuelven
    por el ``trajectory_id`` menor.
    """
    correct = [t for t in group if t.correct]
    if len(correct) < 2:
        return None
    preferred = min(correct, key=lambda t: (t.redundancy, t.trajectory_id))
    rest = [t for t in correct if t is not preferred]
    top = max(t.redundancy for t in rest)
    dispreferred = min(
        (t for t in rest if t.redundancy == top), key=lambda t: t.trajectory_id
    )
    return preferred, dispreferred


def to_dpo_pair(preferred: ScoredTrajectory, dispreferred: ScoredTrajectory) -> DpoPair:
    return DpoPair(
        question_id=preferred.question_id,
        question=preferred.question,
        preferred_id=preferred.trajectory_id,
        dispreferred_id=dispreferred.trajectory_id,
        preferred_cot=preferred.cot,
        dispreferred_cot=dispreferred.cot,
        r_preferred=preferred.redundancy,
        r_dispreferred=dispreferred.redundancy,
    )


# ==========================
#   RECOMPENSAS GRPO
# ==========================


def grpo_rewards(
    group: Sequence[ScoredTrajectory], params: RewardParams | None = None
) -> list[RewardRecord]:
    """
    Recompensa de corrección con penalización de longitud, por grupo.

    L* es la longitud de la trayectoria correcta más corta. Sin ninguna
    correcta todas las recompensas valen 0 y L* queda ausente.
    """
    params = params or RewardParams()
    if not group:
        return []

    lengths = np.array([t.length for t in group], dtype=np.float64)
    correct = np.array([t.correct for t in group], dtype=bool)

    if not correct.any():
        l_star: int | None = None
        delta = np.zeros_like(lengths)
        r_length = np.zeros_like(lengths)
        rewards = np.zeros_like(lengths)
    else:
        l_star = int(lengths[correct].min())
        # Suelo en 1 para L* = Δ = 0.
        denominator = max(l_star + params.delta, 1.0)
        delta = np.maximum(lengths - l_star - params.delta, 0.0) / denominator
        r_length = np.power(delta, params.gamma)
        gate = correct.astype(np.float64)
        rewards = gate - params.penalty_lambda * gate * r_length

    return [
        RewardRecord(
            trajectory_id=t.trajectory_id,
            question_id=t.question_id,
            correct=t.correct,
            length=t.length,
            l_star=l_star,
            delta=float(delta[i]),
            r_length=float(r_length[i]),
            reward=float(rewards[i]),
        )
        for i, t in enumerate(group)
    ]
