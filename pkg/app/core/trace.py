# trace.py

"""
Modelo de trazas de razonamiento y troceado en chunks por tokens disparadores.

Una traza cruda (pregunta, CoT, respuesta, veredicto opcional) se divide en
chunks contiguos: cada chunk, salvo quizá el primero, empieza con un trigger
como "Wait" o "Therefore". La partición es sin pérdida: concatenar los chunks
reproduce el CoT byte a byte.
"""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import Final

from pydantic import BaseModel, ConfigDict, Field

# Lista exacta de tokens de corte, en el orden original.
DEFAULT_SPLIT_TOKENS: Final[tuple[str, ...]] = (
    "Wait",
    "Alternatively",
    "Another angle",
    "Another approach",
    "But wait",
    "Hold on",
    "Hmm",
    "Maybe",
    "Looking back",
    "Okay",
    "Let me",
    "First",
    "Then",
    "Alright",
    "Compute",
    "Correct",
    "Good",
    "Got it",
    "I don't see any errors",
    "I think",
    "Let me double-check",
    "Let's see",
    "Now",
    "Remember",
    "Seems solid",
    "Similarly",
    "So",
    "Starting",
    "That's correct",
    "That seems right",
    "Therefore",
    "Thus",
)

# Subconjunto reflexivo: un chunk abierto por uno de estos es contenido de revisión.
REFLECTIVE_TRIGGERS: Final[frozenset[str]] = frozenset(
    {
        "Wait",
        "But wait",
        "Hold on",
        "Hmm",
        "Maybe",
        "Let me double-check",
        "Looking back",
        "Alternatively",
        "Another angle",
        "Another approach",
    }
)


class RawTrace(BaseModel):
    """Problema, su cadena de razonamiento, la respuesta final y el veredicto externo."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    trace_id: str = Field(..., min_length=1, description="Identificador único.")
    question: str = Field("", description="Enunciado del problema.")
    cot: str = Field("", description="Razonamiento completo (puede estar vacío).")
    answer: str = Field("", description="Respuesta final.")
    correct: bool | None = Field(None, description="Veredicto de corrección externo.")


@dataclass(frozen=True, slots=True)
class Chunk:
    """Paso individual del razonamiento."""

    index: int
    text: str
    trigger: str | None = None


@dataclass(frozen=True, slots=True)
class ChunkedTrace:
    """Traza junto con su partición ordenada en chunks."""

    trace: RawTrace
    chunks: tuple[Chunk, ...]

    @property
    def n(self) -> int:
        return len(self.chunks)


@lru_cache(maxsize=32)
def _trigger_pattern(triggers: tuple[str, ...]) -> re.Pattern[str]:
    """Compila el patrón de triggers: palabra completa, sensible a mayúsculas."""
    # El más largo primero: "But wait" gana a "Wait", "Let me double-check" a "Let me".
    ordered = sorted(set(triggers), key=len, reverse=True)
    alternatives = "|".join(re.escape(t) for t in ordered)
    return re.compile(rf"(?<!\w)(?:{alternatives})(?!\w)")


def split_cot(
    cot: str, triggers: Sequence[str] = DEFAULT_SPLIT_TOKENS
) -> list[Chunk]:
    """
    Divide un CoT en chunks contiguos, cortando justo antes de cada trigger.

    Args:
        cot: Texto del razonamiento.
        triggers: Tokens de corte; por defecto la lista estándar.

    Returns:
        Lista de chunks cuya concatenación es exactamente ``cot``.

    Raises:
        ValueError: Si la lista de triggers está vacía.
    """
    clean = tuple(t for t in triggers if t)
    if not clean:
        raise ValueError("La lista de triggers no puede estar vacía.")
    if not cot:
        return [Chunk(index=0, text="", trigger=None)]

    matches = list(_trigger_pattern(clean).finditer(cot))
    starts: list[tuple[int, str | None]] = []
    if not matches or matches[0].start() > 0:
        starts.append((0, None))
    starts.extend((m.start(), m.group(0)) for m in matches)

    chunks: list[Chunk] = []
    for i, (start, trigger) in enumerate(starts):
        end = starts[i + 1][0] if i + 1 < len(starts) else len(cot)
        chunks.append(Chunk(index=i, text=cot[start:end], trigger=trigger))
    return chunks


def chunk_trace(
    trace: RawTrace, triggers: Sequence[str] = DEFAULT_SPLIT_TOKENS
) -> ChunkedTrace:
    """Aplica ``split_cot`` al CoT de una traza."""
    return ChunkedTrace(trace=trace, chunks=tuple(split_cot(trace.cot, triggers)))


def is_reflective(chunk: Chunk) -> bool:
    """Indica si el chunk fue abierto por un trigger reflexivo."""
    return chunk.trigger in REFLECTIVE_TRIGGERS
