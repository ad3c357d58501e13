"""
Utilidades de texto y de E/S JSONL compartidas por todo el pipeline.
"""

import hashlib
import json
import logging
from collections.abc import Callable, Iterable, Iterator
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

# Función que cuenta "tokens" de un texto; intercambiable por un tokenizer real.
TokenCounter = Callable[[str], int]


def whitespace_token_count(text: str) -> int:
    """Cuenta palabras delimitadas por espacios en blanco."""
    return len(text.split())


def token_count(text: str, counter: TokenCounter | None = None) -> int:
    """
    Cuenta los tokens de un texto.

    Por defecto un token es una palabra separada por espacios; ``counter``
    permite enchufar el tokenizer de un modelo concreto.
    """
    if not text:
        return 0
    return (counter or whitespace_token_count)(text)


def first_words(text: str, limit: int = 12) -> str:
    """Devuelve las primeras ``limit`` palabras del texto, unidas por un espacio."""
    return " ".join(text.split()[:limit])


def stable_hash(payload: Any) -> str:
    """Hash SHA-256 de la representación JSON canónica de ``payload``."""
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def read_lines_file(path: Path) -> list[str]:
    """Lee un archivo de texto plano, una entrada por línea (ignora líneas vacías)."""
    content = path.read_text(encoding="utf-8")
    return [line.strip() for line in content.splitlines() if line.strip()]


def iter_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    """Itera los objetos JSON de un archivo JSONL, saltando líneas vacías."""
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                item = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_number}: JSON inválido ({e})") from e
            if not isinstance(item, dict):
                raise ValueError(f"{path}:{line_number}: se esperaba un objeto JSON")
            yield item


def dumps_record(record: dict[str, Any]) -> str:
    """Serializa un registro en una línea JSON determinista."""
    return json.dumps(record, ensure_ascii=False)


def write_jsonl(path: Path, records: Iterable[dict[str, Any]]) -> int:
    """Escribe registros en JSONL y devuelve cuántos se escribieron."""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as out:
        for record in records:
            out.write(dumps_record(record) + "\n")
            count += 1
    logger.info(f"Escritos {count} registros en {path}")
    return count
