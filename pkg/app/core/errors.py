# errors.py

"""
Jerarquía de excepciones del proyecto.

Los errores de valor heredan de ``ValueError`` y los de servicios externos de
``RuntimeError``, para que el código que solo conoce las excepciones estándar
siga funcionando.
"""

from __future__ import annotations

# ==========================
#   GRAFO
# ==========================


class GraphError(ValueError):
    """Error base para operaciones sobre el grafo de razonamiento."""


class InvalidNodeId(GraphError):
    """El identificador no sigue el formato de hoja de cálculo (A, B, ..., AA)."""


class IdOrderViolation(GraphError):
    """El nodo insertado no tiene un id estrictamente mayor que los existentes."""


class UnknownEndpoint(GraphError):
    """Una arista referencia un nodo que no existe."""


class DuplicateEdge(GraphError):
    """Ya existe una arista con el mismo par (origen, destino)."""


class InvalidEdge(GraphError):
    """La arista no respeta las reglas de inserción (destino, auto-arista)."""


class TerminalViolation(GraphError):
    """Se intentó dar aristas salientes al terminal o crear un segundo terminal."""


class UnknownNode(GraphError):
    """El nodo consultado no existe en el grafo."""


class Unreachable(GraphError):
    """El nodo no es alcanzable desde ninguna fuente."""


class NoTerminal(GraphError):
    """El grafo no tiene nodo terminal ("final answer")."""


class MermaidParseError(GraphError):
    """Texto Mermaid fuera del dialecto emitido por ``to_mermaid``."""

    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"Línea {line}: {message}")


# ==========================
#   CONSTRUCCIÓN
# ==========================


class ConstructionError(ValueError):
    """Error base de la construcción iterativa del grafo."""


class MalformedJson(ConstructionError):
    """La respuesta del oráculo no es JSON válido."""


class SchemaViolation(ConstructionError):
    """El JSON no respeta el esquema de operaciones Insert/Merge."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"Campo '{field}': {message}")


class InconsistentDecision(ConstructionError):
    """Los campos presentes no corresponden a la decisión declarada."""


class MergeConstraintViolation(ConstructionError):
    """Contenido de revisión no puede fusionarse en un nodo de progreso."""


class InvalidGraph(ConstructionError):
    """El grafo resultante no supera la validación."""


class OracleExhausted(ConstructionError):
    """Se agotaron los reintentos del oráculo para un chunk."""

    def __init__(self, chunk_index: int, last_error: str) -> None:
        self.chunk_index = chunk_index
        self.last_error = last_error
        super().__init__(
            f"Reintentos agotados en el chunk {chunk_index}: {last_error}"
        )


class OracleUnavailable(OracleExhausted):
    """El backend del oráculo no respondió tras los reintentos."""


# ==========================
#   BACKEND LLM
# ==========================


class BackendError(RuntimeError):
    """Error base del cliente HTTP de chat-completion."""


class AuthError(BackendError):
    """Falta la API key o el proveedor la rechazó."""


class BackendTimeout(BackendError):
    """El proveedor no respondió dentro del tiempo configurado."""


class BackendUnreachable(BackendError):
    """No se pudo conectar con el proveedor (DNS, conexión rechazada o cortada)."""


class ProviderError(BackendError):
    """El proveedor devolvió un estado de error."""

    def __init__(self, status: int, body: str) -> None:
        self.status = status
        self.body = body[:200]
        super().__init__(f"Error del proveedor (HTTP {status}): {self.body}")


# ==========================
#   RESTO DEL PIPELINE
# ==========================


class DanglingChunkIndex(ValueError):
    """Un nodo referencia un chunk que no existe en la traza."""


class DivisionDomain(ValueError):
    """Denominador nulo en el cálculo de la puntuación de redundancia."""


class EmptyDataset(ValueError):
    """No hay muestras para calcular estadísticas."""


class LengthMismatch(ValueError):
    """Las listas de etiquetas tienen longitudes distintas."""


class ConfigError(ValueError):
    """Configuración inválida (archivo, clave desconocida o valor fuera de rango)."""


class RecordError(ValueError):
    """Fallo al procesar un registro concreto del JSONL de entrada."""
