# llm_handler.py

"""
Cliente HTTP de chat-completion (API compatible con OpenAI) usado como
oráculo de construcción de grafos.

Incluye reintentos con backoff exponencial ante 429/5xx y errores de red, un límite de
peticiones simultáneas, contabilidad de uso/coste y una caché opcional en
disco (JSONL).
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from types import TracebackType
from typing import Any

import backoff
import httpx
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import AuthError, BackendTimeout, BackendUnreachable, ProviderError
from app.core.trace import Chunk
from app.core.utils import TokenCounter, stable_hash, token_count
from app.llm.prompts import render_graph_prompt

# Configuración del logger
logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class BackendConfig(BaseModel):
    """Parámetros del proveedor; el modelo concreto es configuración, no código."""

    model_config = ConfigDict(frozen=True)

    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "qwen-turbo"
    api_key_env_var: str = "LLM_API_KEY"
    request_timeout: float = Field(60.0, gt=0)
    max_concurrent_requests: int = Field(4, ge=1)
    max_http_retries: int = Field(5, ge=0)
    backoff_factor: float = Field(0.5, ge=0)
    backoff_max: float = Field(30.0, gt=0)
    temperature: float = 0.0
    price_per_1k_input_tokens: float = Field(0.0, ge=0)
    price_per_1k_output_tokens: float = Field(0.0, ge=0)


@dataclass(frozen=True, slots=True)
class UsageDelta:
    """Consumo de una petición."""

    input_tokens: int = 0
    output_tokens: int = 0
    cost: float = 0.0
    estimated: bool = False


@dataclass(frozen=True, slots=True)
class Completion:
    text: str
    usage: UsageDelta
    cached: bool = False


class UsageLedger:
    """Totales acumulados de peticiones, tokens, coste y aciertos de caché (seguro entre hilos)."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.requests = 0
        self.input_tokens = 0
        self.output_tokens = 0
        self.cost = 0.0
        self.estimated = False
        self.cache_hits = 0

    def record(self, delta: UsageDelta) -> None:
        with self._lock:
            self.requests += 1
            self.input_tokens += delta.input_tokens
            self.output_tokens += delta.output_tokens
            self.cost += delta.cost
            self.estimated = self.estimated or delta.estimated

    def record_cache_hit(self) -> None:
        with self._lock:
            self.cache_hits += 1

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return {
                "requests": self.requests,
                "cache_hits": self.cache_hits,
                "input_tokens": self.input_tokens,
                "output_tokens": self.output_tokens,
                "estimated_cost": self.cost,
                "cost_is_estimated": self.estimated,
            }

    def summary(self) -> str:
        data = self.snapshot()
        label = " (estimado)" if data["cost_is_estimated"] else ""
        return (
            f"{data['requests']} peticiones ({data['cache_hits']} desde caché), "
            f"{data['input_tokens']} tokens de entrada, "
            f"{data['output_tokens']} de salida, coste{label}: {data['estimated_cost']:.4f}"
        )


class ResponseCache:
    """Caché en disco: una línea JSON {request_hash, response} por petición."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if path.exists():
            with path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    try:
                        item = json.loads(line)
                        self._entries[item["request_hash"]] = item["response"]
                    except (json.JSONDecodeError, KeyError, TypeError):
                        logger.warning(f"Línea de caché corrupta ignorada en {path}")
            logger.info(f"Caché cargada: {len(self._entries)} respuestas desde {path}")

    def get(self, request_hash: str) -> str | None:
        with self._lock:
            return self._entries.get(request_hash)

    def put(self, request_hash: str, response: str) -> None:
        with self._lock:
            if request_hash in self._entries:
                return
            self._entries[request_hash] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as out:
                record = {"request_hash": request_hash, "response": response}
                out.write(json.dumps(record, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


class _RetryableStatus(Exception):
    """Respuesta 429/5xx que merece reintento."""

    def __init__(self, response: httpx.Response) -> None:
        self.response = response
        super().__init__(f"HTTP {response.status_code}")


class ChatBackend:
    """Cliente de chat-completion con límite de concurrencia y contabilidad."""

    def __init__(
        self,
        config: BackendConfig,
        *,
        client: httpx.Client | None = None,
        ledger: UsageLedger | None = None,
        cache: ResponseCache | None = None,
        counter: TokenCounter | None = None,
    ) -> None:
        self.config = config
        self.ledger = ledger or UsageLedger()
        self.cache = cache
        self._counter = counter
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self._gate = threading.BoundedSemaphore(config.max_concurrent_requests)

    def __enter__(self) -> ChatBackend:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()

    def close(self) -> None:
        self._client.close()

    def api_key(self) -> str:
        api_key = os.environ.get(self.config.api_key_env_var, "")
        if not api_key:
            raise AuthError(
                f"La API key no está configurada (variable {self.config.api_key_env_var})."
            )
        return api_key

    def _send_once(self, payload: dict[str, Any], headers: dict[str, str]) -> httpx.Response:
        with self._gate:
            response = self._client.post(
                self.config.endpoint_url,
                json=payload,
                headers=headers,
                timeout=self.config.request_timeout,
            )
        if response.status_code in RETRYABLE_STATUS:
            raise _RetryableStatus(response)
        return response

    def _send(self, payload: dict[str, Any], headers: dict[str, str]) -> httpx.Response:
        send = backoff.on_exception(
            backoff.expo,
            (_RetryableStatus, httpx.TransportError),
            max_tries=self.config.max_http_retries + 1,
            jitter=None,
            logger=logger,
            factor=self.config.backoff_factor,
            max_value=self.config.backoff_max,
        )(self._send_once)
        try:
            return send(payload, headers)
        except _RetryableStatus as e:
            raise ProviderError(e.response.status_code, e.response.text) from e
        except httpx.TimeoutException as e:
            raise BackendTimeout(
                f"Sin respuesta tras {self.config.max_http_retries + 1} intentos: {e}"
            ) from e
        except httpx.TransportError as e:
            raise BackendUnreachable(
                f"Proveedor inalcanzable tras {self.config.max_http_retries + 1} intentos: {e}"
            ) from e

    def _usage_from(self, data: dict[str, Any], prompt: str, text: str) -> UsageDelta:
        usage = data.get("usage") or {}
        input_tokens = usage.get("prompt_tokens")
        output_tokens = usage.get("completion_tokens")
        estimated = not isinstance(input_tokens, int) or not isinstance(output_tokens, int)
        if estimated:
            input_tokens = token_count(prompt, self._counter)
            output_tokens = token_count(text, self._counter)
        cost = (
            input_tokens / 1000 * self.config.price_per_1k_input_tokens
            + output_tokens / 1000 * self.config.price_per_1k_output_tokens
        )
        return UsageDelta(
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            cost=cost,
            estimated=estimated,
        )

    def complete(self, prompt: str, system: str = "") -> Completion:
        """
        Realiza una petición de chat-completion.

        Raises:
            AuthError: API key ausente (antes de tocar la red) o rechazada.
            BackendTimeout: Sin respuesta tras los reintentos.
            BackendUnreachable: Fallo de conexión persistente tras los reintentos.
            ProviderError: Estado de error o respuesta sin contenido.
        """
        api_key = self.api_key()
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        payload: dict[str, Any] = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
        }

        request_hash = stable_hash(payload)
        if self.cache is not None:
            cached = self.cache.get(request_hash)
            if cached is not None:
                self.ledger.record_cache_hit()
                return Completion(text=cached, usage=UsageDelta(), cached=True)

        headers = {"Authorization": f"Bearer {api_key}"}
        response = self._send(payload, headers)
        if response.status_code in (401, 403):
            raise AuthError(f"El proveedor rechazó la API key (HTTP {response.status_code}).")
        if response.status_code >= 400:
            raise ProviderError(response.status_code, response.text)

        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise ProviderError(response.status_code, f"respuesta inesperada: {e}") from e

        delta = self._usage_from(data, prompt, text)
        self.ledger.record(delta)
        if self.cache is not None:
            self.cache.put(request_hash, text)
        return Completion(text=text, usage=delta)


class LLMOracle:
    """Oráculo de operaciones respaldado por un LLM remoto."""

    def __init__(self, backend: ChatBackend) -> None:
        self.backend = backend

    def __call__(
        self, graph_mermaid: str, chunk: Chunk, feedback: str | None = None
    ) -> str:
        prompt = render_graph_prompt(graph_mermaid, chunk.text, feedback)
        completion = self.backend.complete(prompt)
        if completion.cached:
            logger.debug(f"Respuesta del chunk {chunk.index} servida desde caché")
        return completion.text
