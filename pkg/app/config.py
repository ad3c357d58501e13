# config.py
"""
Módulo de configuración centralizado para el pipeline.

Utiliza pydantic-settings para cargar y validar la configuración desde
variables de entorno (prefijo ``PODACOT_``), un archivo .env y, opcionalmente,
un archivo de configuración plano ``CLAVE=valor`` que refleja los flags de la CLI.

Precedencia: flags > archivo de configuración > entorno > valores por defecto.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

from dotenv import dotenv_values, load_dotenv
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.constructor import ExhaustionPolicy, OracleBackend, OracleConfig
from app.core.errors import ConfigError
from app.core.pruner import PruneParams
from app.core.scoring import RewardParams
from app.llm.llm_handler import BackendConfig

load_dotenv()

# Claves del archivo que no coinciden con el nombre del campo.
KEY_ALIASES: dict[str, str] = {"lambda": "penalty_lambda"}


class Settings(BaseSettings):
    """
    Define las variables de configuración del pipeline.
    """

    # Configuración para pydantic-settings
    model_config = SettingsConfigDict(
        env_prefix="PODACOT_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # --- Troceado ---
    triggers_file: Path | None = Field(
        None, description="Archivo con un trigger por línea (None = lista por defecto)."
    )

    # --- Oráculo ---
    backend: OracleBackend = Field(
        OracleBackend.HEURISTIC, description="Oráculo de construcción: llm o heuristic."
    )
    max_retries: int = Field(
        2, ge=0, description="Reintentos del oráculo por chunk ante respuestas inválidas."
    )
    on_exhausted: ExhaustionPolicy = Field(
        ExhaustionPolicy.FALLBACK_INSERT,
        description="Qué hacer al agotar los reintentos: fallback_insert o fail.",
    )

    # --- Modelo LLM ---
    endpoint_url: str = Field(
        "https://api.openai.com/v1/chat/completions",
        description="Endpoint de chat-completion compatible con OpenAI.",
    )
    model_name: str = Field("qwen-turbo", description="Nombre del modelo a utilizar.")
    api_key_env_var: str = Field(
        "LLM_API_KEY", description="Variable de entorno que contiene la API key."
    )
    request_timeout: float = Field(
        60.0, gt=0, description="Timeout por petición, en segundos."
    )
    max_concurrent_requests: int = Field(
        4, ge=1, description="Máximo de peticiones simultáneas al proveedor."
    )
    max_http_retries: int = Field(
        5, ge=0, description="Reintentos HTTP ante 429/5xx o timeout."
    )
    backoff_factor: float = Field(0.5, ge=0, description="Factor del backoff exponencial.")
    backoff_max: float = Field(30.0, gt=0, description="Espera máxima entre reintentos.")
    temperature: float = Field(0.0, description="Temperatura de generación.")
    price_per_1k_input_tokens: float = Field(
        0.0, ge=0, description="Precio por 1k tokens de entrada (informes de coste)."
    )
    price_per_1k_output_tokens: float = Field(
        0.0, ge=0, description="Precio por 1k tokens de salida (informes de coste)."
    )
    use_cache: bool = Field(False, description="Activa la caché de respuestas en disco.")
    cache_path: Path = Field(
        Path("data/llm_cache.jsonl"), description="Ruta de la caché de respuestas."
    )

    # --- Poda ---
    k: int = Field(2, ge=1, description="Umbral de descendientes de la poda por rama.")
    m: float = Field(
        0.9, gt=0, le=1, description="Umbral de profundidad relativa de la poda."
    )

    # --- Recompensas ---
    penalty_lambda: float = Field(0.5, ge=0, description="Peso λ de la penalización.")
    delta: float = Field(256.0, ge=0, description="Margen de tolerancia Δ en tokens.")
    gamma: float = Field(2.0, ge=1, description="Agudeza γ de la penalización.")

    # --- Ejecución ---
    jobs: int = Field(1, ge=1, description="Registros procesados en paralelo.")
    skip_errors: bool = Field(
        False, description="No fallar (código 1) por errores en registros sueltos."
    )
    log_level: str = Field("INFO", description="Nivel de logging.")

    def prune_params(self) -> PruneParams:
        return PruneParams(k=self.k, m=self.m)

    def reward_params(self) -> RewardParams:
        return RewardParams(
            penalty_lambda=self.penalty_lambda, delta=self.delta, gamma=self.gamma
        )

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(
            backend=self.backend,
            max_retries=self.max_retries,
            on_exhausted=self.on_exhausted,
        )

    def backend_config(self) -> BackendConfig:
        return BackendConfig(
            endpoint_url=self.endpoint_url,
            model_name=self.model_name,
            api_key_env_var=self.api_key_env_var,
            request_timeout=self.request_timeout,
            max_concurrent_requests=self.max_concurrent_requests,
            max_http_retries=self.max_http_retries,
            backoff_factor=self.backoff_factor,
            backoff_max=self.backoff_max,
            temperature=self.temperature,
            price_per_1k_input_tokens=self.price_per_1k_input_tokens,
            price_per_1k_output_tokens=self.price_per_1k_output_tokens,
        )


def read_config_file(path: Path) -> dict[str, Any]:
    """
    Lee un archivo de configuración ``CLAVE=valor``.

    Raises:
        ConfigError: Si no existe o contiene claves desconocidas.
    """
    if not path.is_file():
        raise ConfigError(f"No existe el archivo de configuración: {path}")
    values: dict[str, Any] = {}
    for raw_key, value in dotenv_values(path).items():
        key = raw_key.strip().lower().replace("-", "_")
        key = KEY_ALIASES.get(key, key)
        if key not in Settings.model_fields:
            raise ConfigError(f"Clave desconocida en {path}: {raw_key}")
        if value is not None:
            values[key] = value
    return values


def load_settings(config_file: Path | None = None, **overrides: Any) -> Settings:
    """
    Construye la configuración efectiva.

    Los ``overrides`` con valor ``None`` se ignoran (flags no indicados).

    Raises:
        ConfigError: Archivo ilegible, clave desconocida o valor inválido.
    """
    values = read_config_file(config_file) if config_file else {}
    for key, value in overrides.items():
        key = KEY_ALIASES.get(key, key)
        if key not in Settings.model_fields:
            raise ConfigError(f"Opción desconocida: {key}")
        if value is not None:
            values[key] = value
    try:
        return Settings(**values)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"Valor inválido para '{field}': {first['msg']}") from e
