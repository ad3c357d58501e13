# main.py
"""Punto de entrada de la CLI del pipeline de compresión de CoT.

Cada subcomando lee JSONL (un objeto por línea), aplica una etapa del
pipeline y escribe el resultado en ``--out``. Códigos de salida: 0 éxito,
1 algún registro falló (salvo ``--skip-errors``), 2 error de configuración
o de E/S.
"""

from __future__ import annotations

# 1. Importaciones de la biblioteca estándar
import argparse
import json
import logging
import re
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

# 2. Importaciones locales de la aplicación
from app.config import Settings, load_settings
from app.core.constructor import (
    ExhaustionPolicy,
    Oracle,
    OracleBackend,
    heuristic_oracle,
)
from app.core.errors import BackendError, ConfigError
from app.core.export import export_stats_md, export_stats_pdf, stats_to_markdown
from app.core.graph import NodeType, graph_from_dict
from app.core.mermaid import to_mermaid
from app.core.pipeline import (
    ChunkRecord,
    GraphRecord,
    PrunedRecord,
    RecordFailure,
    RunResult,
    TrajectoryRecord,
    chunk_record,
    dump_record,
    graph_record,
    group_by_question,
    prune_record,
    pruned_chunked_trace,
    relinearize_record,
    run_records,
    score_trajectories,
    sft_record,
)
from app.core.relinearize import relinearize
from app.core.scoring import (
    ScoredTrajectory,
    build_dpo_pairs,
    grpo_rewards,
    to_dpo_pair,
)
from app.core.stats import StatsSample, dataset_stats, label_metrics
from app.core.trace import DEFAULT_SPLIT_TOKENS, RawTrace
from app.core.utils import iter_jsonl, read_lines_file, write_jsonl
from app.llm.llm_handler import ChatBackend, LLMOracle, ResponseCache

EXIT_OK = 0
EXIT_RECORD_ERRORS = 1
EXIT_CONFIG = 2

# Logger del módulo
logger = logging.getLogger(__name__)


# ------------------------------------------------------------------
# 0. Configuración del Logging
# ------------------------------------------------------------------
def setup_logging(level: str = "INFO") -> None:
    """Configura el logging para toda la aplicación."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,
    )


# ------------------------------------------------------------------
# 1. Argumentos
# ------------------------------------------------------------------
def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", type=Path, help="Archivo JSONL de entrada.")
    common.add_argument("--out", type=Path, required=True, help="Ruta de salida.")
    common.add_argument("--config", type=Path, help="Archivo de configuración CLAVE=valor.")
    common.add_argument("--log-level", help="Nivel de logging (INFO, DEBUG...).")
    common.add_argument("--jobs", type=int, help="Registros procesados en paralelo.")
    common.add_argument(
        "--skip-errors",
        action="store_const",
        const=True,
        help="Los registros fallidos no cambian el código de salida.",
    )
    return common


def _add_triggers(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--triggers",
        help="'default' o archivo con un trigger por línea.",
    )


def _add_oracle(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=[b.value for b in OracleBackend])
    parser.add_argument(
        "--cache", dest="use_cache", action="store_const", const=True,
        help="Activa la caché de respuestas del LLM.",
    )
    parser.add_argument("--max-retries", type=int)
    parser.add_argument("--on-exhausted", choices=[p.value for p in ExhaustionPolicy])


def _add_prune(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, help="Umbral de descendientes (por defecto 2).")
    parser.add_argument("--m", type=float, help="Umbral de profundidad (por defecto 0.9).")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="podacot",
        description="Poda de reflexión redundante en cadenas de razonamiento.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()

    p = sub.add_parser("chunk", parents=[common], help="Trocea trazas en chunks.")
    _add_triggers(p)

    p = sub.add_parser("build-graph", parents=[common], help="Construye los grafos.")
    _add_triggers(p)
    _add_oracle(p)

    p = sub.add_parser("prune", parents=[common], help="Poda nodos review redundantes.")
    _add_prune(p)

    p = sub.add_parser("relinearize", parents=[common], help="Re-emite el CoT podado.")
    _add_triggers(p)

    p = sub.add_parser("make-sft", parents=[common], help="chunk+grafo+poda+relinealizado.")
    _add_triggers(p)
    _add_oracle(p)
    _add_prune(p)

    p = sub.add_parser("score", parents=[common], help="Puntúa la redundancia R(y).")
    _add_triggers(p)
    _add_oracle(p)

    sub.add_parser("make-dpo-pairs", parents=[common], help="Pares de preferencia.")

    p = sub.add_parser("grpo-reward", parents=[common], help="Recompensas con penalización.")
    p.add_argument("--lambda", dest="penalty_lambda", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("stats", parents=[common], help="Estadísticas completo/podado.")
    _add_triggers(p)
    p.add_argument("--report", type=Path, help="Informe legible (.md o .pdf).")
    p.add_argument("--usage", type=Path, help="JSON de uso del LLM para el coste.")

    p = sub.add_parser("eval-labels", parents=[common], help="Métricas de etiquetas.")
    p.add_argument("--graphs", type=Path, help="JSONL de grafos para las predicciones.")

    sub.add_parser("export-mermaid", parents=[common], help="Exporta grafos a .mmd.")
    return parser


SETTING_FLAGS = (
    "backend", "use_cache", "max_retries", "on_exhausted", "k", "m",
    "penalty_lambda", "delta", "gamma", "jobs", "skip_errors", "log_level",
)


def settings_from_args(args: argparse.Namespace) -> Settings:
    overrides = {key: getattr(args, key, None) for key in SETTING_FLAGS}
    triggers = getattr(args, "triggers", None)
    if triggers and triggers != "default":
        overrides["triggers_file"] = Path(triggers)
    settings = load_settings(args.config, **overrides)
    if triggers == "default":
        settings = settings.model_copy(update={"triggers_file": None})
    return settings


# ------------------------------------------------------------------
# 2. Piezas compartidas
# ------------------------------------------------------------------
def load_triggers(settings: Settings) -> tuple[str, ...]:
    if settings.triggers_file is None:
        return DEFAULT_SPLIT_TOKENS
    triggers = tuple(read_lines_file(settings.triggers_file))
    if not triggers:
        raise ConfigError(f"El archivo de triggers está vacío: {settings.triggers_file}")
    return triggers


def make_oracle(settings: Settings) -> tuple[Oracle, ChatBackend | None]:
    """Oráculo según ``backend``; con LLM comprueba la API key antes de empezar."""
    if settings.backend is OracleBackend.HEURISTIC:
        return heuristic_oracle, None
    cache = ResponseCache(settings.cache_path) if settings.use_cache else None
    backend = ChatBackend(settings.backend_config(), cache=cache)
    try:
        backend.api_key()
    except BackendError as e:
        backend.close()
        raise ConfigError(str(e)) from e
    return LLMOracle(backend), backend


def load_records(path: Path) -> list[dict[str, Any]]:
    return list(iter_jsonl(path))


def load_traces(path: Path) -> list[dict[str, Any]]:
    """Carga trazas crudas; un ``trace_id`` repetido invalida el archivo."""
    items = load_records(path)
    seen: set[str] = set()
    for item in items:
        trace_id = item.get("trace_id")
        if trace_id in seen:
            raise ValueError(f"trace_id duplicado en {path}: {trace_id}")
        if trace_id is not None:
            seen.add(str(trace_id))
    return items


def sidecar_path(out: Path) -> Path:
    return out.with_name(out.name + ".errors.jsonl")


def finish(
    settings: Settings,
    out: Path,
    outputs: Sequence[dict[str, Any]],
    failures: Sequence[RecordFailure],
) -> int:
    """Escribe salidas y fallos; decide el código de salida."""
    write_jsonl(out, outputs)
    if failures:
        write_jsonl(sidecar_path(out), (f.to_dict() for f in failures))
        logger.warning(
            f"{len(failures)} registros fallidos (detalle en {sidecar_path(out)})"
        )
        if not settings.skip_errors:
            return EXIT_RECORD_ERRORS
    return EXIT_OK


def run_stage(
    settings: Settings,
    args: argparse.Namespace,
    items: Sequence[dict[str, Any]],
    fn: Callable[[dict[str, Any]], Any],
) -> int:
    result: RunResult[Any] = run_records(items, fn, settings.jobs)
    logger.info(
        f"{args.command}: {len(result.outputs)} registros correctos, "
        f"{len(result.failures)} fallidos"
    )
    return finish(
        settings, args.out, [dump_record(o) for o in result.outputs], result.failures
    )


def close_backend(backend: ChatBackend | None, out: Path) -> None:
    if backend is None:
        return
    logger.info(f"Uso del LLM: {backend.ledger.summary()}")
    usage_path = out.with_name(out.name + ".usage.json")
    usage_path.write_text(json.dumps(backend.ledger.snapshot(), indent=2), encoding="utf-8")
    backend.close()


# ------------------------------------------------------------------
# 3. Subcomandos
# ------------------------------------------------------------------
def cmd_chunk(settings: Settings, args: argparse.Namespace) -> int:
    triggers = load_triggers(settings)
    return run_stage(
        settings, args, load_traces(args.input),
        lambda d: chunk_record(RawTrace.model_validate(d), triggers),
    )


def cmd_build_graph(settings: Settings, args: argparse.Namespace) -> int:
    triggers = load_triggers(settings)
    oracle, backend = make_oracle(settings)
    config = settings.oracle_config()

    def fn(d: dict[str, Any]) -> Any:
        record = (
            ChunkRecord.model_validate(d)
            if "chunks" in d
            else chunk_record(RawTrace.model_validate(d), triggers)
        )
        return graph_record(record, oracle, config)

    try:
        return run_stage(settings, args, load_records(args.input), fn)
    finally:
        close_backend(backend, args.out)


def cmd_prune(settings: Settings, args: argparse.Namespace) -> int:
    params = settings.prune_params()
    return run_stage(
        settings, args, load_records(args.input),
        lambda d: prune_record(GraphRecord.model_validate(d), params),
    )


def cmd_relinearize(settings: Settings, args: argparse.Namespace) -> int:
    triggers = load_triggers(settings)
    return run_stage(
        settings, args, load_records(args.input),
        lambda d: relinearize_record(PrunedRecord.model_validate(d), triggers),
    )


def cmd_make_sft(settings: Settings, args: argparse.Namespace) -> int:
    triggers = load_triggers(settings)
    oracle, backend = make_oracle(settings)
    config, params = settings.oracle_config(), settings.prune_params()
    try:
        return run_stage(
            settings, args, load_traces(args.input),
            lambda d: sft_record(
                RawTrace.model_validate(d), oracle, config, params, triggers
            ),
        )
    finally:
        close_backend(backend, args.out)


def cmd_score(settings: Settings, args: argparse.Namespace) -> int:
    triggers = load_triggers(settings)
    parsed = run_records(load_records(args.input), TrajectoryRecord.model_validate)
    oracle, backend = make_oracle(settings)
    try:
        scored = score_trajectories(
            parsed.outputs, oracle, settings.oracle_config(), triggers,
            jobs=settings.jobs,
        )
    finally:
        close_backend(backend, args.out)
    logger.info(f"score: {len(scored.outputs)} trayectorias puntuadas")
    return finish(
        settings,
        args.out,
        [dump_record(s) for s in scored.outputs],
        [*parsed.failures, *scored.failures],
    )


def cmd_make_dpo_pairs(settings: Settings, args: argparse.Namespace) -> int:
    parsed = run_records(load_records(args.input), ScoredTrajectory.model_validate)
    groups = group_by_question(parsed.outputs, lambda t: t.question_id)
    pairs = []
    for question_id, group in groups.items():
        chosen = build_dpo_pairs(group)
        if chosen is None:
            logger.info(f"Pregunta {question_id}: menos de dos trayectorias correctas")
            continue
        pairs.append(dump_record(to_dpo_pair(*chosen)))
    logger.info(f"make-dpo-pairs: {len(pairs)} pares de {len(groups)} preguntas")
    return finish(settings, args.out, pairs, parsed.failures)


def cmd_grpo_reward(settings: Settings, args: argparse.Namespace) -> int:
    params = settings.reward_params()
    parsed = run_records(load_records(args.input), TrajectoryRecord.model_validate)
    trajectories = [
        ScoredTrajectory(
            trajectory_id=r.trajectory_id,
            question_id=r.question_id,
            question=r.question,
            cot=r.cot,
            length=r.resolved_length(),
            correct=r.correct,
        )
        for r in parsed.outputs
    ]
    groups = group_by_question(trajectories, lambda t: t.question_id)
    by_key = {
        (record.question_id, record.trajectory_id): record
        for group in groups.values()
        for record in grpo_rewards(group, params)
    }
    # Mismo orden que la entrada.
    rewards = [
        dump_record(by_key[(t.question_id, t.trajectory_id)]) for t in trajectories
    ]
    return finish(settings, args.out, rewards, parsed.failures)


def cmd_stats(settings: Settings, args: argparse.Namespace) -> int:
    triggers = load_triggers(settings)

    def sample(d: dict[str, Any]) -> StatsSample:
        record = PrunedRecord.model_validate(d)
        chunked = pruned_chunked_trace(record, triggers)
        full_graph = graph_from_dict(record.graph)
        pruned_graph = graph_from_dict(record.pruned_graph)
        return StatsSample(
            full_graph=full_graph,
            pruned_graph=pruned_graph,
            full_cot=chunked.trace.cot,
            pruned_cot=relinearize(pruned_graph, chunked),
        )

    result = run_records(load_records(args.input), sample, settings.jobs)
    total_cost: float | None = None
    estimated = False
    if args.usage:
        usage = json.loads(args.usage.read_text(encoding="utf-8"))
        total_cost = float(usage.get("estimated_cost", 0.0))
        estimated = bool(usage.get("cost_is_estimated", False))

    stats = dataset_stats(
        result.outputs, total_cost=total_cost, cost_is_estimated=estimated
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(
        json.dumps(stats.model_dump(mode="json"), ensure_ascii=False, indent=2),
        encoding="utf-8",
    )
    print(stats_to_markdown(stats))
    if args.report:
        content = (
            export_stats_pdf(stats)
            if args.report.suffix.lower() == ".pdf"
            else export_stats_md(stats)
        )
        args.report.write_bytes(content)
        logger.info(f"Informe escrito en {args.report}")

    if result.failures:
        write_jsonl(sidecar_path(args.out), (f.to_dict() for f in result.failures))
        if not settings.skip_errors:
            return EXIT_RECORD_ERRORS
    return EXIT_OK


def _predicted_types(path: Path) -> dict[str, NodeType]:
    """Mapa ``trace_id:NodeId`` -> tipo predicho, desde un JSONL de grafos."""
    predicted: dict[str, NodeType] = {}
    for item in iter_jsonl(path):
        record = GraphRecord.model_validate(item)
        for node in graph_from_dict(record.graph).nodes.values():
            predicted[f"{record.trace_id}:{node.id}"] = node.node_type
    return predicted


def cmd_eval_labels(settings: Settings, args: argparse.Namespace) -> int:
    lookup = _predicted_types(args.graphs) if args.graphs else {}
    predicted: list[NodeType] = []
    gold: list[NodeType] = []
    atomic: list[bool] = []
    failures: list[RecordFailure] = []
    for index, row in enumerate(load_records(args.input)):
        node_ref = str(row.get("node_ref", f"#{index}"))
        try:
            raw_predicted = row.get("predicted_type") or lookup[node_ref]
            row_predicted = NodeType(str(raw_predicted).lower())
            row_gold = NodeType(str(row["gold_type"]).lower())
        except (KeyError, ValueError) as e:
            failures.append(RecordFailure(index, node_ref, f"{type(e).__name__}: {e}"))
            continue
        predicted.append(row_predicted)
        gold.append(row_gold)
        atomic.append(bool(row.get("atomic", True)))

    metrics = label_metrics(predicted, gold, atomic)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(
        json.dumps(metrics.model_dump(mode="json"), ensure_ascii=False, indent=2),
        encoding="utf-8",
    )
    for cls, m in metrics.per_class.items():
        print(f"{cls.value:>8}  P={m.precision:.4f}  R={m.recall:.4f}  F1={m.f1:.4f}")
    if failures:
        write_jsonl(sidecar_path(args.out), (f.to_dict() for f in failures))
        if not settings.skip_errors:
            return EXIT_RECORD_ERRORS
    return EXIT_OK


_UNSAFE_CHARS = re.compile(r"[^\w.-]")


def cmd_export_mermaid(settings: Settings, args: argparse.Namespace) -> int:
    out_dir: Path = args.out
    out_dir.mkdir(parents=True, exist_ok=True)

    def export(d: dict[str, Any]) -> list[str]:
        record = GraphRecord.model_validate(d)
        stem = _UNSAFE_CHARS.sub("_", record.trace_id)
        written = []
        path = out_dir / f"{stem}.mmd"
        path.write_text(to_mermaid(graph_from_dict(record.graph)), encoding="utf-8")
        written.append(path.name)
        if d.get("pruned_graph"):
            path = out_dir / f"{stem}.pruned.mmd"
            path.write_text(
                to_mermaid(graph_from_dict(d["pruned_graph"])), encoding="utf-8"
            )
            written.append(path.name)
        return written

    result = run_records(load_records(args.input), export, settings.jobs)
    logger.info(f"export-mermaid: {sum(len(w) for w in result.outputs)} archivos en {out_dir}")
    if result.failures:
        write_jsonl(out_dir / "errors.jsonl", (f.to_dict() for f in result.failures))
        if not settings.skip_errors:
            return EXIT_RECORD_ERRORS
    return EXIT_OK


COMMANDS: dict[str, Callable[[Settings, argparse.Namespace], int]] = {
    "chunk": cmd_chunk,
    "build-graph": cmd_build_graph,
    "prune": cmd_prune,
    "relinearize": cmd_relinearize,
    "make-sft": cmd_make_sft,
    "score": cmd_score,
    "make-dpo-pairs": cmd_make_dpo_pairs,
    "grpo-reward": cmd_grpo_reward,
    "stats": cmd_stats,
    "eval-labels": cmd_eval_labels,
    "export-mermaid": cmd_export_mermaid,
}


# ------------------------------------------------------------------
# 4. Main
# ------------------------------------------------------------------
def main(argv: Sequence[str] | None = None) -> int:
    """Función principal que orquesta la CLI."""
    args = build_parser().parse_args(argv)
    try:
        settings = settings_from_args(args)
    except ConfigError as e:
        setup_logging()
        logger.error(f"Configuración inválida: {e}")
        return EXIT_CONFIG
    setup_logging(settings.log_level)

    try:
        return COMMANDS[args.command](settings, args)
    except (ConfigError, OSError, ValueError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
