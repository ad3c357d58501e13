# app/llm/prompts.py
"""
Prompt para que un LLM externo actualice el grafo de razonamiento chunk a chunk.

El texto se compone de bloques constantes; ``{{ graph }}`` y
``{{ current_step }}`` se sustituyen en cada consulta.
"""

from __future__ import annotations

import re
from typing import Final

GRAPH_PLACEHOLDER: Final[str] = "{{ graph }}"
STEP_PLACEHOLDER: Final[str] = "{{ current_step }}"

# --- Bloques del prompt (en inglés: es lo que lee el modelo) ---

ROLE: Final[str] = (
    "You maintain the dependency graph of a chain-of-thought. You receive the "
    "graph built so far and the next reasoning segment. Fold the segment into "
    "the graph with exactly one operation, Insert or Merge, and answer with "
    "strict JSON only.\n\n"
)

INPUTS: Final[str] = (
    "## Inputs\n"
    "- graph: the partial reasoning graph, as Mermaid code.\n"
    "- current_step: the next contiguous segment of the chain-of-thought.\n\n"
)

NODE_RULES: Final[str] = (
    "## What a node is\n"
    "- One abstract reasoning unit with a clear intent and a product later steps "
    "can build on (a constraint, a derived fact, a sub-goal, a framework).\n"
    "- Plain manipulation (substituting, expanding, simplifying, arithmetic) is "
    "never a node of its own.\n"
    "- Each node is typed: `progress` when it moves the reasoning frontier "
    "forward, `review` when it re-reads, checks, restates, deletes or rewinds "
    "existing material.\n\n"
)

INSERT_CRITERIA: Final[str] = (
    "## Prefer Insert when the segment\n"
    "- opens a new intermediate goal or subproblem;\n"
    "- yields a conclusion, property, constraint or equivalence used later;\n"
    "- switches method or framework;\n"
    "- adds structure such as a case split, construction or lemma;\n"
    "- starts a new attempt, even a failed one, branching from ancestors that "
    "are still valid.\n"
    "Prefer Merge when it only continues an existing unit with detail or "
    "restatement and produces nothing new.\n\n"
)

OPERATION_RULES: Final[str] = (
    "## Operations\n"
    "- Merge: only if the segment fits exactly one existing node while keeping "
    "it abstract and single-purpose. Review content must NOT be merged into a "
    "progress node, and no node may end up mixing advancing and reflecting. "
    "Fill `target_node` and `updated_node_description`; any new dependency "
    "edges must point to `target_node` from a smaller id.\n"
    "- Insert: create a new node and the dependency edges it needs.\n\n"
)

EDGE_RULES: Final[str] = (
    "## Edges and ids\n"
    "- If node B uses something produced by node A, add an edge A -> B with a "
    "short label saying what is used.\n"
    "- New attempts branch from products that are still valid, never from "
    "refuted or dead-end nodes.\n"
    "- Node ids grow in spreadsheet order: A..Z, AA..AZ, BA..BZ, ...\n"
    "- Every edge goes from a smaller id to a larger id.\n"
    "- The last node is described exactly as `final answer`.\n\n"
)

OUTPUT_FORMAT: Final[str] = (
    "## Output (strict JSON, nothing else)\n"
    "{\n"
    '  "decision": "Insert or Merge",\n'
    '  "target_node": "node id to merge into; empty for Insert",\n'
    '  "new_node": {\n'
    '    "id": "new unique id for Insert; empty for Merge",\n'
    '    "description": "short description for Insert; empty for Merge",\n'
    '    "type": "progress or review"\n'
    "  },\n"
    '  "edges": [{"from": "source id", "to": "target id", "label": "dependency"}],\n'
    '  "updated_node_description": "new description for Merge; empty for Insert"\n'
    "}\n\n"
)

TURN: Final[str] = (
    "Existing graph:\n"
    f"{GRAPH_PLACEHOLDER}\n"
    "Current step:\n"
    f"{STEP_PLACEHOLDER}\n"
    "Your response:"
)

GRAPH_UPDATE_PROMPT: Final[str] = (
    f"{ROLE}{INPUTS}{NODE_RULES}{INSERT_CRITERIA}{OPERATION_RULES}"
    f"{EDGE_RULES}{OUTPUT_FORMAT}{TURN}"
)

RETRY_NOTE: Final[str] = (
    "\n\nYour previous answer was rejected: {error}\n"
    "Answer again with ONLY valid JSON following the format above."
)

_PLACEHOLDER_RE = re.compile(re.escape(GRAPH_PLACEHOLDER) + "|" + re.escape(STEP_PLACEHOLDER))


def render_graph_prompt(
    graph_mermaid: str, current_step: str, feedback: str | None = None
) -> str:
    """Sustituye grafo y paso en la plantilla; añade el error previo si lo hay."""
    values = {GRAPH_PLACEHOLDER: graph_mermaid.strip(), STEP_PLACEHOLDER: current_step}
    # Una sola pasada: el contenido sustituido nunca se vuelve a interpretar.
    prompt = _PLACEHOLDER_RE.sub(lambda m: values[m.group(0)], GRAPH_UPDATE_PROMPT)
    if feedback:
        prompt += RETRY_NOTE.format(error=feedback)
    return prompt


def validate_prompts() -> None:
    """Valida que la plantilla contiene cada marcador exactamente una vez."""
    for placeholder in (GRAPH_PLACEHOLDER, STEP_PLACEHOLDER):
        if GRAPH_UPDATE_PROMPT.count(placeholder) != 1:
            raise ValueError(f"La plantilla debe contener {placeholder} una sola vez.")


# Auto-validación al importar el módulo
validate_prompts()
