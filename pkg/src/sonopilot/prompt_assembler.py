"""Assembly of the assistant prompt from instructions, retrieval, and history.

Format reference
----------------
A rendered prompt is six sections in fixed order, joined by blank lines:

    ### SYSTEM            fixed preamble, includes the output grammar verbatim
    ### AVAILABLE APIS    retrieved catalog entries, rank order, each once
    ### HANDBOOK          retrieved procedures with their steps
    ### TASK              every doctor instruction so far, newest marked
    ### HISTORY           prior turns as Thought/Action/Observation records
    Thought:              the literal response cue, always the last line

Untrusted text (doctor instructions, observation text, corpus narratives, and
unparseable model output) is contained in quoted blocks: every line of it is
prefixed with "| ". The prefix is the whole escaping rule; nothing is removed
from the text, and no contained line can collide with section headers, turn
markers, or the response cue, which all start at column zero. Rendering is
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .knowledge_base import ApiCatalogEntry, HandbookProcedure, RetrievedContext
from .apispec import render_param
from .llm_interface import GRAMMAR_INSTRUCTIONS

RESPONSE_CUE = "Thought:"

SYSTEM_PREAMBLE = (
    "### SYSTEM\n"
    "You are the control agent of an ultrasound scanning robot. A doctor gives\n"
    "you instructions; you carry them out by calling the robot apis listed\n"
    "below, one call per turn, observing the result after each call. Prepare\n"
    "the patient and the probe before scanning, keep the contact force inside\n"
    "the safe band, and stop the scan when the region is covered.\n"
    "\n" + GRAMMAR_INSTRUCTIONS
)


def quote_block(text: str) -> str:
    """Contain untrusted text: prefix every line with '| '."""
    return "\n".join("| " + line for line in text.split("\n"))


@dataclass(frozen=True)
class DoctorInstruction:
    text: str
    issued_at_turn: int = 0

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("instruction text must be non-empty")
        if self.issued_at_turn < 0:
            raise ValueError("issued_at_turn must be >= 0")


@dataclass(frozen=True)
class HistoryTurn:
    """Neutral view of one past turn, as the assembler renders it."""

    kind: str  # "action" | "final" | "parse_failure"
    thought: str = ""
    action_name: str = ""
    action_args: Mapping[str, object] | None = None
    final_summary: str = ""
    raw_output: str = ""
    observation_ok: bool | None = None
    observation_text: str | None = None
    observation_digest: str | None = None


@dataclass(frozen=True)
class AssembledPrompt:
    """Rendered prompt sections in their fixed order."""

    system_preamble: str
    available_apis: str
    handbook_excerpt: str
    task: str
    history: str
    response_cue: str = RESPONSE_CUE

    @property
    def sections(self) -> tuple[str, ...]:
        return (
            self.system_preamble,
            self.available_apis,
            self.handbook_excerpt,
            self.task,
            self.history,
            self.response_cue,
        )

    @property
    def text(self) -> str:
        return "\n\n".join(self.sections)

    @property
    def length(self) -> int:
        """Total rendered length in characters, for budget enforcement."""
        return len(self.text)

    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def _render_api(rank: int, entry: ApiCatalogEntry) -> str:
    if entry.param_schema:
        params = "; ".join(render_param(spec) for spec in entry.param_schema)
    else:
        params = "(none)"
    return f"[{rank}] {entry.name}\n    params: {params}\n    usage:\n{quote_block(entry.usage)}"


def _render_procedure(rank: int, procedure: HandbookProcedure) -> str:
    lines = [f"[{rank}] {procedure.title} (id {procedure.task_id})", "    steps:"]
    for n, step in enumerate(procedure.steps, start=1):
        args_json = json.dumps(dict(step.args), sort_keys=True)
        lines.append(f"      {n}. {step.api_name} {args_json}")
    if procedure.notes:
        lines.append("    notes:")
        lines.append(quote_block(procedure.notes))
    return "\n".join(lines)


def _render_task(instructions: Sequence[DoctorInstruction]) -> str:
    lines = ["### TASK"]
    for n, instruction in enumerate(instructions, start=1):
        marker = " (newest)" if n == len(instructions) else ""
        lines.append(f"[{n}]{marker}")
        lines.append(quote_block(instruction.text))
    return "\n".join(lines)


def _render_observation(turn: HistoryTurn) -> list[str]:
    if turn.observation_text is None:
        return []
    status = "ok" if turn.observation_ok else "failed"
    lines = [f"Observation ({status}):", quote_block(turn.observation_text)]
    if turn.observation_digest is not None:
        lines.append(quote_block(turn.observation_digest))
    return lines


def _render_history_turn(index: int, turn: HistoryTurn) -> str:
    lines = [f"--- turn {index} ---"]
    if turn.kind == "parse_failure":
        lines.append("The model output for this turn was not in the required format:")
        lines.append(quote_block(turn.raw_output))
    elif turn.kind == "final":
        lines.append(f"Thought: {turn.thought}")
        lines.append(f"Final Answer: {turn.final_summary}")
    else:
        args_json = json.dumps(dict(turn.action_args or {}), sort_keys=True)
        lines.append(f"Thought: {turn.thought}")
        lines.append(f"Action: {turn.action_name}")
        lines.append(f"Action Input: {args_json}")
    lines.extend(_render_observation(turn))
    return "\n".join(lines)


def assemble(
    instructions: Sequence[DoctorInstruction],
    context: RetrievedContext,
    history: Sequence[HistoryTurn] = (),
) -> AssembledPrompt:
    """Build the prompt for the next turn. Requires at least one instruction;
    empty retrieval renders explicit placeholders rather than missing sections."""
    if not instructions:
        raise ValueError("at least one instruction is required")

    seen: set[str] = set()
    unique_apis: list[ApiCatalogEntry] = []
    for entry in context.apis:
        if entry.name not in seen:
            seen.add(entry.name)
            unique_apis.append(entry)

    if unique_apis:
        api_blocks = [_render_api(n, entry) for n, entry in enumerate(unique_apis, start=1)]
        available_apis = "### AVAILABLE APIS\n" + "\n".join(api_blocks)
    else:
        available_apis = "### AVAILABLE APIS\n(no relevant api entries retrieved)"

    if context.procedures:
        procedure_blocks = [_render_procedure(n, p) for n, p in enumerate(context.procedures, start=1)]
        handbook_excerpt = "### HANDBOOK\n" + "\n".join(procedure_blocks)
    else:
        handbook_excerpt = "### HANDBOOK\n(no relevant handbook entries retrieved)"

    if history:
        turn_blocks = [_render_history_turn(n, turn) for n, turn in enumerate(history, start=1)]
        history_text = "### HISTORY\n" + "\n".join(turn_blocks)
    else:
        history_text = "### HISTORY\n(no turns yet)"

    return AssembledPrompt(
        system_preamble=SYSTEM_PREAMBLE,
        available_apis=available_apis,
        handbook_excerpt=handbook_excerpt,
        task=_render_task(instructions),
        history=history_text,
    )
