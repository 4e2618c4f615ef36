"""The dynamic execution loop: retrieve, assemble, generate, parse, act, observe.

Each iteration recomputes retrieval from the newest doctor instruction, so an
instruction injected mid-session changes what the next prompt contains. Parse
failures are fed back to the model as observations for self-correction; the
loop aborts only after a configurable number of consecutive failures, on an
unknown api name (catalog drift), or on a backend error. The loop never runs
more than ``max_iters`` turns per episode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

from .knowledge_base import KnowledgeBase, RetrievedContext
from .llm_interface import (
    Action,
    Backend,
    BackendError,
    Final,
    GenerationParams,
    ParsedTurn,
    TurnParseError,
    UnknownApiParseError,
    parse_turn,
)
from .prompt_assembler import AssembledPrompt, DoctorInstruction, HistoryTurn, assemble
from .robot_sim import ApiCall, Observation, ScanTask, UltrasoundRobot, UnknownApiError, state_digest


@dataclass(frozen=True)
class ExecutorConfig:
    max_iters: int = 15
    k_api: int = 5
    k_handbook: int = 1
    max_consecutive_parse_failures: int = 2
    generation: GenerationParams = field(default_factory=GenerationParams)
    use_uar: bool = True
    use_rhr: bool = True

    def __post_init__(self) -> None:
        for name in ("max_iters", "k_api", "k_handbook", "max_consecutive_parse_failures"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ParseFailure:
    """Recorded in place of a parsed turn when model output did not parse."""

    error_kind: str
    detail: str
    raw: str


@dataclass(frozen=True)
class Turn:
    index: int
    instructions: tuple[str, ...]
    retrieved: RetrievedContext
    prompt_digest: str
    parsed: Union[ParsedTurn, ParseFailure]
    observation: Observation | None


class TraceStatus(str, Enum):
    COMPLETED = "completed"
    ABORTED_PARSE = "aborted_parse"
    ABORTED_UNKNOWN_API = "aborted_unknown_api"
    ABORTED_BACKEND = "aborted_backend"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class ExecutionTrace:
    task: ScanTask
    turns: tuple[Turn, ...]
    final_state: object
    status: TraceStatus | None
    first_step_ok: bool
    overall_ok: bool
    abort_reason: str | None = None

    @property
    def steps_ok(self) -> bool:
        """Errors-only success: finished cleanly with every action accepted,
        regardless of whether the task goal was reached."""
        return self.status is TraceStatus.COMPLETED and not any(
            turn.observation is not None and not turn.observation.ok
            for turn in self.turns
            if isinstance(turn.parsed, ParsedTurn) and isinstance(turn.parsed.payload, Action)
        )


class SessionFinishedError(Exception):
    """Raised when stepping or injecting into a finished session."""


def _parsed_to_json(parsed: Union[ParsedTurn, ParseFailure]) -> dict:
    if isinstance(parsed, ParseFailure):
        return {
            "kind": "parse_error",
            "error_kind": parsed.error_kind,
            "detail": parsed.detail,
            "raw": parsed.raw,
        }
    if isinstance(parsed.payload, Final):
        return {"kind": "final", "thought": parsed.thought, "summary": parsed.payload.summary}
    return {
        "kind": "action",
        "thought": parsed.thought,
        "api_name": parsed.payload.api_name,
        "args": dict(parsed.payload.args),
    }


def _observation_to_json(observation: Observation | None) -> dict | None:
    if observation is None:
        return None
    return {"ok": observation.ok, "text": observation.text, "state_digest": observation.state_digest}


def _retrieved_to_json(retrieved: RetrievedContext) -> dict:
    return {
        "api_names": [entry.name for entry in retrieved.apis],
        "api_scores": list(retrieved.api_scores),
        "procedure_ids": [proc.task_id for proc in retrieved.procedures],
        "procedure_scores": list(retrieved.procedure_scores),
    }


def turn_to_json(turn: Turn) -> dict:
    return {
        "index": turn.index,
        "instructions": list(turn.instructions),
        "retrieved": _retrieved_to_json(turn.retrieved),
        "prompt_digest": turn.prompt_digest,
        "parsed": _parsed_to_json(turn.parsed),
        "observation": _observation_to_json(turn.observation),
    }


def state_to_json(state) -> dict:
    return {
        "probe": state.probe.value if state.probe else None,
        "gel_applied": sorted(region.value for region in state.gel_applied),
        "probe_at": state.probe_at.value if state.probe_at else None,
        "probe_angle_deg": state.probe_angle_deg,
        "contact_force_n": state.contact_force_n,
        "scanning": (
            {"region": state.scanning.region.value, "pattern": state.scanning.pattern.value}
            if state.scanning
            else None
        ),
        "images": [
            {"region": image.region.value, "angle_deg": image.angle_deg, "quality": image.quality}
            for image in state.images
        ],
        "coverage": {region.value: value for region, value in sorted(state.coverage.items(), key=lambda kv: kv[0].value)},
        "halted": state.halted,
    }


def trace_to_json(trace: ExecutionTrace) -> dict:
    return {
        "task": {"instruction": trace.task.instruction, "region": trace.task.region.value},
        "status": trace.status.value if trace.status is not None else "running",
        "first_step_ok": trace.first_step_ok,
        "overall_ok": trace.overall_ok,
        "abort_reason": trace.abort_reason,
        "turns": [turn_to_json(turn) for turn in trace.turns],
        "final_state": state_to_json(trace.final_state),
    }


def serialize_trace(trace: ExecutionTrace) -> str:
    return json.dumps(trace_to_json(trace), sort_keys=False)


def _history_view(turn: Turn) -> HistoryTurn:
    obs = turn.observation
    common = dict(
        observation_ok=obs.ok if obs else None,
        observation_text=obs.text if obs else None,
        observation_digest=obs.state_digest if obs else None,
    )
    if isinstance(turn.parsed, ParseFailure):
        return HistoryTurn(kind="parse_failure", raw_output=turn.parsed.raw, **common)
    if isinstance(turn.parsed.payload, Final):
        return HistoryTurn(
            kind="final", thought=turn.parsed.thought, final_summary=turn.parsed.payload.summary, **common
        )
    return HistoryTurn(
        kind="action",
        thought=turn.parsed.thought,
        action_name=turn.parsed.payload.api_name,
        action_args=turn.parsed.payload.args,
        **common,
    )


class AgentSession:
    """A stepwise execution session over one robot.

    ``step()`` runs one iteration; ``inject_instruction`` may be called between
    steps and is picked up by the next turn's retrieval and prompt. After the
    model answers with a Final the episode is complete; ``resume`` appends a
    follow-up instruction and continues on the same robot with a fresh
    iteration budget, recording a new episode.
    """

    def __init__(
        self,
        task: ScanTask,
        kb: KnowledgeBase,
        backend: Backend,
        config: ExecutorConfig | None = None,
        robot: UltrasoundRobot | None = None,
    ):
        self.task = task
        self.kb = kb
        self.backend = backend
        self.config = config or ExecutorConfig()
        self.robot = robot if robot is not None else UltrasoundRobot()
        self.instructions: list[DoctorInstruction] = [DoctorInstruction(task.instruction, issued_at_turn=0)]
        self._episodes: list[list[Turn]] = [[]]
        self._status: TraceStatus | None = None
        self._abort_reason: str | None = None
        self._consecutive_parse_failures = 0

    # -- episode bookkeeping -------------------------------------------------

    @property
    def _turns(self) -> list[Turn]:
        return self._episodes[-1]

    @property
    def turns_total(self) -> int:
        return sum(len(episode) for episode in self._episodes)

    @property
    def finished(self) -> bool:
        return self._status is not None

    @property
    def status(self) -> TraceStatus | None:
        return self._status

    def _all_turns(self) -> list[Turn]:
        return [turn for episode in self._episodes for turn in episode]

    # -- public operations ----------------------------------------------------

    def inject_instruction(self, text: str) -> int:
        """Add a doctor instruction between turns; returns its 1-based index."""
        if self.finished:
            raise SessionFinishedError("cannot inject an instruction into a finished session")
        self.instructions.append(DoctorInstruction(text, issued_at_turn=self.turns_total))
        return len(self.instructions)

    def resume(self, text: str) -> int:
        """Continue a completed session with a follow-up instruction.

        Only valid after a Final (status completed); aborted and timed-out
        sessions stay finished. The robot keeps its state and the prior turns
        stay in the prompt history; the iteration bound applies per episode.
        """
        if self._status is not TraceStatus.COMPLETED:
            raise SessionFinishedError("only a completed session can be resumed")
        self._status = None
        self._abort_reason = None
        self._consecutive_parse_failures = 0
        self._episodes.append([])
        self.instructions.append(DoctorInstruction(text, issued_at_turn=self.turns_total))
        return len(self.instructions)

    def step(self) -> Turn | None:
        """Run one iteration. Returns the recorded turn, or None when the
        backend failed before a turn could be recorded."""
        if self.finished:
            raise SessionFinishedError("session already finished")

        index = len(self._turns) + 1
        latest = self.instructions[-1].text
        retrieved = self.kb.retrieve_context(
            latest,
            k_api=self.config.k_api,
            k_handbook=self.config.k_handbook,
            use_uar=self.config.use_uar,
            use_rhr=self.config.use_rhr,
        )
        prompt = assemble(self.instructions, retrieved, [_history_view(t) for t in self._all_turns()])

        try:
            raw = self.backend.complete(prompt.text, self.config.generation, self.turns_total)
        except BackendError as exc:
            self._status = TraceStatus.ABORTED_BACKEND
            self._abort_reason = f"{type(exc).__name__}: {exc}"
            return None

        turn = self._record(index, retrieved, prompt, raw)
        if self._status is None and len(self._turns) >= self.config.max_iters:
            self._status = TraceStatus.TIMEOUT
        return turn

    def run(self) -> ExecutionTrace:
        while not self.finished:
            self.step()
        return self.trace()

    def trace(self) -> ExecutionTrace:
        """Snapshot of the current episode (status None while still running)."""
        turns = tuple(self._turns)
        return ExecutionTrace(
            task=self.task,
            turns=turns,
            final_state=self.robot.state,
            status=self._status,
            first_step_ok=self._first_step_ok(turns),
            overall_ok=self._overall_ok(turns),
            abort_reason=self._abort_reason,
        )

    # -- internals -------------------------------------------------------------

    def _record(self, index: int, retrieved: RetrievedContext, prompt: AssembledPrompt, raw: str) -> Turn:
        instruction_texts = tuple(instruction.text for instruction in self.instructions)
        try:
            parsed: Union[ParsedTurn, ParseFailure] = parse_turn(raw, self.kb.param_schemas)
        except UnknownApiParseError as exc:
            turn = Turn(index, instruction_texts, retrieved, prompt.digest(), ParseFailure(exc.kind, exc.detail, raw), None)
            self._turns.append(turn)
            self._status = TraceStatus.ABORTED_UNKNOWN_API
            self._abort_reason = exc.detail
            return turn
        except TurnParseError as exc:
            observation = Observation(ok=False, text=exc.remediation, state_digest=self.robot.digest())
            turn = Turn(
                index, instruction_texts, retrieved, prompt.digest(), ParseFailure(exc.kind, exc.detail, raw), observation
            )
            self._turns.append(turn)
            self._consecutive_parse_failures += 1
            if self._consecutive_parse_failures >= self.config.max_consecutive_parse_failures:
                self._status = TraceStatus.ABORTED_PARSE
                self._abort_reason = (
                    f"{self._consecutive_parse_failures} consecutive unparseable model outputs"
                )
            return turn

        self._consecutive_parse_failures = 0
        if isinstance(parsed.payload, Final):
            turn = Turn(index, instruction_texts, retrieved, prompt.digest(), parsed, None)
            self._turns.append(turn)
            self._status = TraceStatus.COMPLETED
            return turn

        call = ApiCall(parsed.payload.api_name, dict(parsed.payload.args))
        try:
            observation = self.robot.execute(call)
        except UnknownApiError as exc:
            # Name passed the catalog check but the simulator refused it:
            # the catalog and the robot surface have drifted apart.
            turn = Turn(
                index,
                instruction_texts,
                retrieved,
                prompt.digest(),
                ParseFailure("unknown_api", str(exc), raw),
                None,
            )
            self._turns.append(turn)
            self._status = TraceStatus.ABORTED_UNKNOWN_API
            self._abort_reason = str(exc)
            return turn
        turn = Turn(index, instruction_texts, retrieved, prompt.digest(), parsed, observation)
        self._turns.append(turn)
        return turn

    @staticmethod
    def _first_step_ok(turns: Sequence[Turn]) -> bool:
        if not turns:
            return False
        first = turns[0]
        return (
            isinstance(first.parsed, ParsedTurn)
            and isinstance(first.parsed.payload, Action)
            and first.observation is not None
            and first.observation.ok
        )

    def _overall_ok(self, turns: Sequence[Turn]) -> bool:
        if self._status is not TraceStatus.COMPLETED:
            return False
        for turn in turns:
            if (
                isinstance(turn.parsed, ParsedTurn)
                and isinstance(turn.parsed.payload, Action)
                and (turn.observation is None or not turn.observation.ok)
            ):
                return False
        return self.robot.task_success(self.task)


def run_task(
    task: ScanTask,
    kb: KnowledgeBase,
    sim: UltrasoundRobot,
    backend: Backend,
    config: ExecutorConfig | None = None,
) -> ExecutionTrace:
    """Run one task to completion on a freshly reset robot."""
    sim.reset()
    session = AgentSession(task, kb, backend, config=config, robot=sim)
    return session.run()


def replay_ok_actions(trace: ExecutionTrace) -> UltrasoundRobot:
    """Re-apply only the accepted actions of a trace to a fresh robot.

    Used to check trace/state consistency: the result must equal the trace's
    final state exactly.
    """
    robot = UltrasoundRobot()
    for turn in trace.turns:
        if (
            isinstance(turn.parsed, ParsedTurn)
            and isinstance(turn.parsed.payload, Action)
            and turn.observation is not None
            and turn.observation.ok
        ):
            robot.execute(ApiCall(turn.parsed.payload.api_name, dict(turn.parsed.payload.args)))
    return robot
