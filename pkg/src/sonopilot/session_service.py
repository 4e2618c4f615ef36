"""HTTP service exposing interactive agent sessions for the operator console.

REST surface:
    POST   /sessions                      create a session (201 -> {id})
    POST   /sessions/{id}/instructions    send an instruction; starts/resumes
    GET    /sessions/{id}/events          server-sent event stream
    GET    /sessions/{id}/state           current robot digest + trace so far
    DELETE /sessions/{id}                 teardown

Events are SSE frames whose data is JSON {type, seq, payload} with type one of
"turn" (one per executor turn), "state" (robot snapshot after each action),
and "summary" (episode finished). Subscribers first receive a backfill of all
prior events, then live events in order; the stream closes after a summary
once the episode is over. A session whose episode completed normally moves to
awaiting_instruction and can be resumed by posting another instruction (a new
subscription streams the continuation); aborted or timed-out sessions are
finished and answer 409 to further instructions.

Sessions live in memory; each runs its executor on its own thread and owns its
robot, so concurrent sessions are fully isolated. With a trace directory
configured, each finished episode is appended to <dir>/<session_id>.jsonl.
"""

from __future__ import annotations

import json
import threading
import uuid
from enum import Enum
from pathlib import Path
from typing import Iterator

from fastapi import FastAPI, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .agent_executor import (
    AgentSession,
    ExecutorConfig,
    SessionFinishedError,
    TraceStatus,
    Turn,
    state_to_json,
    trace_to_json,
    turn_to_json,
)
from .eval_harness import SuiteError, SuiteTask, parse_backend_spec
from .knowledge_base import KnowledgeBase
from .llm_interface import GenerationParams, ParsedTurn, Action
from .robot_sim import BodyRegion, ScanTask, state_digest


class SessionState(str, Enum):
    IDLE = "idle"
    RUNNING = "running"
    AWAITING_INSTRUCTION = "awaiting_instruction"
    FINISHED = "finished"


class CreateSessionRequest(BaseModel):
    backend: str
    region: str = "neck"
    max_iters: int = Field(default=15, ge=1)
    k_api: int = Field(default=5, ge=1)
    k_handbook: int = Field(default=1, ge=1)
    max_consecutive_parse_failures: int = Field(default=2, ge=1)
    temperature: float = Field(default=0.7, ge=0.0)
    top_p: float = Field(default=0.95, gt=0.0, le=1.0)
    max_tokens: int = Field(default=512, ge=1)
    use_uar: bool = True
    use_rhr: bool = True


class InstructionRequest(BaseModel):
    text: str


def turn_event(seq: int, turn: Turn) -> dict:
    return {"type": "turn", "seq": seq, "payload": turn_to_json(turn)}


def state_event(seq: int, robot_state, session_state: str) -> dict:
    return {
        "type": "state",
        "seq": seq,
        "payload": {
            "digest": state_digest(robot_state),
            "state": state_to_json(robot_state),
            "session_state": session_state,
        },
    }


def summary_event(seq: int, trace, session_state: str) -> dict:
    return {
        "type": "summary",
        "seq": seq,
        "payload": {
            "status": trace.status.value if trace.status else "running",
            "first_step_ok": trace.first_step_ok,
            "overall_ok": trace.overall_ok,
            "turn_count": len(trace.turns),
            "abort_reason": trace.abort_reason,
            "session_state": session_state,
        },
    }


class SessionRuntime:
    """One live session: the agent, its event log, and its executor thread."""

    def __init__(self, session_id: str, kb: KnowledgeBase, request: CreateSessionRequest, trace_dir: Path | None):
        self.id = session_id
        self.kb = kb
        self.trace_dir = trace_dir
        self.region = BodyRegion(request.region)
        self.backend_spec = request.backend
        self.backend_factory = parse_backend_spec(request.backend)
        self.config = ExecutorConfig(
            max_iters=request.max_iters,
            k_api=request.k_api,
            k_handbook=request.k_handbook,
            max_consecutive_parse_failures=request.max_consecutive_parse_failures,
            generation=GenerationParams(
                temperature=request.temperature,
                top_p=request.top_p,
                max_tokens=request.max_tokens,
            ),
            use_uar=request.use_uar,
            use_rhr=request.use_rhr,
        )
        self.state = SessionState.IDLE
        self.agent: AgentSession | None = None
        self.events: list[dict] = []
        self.cond = threading.Condition()
        self.deleted = False
        self._thread: threading.Thread | None = None

    # -- event log --------------------------------------------------------

    def _append(self, build) -> None:
        """Append one event; must hold self.cond."""
        self.events.append(build(len(self.events)))
        self.cond.notify_all()

    # -- lifecycle ----------------------------------------------------------

    def post_instruction(self, text: str) -> dict:
        with self.cond:
            if self.deleted or self.state is SessionState.FINISHED:
                raise SessionFinishedError("session is finished")
            if self.state is SessionState.IDLE:
                backend = self.backend_factory(SuiteTask("session", text, self.region), 0)
                self.agent = AgentSession(
                    ScanTask(text, self.region), self.kb, backend, config=self.config
                )
                self.state = SessionState.RUNNING
                self._start_thread()
                return {"acknowledged": True, "instruction_index": 1, "session_state": self.state.value}
            assert self.agent is not None
            if self.state is SessionState.AWAITING_INSTRUCTION:
                index = self.agent.resume(text)
                self.state = SessionState.RUNNING
                self._start_thread()
            else:
                index = self.agent.inject_instruction(text)
            return {"acknowledged": True, "instruction_index": index, "session_state": self.state.value}

    def _start_thread(self) -> None:
        self._thread = threading.Thread(target=self._run_episode, daemon=True)
        self._thread.start()

    def _run_episode(self) -> None:
        assert self.agent is not None
        agent = self.agent
        while True:
            with self.cond:
                if self.deleted or agent.finished:
                    break
            turn = None
            with self.cond:
                try:
                    turn = agent.step()
                except SessionFinishedError:
                    break
                if turn is not None:
                    self._append(lambda seq: turn_event(seq, turn))
                    if isinstance(turn.parsed, ParsedTurn) and isinstance(turn.parsed.payload, Action):
                        self._append(lambda seq: state_event(seq, agent.robot.state, self.state.value))
        with self.cond:
            if self.deleted:
                return
            trace = agent.trace()
            self.state = (
                SessionState.AWAITING_INSTRUCTION
                if trace.status is TraceStatus.COMPLETED
                else SessionState.FINISHED
            )
            self._append(lambda seq: summary_event(seq, trace, self.state.value))
        self._persist_trace()

    def _persist_trace(self) -> None:
        if self.trace_dir is None or self.agent is None:
            return
        self.trace_dir.mkdir(parents=True, exist_ok=True)
        with (self.trace_dir / f"{self.id}.jsonl").open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(trace_to_json(self.agent.trace())) + "\n")

    def snapshot(self) -> dict:
        with self.cond:
            if self.agent is None:
                robot_state = None
                digest = None
                trace = None
            else:
                robot_state = state_to_json(self.agent.robot.state)
                digest = state_digest(self.agent.robot.state)
                trace = trace_to_json(self.agent.trace())
            return {
                "id": self.id,
                "session_state": self.state.value,
                "robot_digest": digest,
                "robot_state": robot_state,
                "trace": trace,
            }

    def teardown(self) -> None:
        with self.cond:
            self.deleted = True
            self.cond.notify_all()

    # -- streaming -----------------------------------------------------------

    def stream(self) -> Iterator[str]:
        """Yield SSE frames: full backfill, then live events until the episode
        summary. Waits when the executor is still producing events."""
        cursor = 0
        while True:
            with self.cond:
                while cursor >= len(self.events) and not self.deleted and self.state is SessionState.RUNNING:
                    self.cond.wait(timeout=0.1)
                if self.deleted:
                    return
                batch = self.events[cursor:]
                idle_now = self.state is not SessionState.RUNNING
            for event in batch:
                yield f"data: {json.dumps(event)}\n\n"
                cursor += 1
                if event["type"] == "summary":
                    with self.cond:
                        if cursor >= len(self.events) and self.state is not SessionState.RUNNING:
                            return
            if idle_now and cursor >= len(self.events):
                with self.cond:
                    if self.state is not SessionState.RUNNING and cursor >= len(self.events):
                        if self.state is SessionState.IDLE:
                            # nothing will happen until an instruction arrives
                            self.cond.wait(timeout=0.1)
                            continue
                        return


def create_app(kb: KnowledgeBase, trace_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="sonopilot session service")
    # the console may be served from another origin; the service carries no
    # credentials, so a permissive policy is fine at desk scale
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])
    sessions: dict[str, SessionRuntime] = {}
    registry_lock = threading.Lock()
    trace_path = Path(trace_dir) if trace_dir is not None else None

    def get_session(session_id: str) -> SessionRuntime | None:
        with registry_lock:
            return sessions.get(session_id)

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        try:
            parse_backend_spec(request.backend)
            BodyRegion(request.region)
            runtime = SessionRuntime(uuid.uuid4().hex, kb, request, trace_path)
        except (SuiteError, ValueError) as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        with registry_lock:
            sessions[runtime.id] = runtime
        return {"id": runtime.id}

    @app.post("/sessions/{session_id}/instructions")
    def post_instruction(session_id: str, request: InstructionRequest):
        runtime = get_session(session_id)
        if runtime is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        if not request.text.strip():
            return JSONResponse(status_code=400, content={"detail": "instruction text must be non-empty"})
        try:
            return runtime.post_instruction(request.text)
        except SessionFinishedError as exc:
            return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str):
        runtime = get_session(session_id)
        if runtime is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        return StreamingResponse(
            runtime.stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache"},
        )

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        runtime = get_session(session_id)
        if runtime is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        return runtime.snapshot()

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        with registry_lock:
            runtime = sessions.pop(session_id, None)
        if runtime is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        runtime.teardown()
        return Response(status_code=204)

    return app
