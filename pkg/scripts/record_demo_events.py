#!/usr/bin/env python3
"""Record session-service event logs used as frontend test fixtures.

Two logs are written to frontend/tests/fixtures/:
  thyroid_events.json    a full thyroid demo session streamed through the
                         HTTP service
  injection_events.json  the same session with a second instruction injected
                         after turn 3, stepped deterministically and rendered
                         through the same event builders the service uses

Run from the repository root: python scripts/record_demo_events.py
"""
from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from sonopilot.agent_executor import AgentSession
from sonopilot.knowledge_base import load_corpora
from sonopilot.llm_interface import Action, ParsedTurn, ScriptedBackend
from sonopilot.robot_sim import BodyRegion, ScanTask
from sonopilot.session_service import create_app, state_event, summary_event, turn_event

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "src" / "sonopilot" / "data"
OUT = ROOT / "frontend" / "tests" / "fixtures"
TRANSCRIPT = DATA / "transcripts" / "golden" / "t01_thyroid.jsonl"
INSTRUCTION = "scan the patient's thyroid"


def record_live_session() -> list[dict]:
    kb = load_corpora(DATA / "apis.jsonl", DATA / "handbook.jsonl")
    events: list[dict] = []
    with TestClient(create_app(kb)) as client:
        response = client.post("/sessions", json={"backend": f"scripted:{TRANSCRIPT}", "region": "neck"})
        session_id = response.json()["id"]
        client.post(f"/sessions/{session_id}/instructions", json={"text": INSTRUCTION})
        with client.stream("GET", f"/sessions/{session_id}/events") as stream:
            for line in stream.iter_lines():
                if line.startswith("data: "):
                    events.append(json.loads(line[len("data: "):]))
    return events


def record_injected_session() -> list[dict]:
    kb = load_corpora(DATA / "apis.jsonl", DATA / "handbook.jsonl")
    session = AgentSession(
        ScanTask(INSTRUCTION, BodyRegion.NECK), kb, ScriptedBackend.from_path(TRANSCRIPT)
    )
    events: list[dict] = []
    injected_after = 3
    while not session.finished:
        turn = session.step()
        assert turn is not None
        events.append(turn_event(len(events), turn))
        if isinstance(turn.parsed, ParsedTurn) and isinstance(turn.parsed.payload, Action):
            events.append(state_event(len(events), session.robot.state, "running"))
        if turn.index == injected_after:
            session.inject_instruction("use light pressure please")
    state = "awaiting_instruction" if session.trace().status.value == "completed" else "finished"
    events.append(summary_event(len(events), session.trace(), state))
    return events


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    live = record_live_session()
    (OUT / "thyroid_events.json").write_text(json.dumps(live, indent=1) + "\n")
    injected = record_injected_session()
    (OUT / "injection_events.json").write_text(json.dumps(injected, indent=1) + "\n")
    print(f"thyroid_events.json: {len(live)} events")
    print(f"injection_events.json: {len(injected)} events")


if __name__ == "__main__":
    main()
