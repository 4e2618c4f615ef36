#!/usr/bin/env python3
"""Regenerate the scripted transcript fixtures from the shipped corpora.

Three variants per task in the suite:
  golden/          full procedure, every action valid, ends with a Final Answer
  corrupted_first/ same, but the first turn tries to start scanning on a fresh
                   robot (precondition violation), then recovers
  no_final/        fifteen query_state turns and no Final (forces a timeout)

Run from the repository root: python scripts/build_fixture_transcripts.py
"""
from __future__ import annotations

import json
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "src" / "sonopilot" / "data"
TRANSCRIPTS = DATA / "transcripts"

REGION_TO_PROCEDURE = {
    "neck": "thyroid_scan",
    "abdomen_liver": "liver_scan",
    "abdomen_gallbladder": "gallbladder_scan",
    "abdomen_kidney": "kidney_scan",
    "neck_carotid": "carotid_scan",
    "chest_cardiac": "cardiac_scan",
}


def load_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def action_text(thought: str, api_name: str, args: dict) -> str:
    return f"Thought: {thought}\nAction: {api_name}\nAction Input: {json.dumps(args, sort_keys=True)}"


def step_thought(step: dict, procedure: dict) -> str:
    region = procedure["steps"][1]["args"]["region"]
    title = procedure["title"].lower()
    by_api = {
        "select_probe": f"This is a {title}, so I need the {step['args'].get('probe_type', '')} probe.",
        "apply_gel": f"Coupling gel must go on the {region} before scanning.",
        "move_probe": f"Now position the probe at the {region}.",
        "set_contact_force": "A contact force of 5 N sits inside the safe scanning band.",
        "start_scan": f"Everything is prepared, begin the {step['args'].get('pattern', '')} sweep.",
        "capture_image": "The scan is running, capture a frame for the report.",
        "stop_scan": "Coverage is sufficient, end the sweep.",
    }
    return by_api[step["api_name"]]


def golden_turns(procedure: dict) -> list[str]:
    turns = [action_text(step_thought(step, procedure), step["api_name"], step["args"]) for step in procedure["steps"]]
    region = procedure["steps"][1]["args"]["region"]
    turns.append(
        "Thought: Coverage reached 0.90 with a quality image and the scan is stopped.\n"
        f"Final Answer: Completed the {procedure['title'].lower()}: {region} covered with a high quality image."
    )
    return turns


def corrupted_turns(procedure: dict) -> list[str]:
    pattern = procedure["steps"][4]["args"]["pattern"]
    bad_first = action_text("I will begin scanning immediately.", "start_scan", {"pattern": pattern})
    return [bad_first] + golden_turns(procedure)


def no_final_turns() -> list[str]:
    turn = action_text("Checking the robot status before deciding.", "query_state", {})
    return [turn] * 15


def write_transcript(path: Path, turns: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for index, text in enumerate(turns):
            fh.write(json.dumps({"turn_index": index, "text": text}) + "\n")


def main() -> None:
    procedures = {p["task_id"]: p for p in load_jsonl(DATA / "handbook.jsonl")}
    tasks = load_jsonl(DATA / "tasks.jsonl")
    for task in tasks:
        procedure = procedures[REGION_TO_PROCEDURE[task["region"]]]
        write_transcript(TRANSCRIPTS / "golden" / f"{task['task_id']}.jsonl", golden_turns(procedure))
        write_transcript(TRANSCRIPTS / "corrupted_first" / f"{task['task_id']}.jsonl", corrupted_turns(procedure))
        write_transcript(TRANSCRIPTS / "no_final" / f"{task['task_id']}.jsonl", no_final_turns())
    print(f"wrote transcripts for {len(tasks)} tasks under {TRANSCRIPTS}")


if __name__ == "__main__":
    main()
