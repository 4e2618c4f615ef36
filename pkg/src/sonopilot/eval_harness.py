"""Evaluation harness: retrieval recall tables and execution success tables.

Retrieval evaluation reports Recall@k per retrieval module (UAR over the api
index, RHR over the handbook index), one row per module and one column per k.
Execution evaluation runs every task in a suite for a number of repetitions
and reports first-step success (FS: the first attempted call parsed and
executed cleanly) and overall success (OV: the episode completed and the task
predicate holds), as percentages over tasks x repetitions.

Repetition r passes seed + r to backends that accept a seed; the scripted
backend is fully deterministic and ignores it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .agent_executor import ExecutionTrace, ExecutorConfig, TraceStatus, run_task
from .knowledge_base import KnowledgeBase, load_eval_cases
from .llm_interface import Backend, BackendError, RemoteChatBackend, ScriptedBackend
from .robot_sim import BodyRegion, ScanTask, UltrasoundRobot
from .vector_index import recall_at_k

DEFAULT_KS = (1, 3, 10)
DEFAULT_REPETITIONS = 20


class SuiteError(Exception):
    """A task suite or backend spec could not be used."""


class BackendUnreachableError(BackendError):
    """The evaluation backend could not be reached; partial results discarded."""


@dataclass(frozen=True)
class SuiteTask:
    task_id: str
    instruction: str
    region: BodyRegion

    def scan_task(self) -> ScanTask:
        return ScanTask(self.instruction, self.region)


@dataclass(frozen=True)
class TaskStats:
    task_id: str
    runs: int
    fs_successes: int
    ov_successes: int


@dataclass(frozen=True)
class ExecutionSuiteResult:
    label: str
    fs_percent: float
    ov_percent: float
    repetitions: int
    per_task: tuple[TaskStats, ...]

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "fs_percent": self.fs_percent,
            "ov_percent": self.ov_percent,
            "repetitions": self.repetitions,
            "per_task": [
                {
                    "task_id": stats.task_id,
                    "runs": stats.runs,
                    "fs_successes": stats.fs_successes,
                    "ov_successes": stats.ov_successes,
                }
                for stats in self.per_task
            ],
        }


# ---------------------------------------------------------------------------
# Table rendering (text / json / csv)
# ---------------------------------------------------------------------------


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))).rstrip(),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines)


def render_csv(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(headers)
    writer.writerows(rows)
    return buffer.getvalue().rstrip("\n")


def render_rows(headers: Sequence[str], rows: Sequence[Sequence[str]], fmt: str) -> str:
    if fmt == "table":
        return render_table(headers, rows)
    if fmt == "csv":
        return render_csv(headers, rows)
    if fmt == "json":
        return json.dumps([dict(zip(headers, row)) for row in rows], indent=2)
    raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# Retrieval evaluation (recall table, one row per module)
# ---------------------------------------------------------------------------


def eval_retrieval(
    kb: KnowledgeBase,
    queries_path: str | Path,
    ks: Sequence[int] = DEFAULT_KS,
) -> tuple[list[str], list[list[str]]]:
    """Recall@k rows for the UAR and RHR modules; returns (headers, rows)."""
    cases = load_eval_cases(queries_path)
    headers = ["Module", "Model"] + [f"Recall@{k}" for k in ks]
    rows = []
    for module, index, module_cases in (
        ("UAR", kb.api_index, cases["api"]),
        ("RHR", kb.handbook_index, cases["handbook"]),
    ):
        if not module_cases:
            raise SuiteError(f"{queries_path}: no queries target the {module} module")
        row = [module, kb.embedder.label]
        for k in ks:
            row.append(f"{recall_at_k(index, module_cases, kb.embedder, k):.2f}")
        rows.append(row)
    return headers, rows


# ---------------------------------------------------------------------------
# Execution evaluation (FS / OV over repeated runs)
# ---------------------------------------------------------------------------


def load_suite(path: str | Path) -> list[SuiteTask]:
    path = Path(path)
    tasks = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                tasks.append(
                    SuiteTask(
                        task_id=str(record["task_id"]),
                        instruction=str(record["instruction"]),
                        region=BodyRegion(str(record["region"])),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise SuiteError(f"{path}:{line_no}: bad task record: {exc}") from exc
    if not tasks:
        raise SuiteError(f"{path}: task suite is empty")
    return tasks


BackendFactory = Callable[[SuiteTask, int], Backend]


def parse_backend_spec(spec: str) -> BackendFactory:
    """Turn 'scripted:<path>' or 'remote:<endpoint>' into a backend factory.

    For scripted specs the path may be a directory holding one transcript per
    task (<task_id>.jsonl) or a single transcript file used for every task.
    """
    kind, _, rest = spec.partition(":")
    if kind == "scripted":
        if not rest:
            raise SuiteError("scripted backend spec needs a path: scripted:<path>")
        root = Path(rest)
        if not root.exists():
            raise SuiteError(f"scripted transcript path does not exist: {root}")

        def scripted_factory(task: SuiteTask, seed: int) -> Backend:
            path = root / f"{task.task_id}.jsonl" if root.is_dir() else root
            if not path.exists():
                raise SuiteError(f"no transcript for task {task.task_id!r} at {path}")
            return ScriptedBackend.from_path(path)

        return scripted_factory
    if kind == "remote":
        if not rest:
            raise SuiteError("remote backend spec needs an endpoint: remote:<url>")

        def remote_factory(task: SuiteTask, seed: int) -> Backend:
            return RemoteChatBackend(rest, seed=seed)

        return remote_factory
    raise SuiteError(f"unknown backend spec {spec!r} (expected scripted:<path> or remote:<endpoint>)")


def condition_label(backend_name: str, use_uar: bool, use_rhr: bool) -> str:
    parts = [backend_name]
    if use_uar:
        parts.append("UAR")
    if use_rhr:
        parts.append("RHR")
    return " + ".join(parts)


def eval_execution(
    kb: KnowledgeBase,
    suite_path: str | Path,
    backend_spec: str,
    repetitions: int = DEFAULT_REPETITIONS,
    seed: int = 0,
    config: ExecutorConfig | None = None,
    trace_sink: Callable[[str, int, ExecutionTrace], None] | None = None,
) -> ExecutionSuiteResult:
    """Run the whole suite ``repetitions`` times and aggregate FS / OV."""
    if repetitions < 1:
        raise SuiteError("repetitions must be >= 1")
    tasks = load_suite(suite_path)
    config = config or ExecutorConfig()
    factory = parse_backend_spec(backend_spec)

    counts = {task.task_id: [0, 0, 0] for task in tasks}  # runs, fs, ov
    backend_name = "backend"
    for rep in range(repetitions):
        for task in tasks:
            backend = factory(task, seed + rep)
            backend_name = getattr(backend, "label", backend_name).split(":")[0]
            trace = run_task(task.scan_task(), kb, UltrasoundRobot(), backend, config)
            if trace.status is TraceStatus.ABORTED_BACKEND and "TransportError" in (trace.abort_reason or ""):
                raise BackendUnreachableError(
                    f"backend unreachable while running {task.task_id!r}: {trace.abort_reason}"
                )
            stats = counts[task.task_id]
            stats[0] += 1
            stats[1] += int(trace.first_step_ok)
            stats[2] += int(trace.overall_ok)
            if trace_sink is not None:
                trace_sink(task.task_id, rep, trace)

    per_task = tuple(TaskStats(task.task_id, *counts[task.task_id]) for task in tasks)
    total_runs = sum(stats.runs for stats in per_task)
    fs_percent = 100.0 * sum(s.fs_successes for s in per_task) / total_runs
    ov_percent = 100.0 * sum(s.ov_successes for s in per_task) / total_runs
    return ExecutionSuiteResult(
        label=condition_label(backend_name, config.use_uar, config.use_rhr),
        fs_percent=fs_percent,
        ov_percent=ov_percent,
        repetitions=repetitions,
        per_task=per_task,
    )


def execution_result_rows(results: Sequence[ExecutionSuiteResult]) -> tuple[list[str], list[list[str]]]:
    """Rows in the ablation-table shape: condition label plus FS / OV columns."""
    headers = ["Type", "Module", "FS (%)", "OV (%)"]
    rows = []
    for result in results:
        kind = "Ablation" if ("UAR" not in result.label or "RHR" not in result.label) else "Full"
        rows.append([kind, result.label, f"{result.fs_percent:.0f}", f"{result.ov_percent:.0f}"])
    return headers, rows


# ---------------------------------------------------------------------------
# Single-run convenience
# ---------------------------------------------------------------------------


def format_trace(trace: ExecutionTrace) -> str:
    """Human-readable turn-by-turn rendering of one trace."""
    from .agent_executor import ParseFailure
    from .llm_interface import Final

    lines = [f"task: {trace.task.instruction!r} (region {trace.task.region.value})"]
    for turn in trace.turns:
        lines.append(f"turn {turn.index}:")
        if isinstance(turn.parsed, ParseFailure):
            lines.append(f"  [unparseable output: {turn.parsed.error_kind}] {turn.parsed.detail}")
        elif isinstance(turn.parsed.payload, Final):
            lines.append(f"  thought: {turn.parsed.thought}")
            lines.append(f"  final answer: {turn.parsed.payload.summary}")
        else:
            lines.append(f"  thought: {turn.parsed.thought}")
            args = json.dumps(dict(turn.parsed.payload.args), sort_keys=True)
            lines.append(f"  action: {turn.parsed.payload.api_name} {args}")
        if turn.observation is not None:
            marker = "ok" if turn.observation.ok else "FAILED"
            lines.append(f"  observation ({marker}): {turn.observation.text}")
    status = trace.status.value if trace.status else "running"
    lines.append(
        f"status: {status}  first_step_ok: {trace.first_step_ok}  overall_ok: {trace.overall_ok}"
    )
    if trace.abort_reason:
        lines.append(f"abort reason: {trace.abort_reason}")
    return "\n".join(lines)


def run_once(
    kb: KnowledgeBase,
    instruction: str,
    region: BodyRegion,
    backend: Backend,
    config: ExecutorConfig | None = None,
) -> ExecutionTrace:
    """Run a single ad-hoc task; callers render with format_trace/serialize_trace."""
    return run_task(ScanTask(instruction, region), kb, UltrasoundRobot(), backend, config)
