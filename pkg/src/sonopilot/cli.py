"""Command-line interface.

Subcommands: index build, retrieve, run, eval retrieval, eval execution,
serve. Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
The packaged desk-scale corpus is the default corpus directory, so every
subcommand works out of the box.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agent_executor import ExecutorConfig, serialize_trace
from .embedding import EmbedderConfig
from .eval_harness import (
    DEFAULT_KS,
    SuiteError,
    eval_execution,
    eval_retrieval,
    execution_result_rows,
    format_trace,
    parse_backend_spec,
    render_rows,
    run_once,
)
from .knowledge_base import CorpusError, KnowledgeBase, load_corpora
from .llm_interface import BackendError
from .robot_sim import BodyRegion
from .eval_harness import SuiteTask

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

PACKAGED_CORPUS_DIR = Path(__file__).resolve().parent / "data"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_kb(corpus_dir: str) -> KnowledgeBase:
    root = Path(corpus_dir)
    return load_corpora(root / "apis.jsonl", root / "handbook.jsonl", EmbedderConfig())


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _region(value: str) -> BodyRegion:
    try:
        return BodyRegion(value)
    except ValueError:
        valid = ", ".join(r.value for r in BodyRegion)
        raise UsageError(f"unknown region {value!r}; valid regions: {valid}") from None


def _executor_config(args: argparse.Namespace) -> ExecutorConfig:
    return ExecutorConfig(
        max_iters=args.max_iters,
        use_uar=not args.no_uar,
        use_rhr=not args.no_rhr,
    )


def _add_corpus_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--corpus-dir",
        default=str(PACKAGED_CORPUS_DIR),
        help="directory with apis.jsonl and handbook.jsonl (default: packaged corpus)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="sonopilot", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    index_cmd = commands.add_parser("index", help="vector index maintenance")
    index_sub = index_cmd.add_subparsers(dest="index_command", required=True)
    index_build = index_sub.add_parser("build", help="build and persist both vector indices")
    _add_corpus_arg(index_build)
    index_build.add_argument("--out-dir", required=True, help="directory for api.index / handbook.index")

    retrieve_cmd = commands.add_parser("retrieve", help="query the knowledge base")
    retrieve_cmd.add_argument("instruction")
    _add_corpus_arg(retrieve_cmd)
    retrieve_cmd.add_argument("--target", choices=["api", "handbook", "both"], default="both")
    retrieve_cmd.add_argument("--k", type=int, default=5)

    run_cmd = commands.add_parser("run", help="run one task and print the trace")
    run_cmd.add_argument("instruction")
    run_cmd.add_argument("--region", required=True)
    _add_corpus_arg(run_cmd)
    run_cmd.add_argument("--backend", required=True, help="scripted:<path> or remote:<endpoint>")
    run_cmd.add_argument("--max-iters", type=int, default=15)
    run_cmd.add_argument("--no-uar", action="store_true")
    run_cmd.add_argument("--no-rhr", action="store_true")
    run_cmd.add_argument("--json", action="store_true", help="print the trace as JSON instead of text")

    eval_cmd = commands.add_parser("eval", help="evaluation tables")
    eval_sub = eval_cmd.add_subparsers(dest="eval_command", required=True)

    eval_retrieval_cmd = eval_sub.add_parser("retrieval", help="Recall@k table for UAR and RHR")
    _add_corpus_arg(eval_retrieval_cmd)
    eval_retrieval_cmd.add_argument("--queries", default=None, help="queries.jsonl (default: packaged)")
    eval_retrieval_cmd.add_argument("--ks", default=",".join(str(k) for k in DEFAULT_KS))
    eval_retrieval_cmd.add_argument("--format", choices=["table", "json", "csv"], default="table")
    eval_retrieval_cmd.add_argument("--out", default=None)

    eval_execution_cmd = eval_sub.add_parser("execution", help="FS/OV table over repeated runs")
    _add_corpus_arg(eval_execution_cmd)
    eval_execution_cmd.add_argument("--suite", default=None, help="tasks.jsonl (default: packaged)")
    eval_execution_cmd.add_argument("--backend", required=True, help="scripted:<path> or remote:<endpoint>")
    eval_execution_cmd.add_argument("--reps", type=int, default=20)
    eval_execution_cmd.add_argument("--seed", type=int, default=0)
    eval_execution_cmd.add_argument("--max-iters", type=int, default=15)
    eval_execution_cmd.add_argument("--no-uar", action="store_true")
    eval_execution_cmd.add_argument("--no-rhr", action="store_true")
    eval_execution_cmd.add_argument("--format", choices=["table", "json", "csv"], default="table")
    eval_execution_cmd.add_argument("--out", default=None)

    serve_cmd = commands.add_parser("serve", help="start the session service")
    _add_corpus_arg(serve_cmd)
    serve_cmd.add_argument("--host", default="127.0.0.1")
    serve_cmd.add_argument("--port", type=int, default=8080)
    serve_cmd.add_argument("--trace-dir", default=None, help="append finished episode traces here")

    return parser


def _cmd_index_build(args: argparse.Namespace) -> int:
    kb = _load_kb(args.corpus_dir)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kb.api_index.save(out / "api.index")
    kb.handbook_index.save(out / "handbook.index")
    print(f"wrote {out / 'api.index'} ({len(kb.api_index)} entries)")
    print(f"wrote {out / 'handbook.index'} ({len(kb.handbook_index)} entries)")
    return EXIT_OK


def _cmd_retrieve(args: argparse.Namespace) -> int:
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    kb = _load_kb(args.corpus_dir)
    if args.target in ("api", "both"):
        entries, scores = kb.retrieve_apis_scored(args.instruction, args.k)
        print("apis:")
        for entry, score in zip(entries, scores):
            print(f"  {score:.4f}  {entry.name}")
    if args.target in ("handbook", "both"):
        procedures, scores = kb.retrieve_procedures_scored(args.instruction, args.k)
        print("procedures:")
        for procedure, score in zip(procedures, scores):
            print(f"  {score:.4f}  {procedure.task_id}  {procedure.title}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    region = _region(args.region)
    kb = _load_kb(args.corpus_dir)
    factory = parse_backend_spec(args.backend)
    backend = factory(SuiteTask("run", args.instruction, region), 0)
    trace = run_once(kb, args.instruction, region, backend, _executor_config(args))
    if args.json:
        print(serialize_trace(trace))
    else:
        print(format_trace(trace))
    return EXIT_OK


def _cmd_eval_retrieval(args: argparse.Namespace) -> int:
    kb = _load_kb(args.corpus_dir)
    queries = args.queries or str(PACKAGED_CORPUS_DIR / "queries.jsonl")
    try:
        ks = [int(k) for k in args.ks.split(",") if k.strip()]
    except ValueError:
        raise UsageError(f"--ks must be a comma-separated list of integers, got {args.ks!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise UsageError("--ks values must be positive")
    headers, rows = eval_retrieval(kb, queries, ks)
    _emit(render_rows(headers, rows, args.format), args.out)
    return EXIT_OK


def _cmd_eval_execution(args: argparse.Namespace) -> int:
    kb = _load_kb(args.corpus_dir)
    suite = args.suite or str(PACKAGED_CORPUS_DIR / "tasks.jsonl")
    result = eval_execution(
        kb,
        suite,
        args.backend,
        repetitions=args.reps,
        seed=args.seed,
        config=_executor_config(args),
    )
    headers, rows = execution_result_rows([result])
    _emit(render_rows(headers, rows, args.format), args.out)
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .session_service import create_app

    kb = _load_kb(args.corpus_dir)
    app = create_app(kb, trace_dir=args.trace_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "index":
            return _cmd_index_build(args)
        if args.command == "retrieve":
            return _cmd_retrieve(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval" and args.eval_command == "retrieval":
            return _cmd_eval_retrieval(args)
        if args.command == "eval" and args.eval_command == "execution":
            return _cmd_eval_execution(args)
        if args.command == "serve":
            return _cmd_serve(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, SuiteError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
