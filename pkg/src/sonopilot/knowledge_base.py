"""Ultrasound API catalog and robotic handbook corpora, with vector retrieval.

Two corpora load from JSON-lines files and back two flat vector indices: the
API index is built over each tool's usage narrative, the handbook index over
each procedure's trigger phrasings joined with its title. Retrieval over the
API index is the tool-selection path (UAR); retrieval over the handbook index
is the procedure-selection path (RHR).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from .apispec import ParamSpec
from .embedding import EmbedderConfig, embed_text
from .vector_index import IndexEntry, RetrievalEvalCase, VectorIndex

DEFAULT_K_API = 5
DEFAULT_K_HANDBOOK = 1


class CorpusError(Exception):
    """Base class for corpus loading and validation failures."""


class CorpusFormatError(CorpusError):
    def __init__(self, path: str | Path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")


class DuplicateEntryError(CorpusError):
    def __init__(self, path: str | Path, line_no: int, entry_id: str):
        self.entry_id = entry_id
        super().__init__(f"{path}:{line_no}: duplicate id {entry_id!r}")


class DanglingApiReferenceError(CorpusError):
    def __init__(self, task_id: str, api_name: str):
        self.task_id = task_id
        self.api_name = api_name
        super().__init__(f"handbook procedure {task_id!r} references unknown api {api_name!r}")


class UnknownStepParamError(CorpusError):
    def __init__(self, task_id: str, api_name: str, param: str):
        self.param = param
        super().__init__(
            f"handbook procedure {task_id!r} passes unknown parameter {param!r} to api {api_name!r}"
        )


class EmptyCorpusError(CorpusError):
    pass


@dataclass(frozen=True)
class ApiCatalogEntry:
    """One tool with the usage narrative that retrieval matches against."""

    name: str
    usage: str
    param_schema: tuple[ParamSpec, ...]
    description: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("api name must be non-empty")
        if not self.usage:
            raise ValueError(f"api {self.name!r}: usage must be non-empty")


@dataclass(frozen=True)
class HandbookStep:
    api_name: str
    args: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class HandbookProcedure:
    """An ordered recipe of api calls answering a family of instructions."""

    task_id: str
    title: str
    trigger_examples: tuple[str, ...]
    steps: tuple[HandbookStep, ...]
    notes: str = ""

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if not self.steps:
            raise ValueError(f"procedure {self.task_id!r}: steps must be non-empty")

    def index_text(self) -> str:
        return " ".join((*self.trigger_examples, self.title))


@dataclass(frozen=True)
class RetrievedContext:
    """Ranked retrieval results that go into one prompt."""

    apis: tuple[ApiCatalogEntry, ...] = ()
    procedures: tuple[HandbookProcedure, ...] = ()
    api_scores: tuple[float, ...] = ()
    procedure_scores: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.apis) != len(self.api_scores) or len(self.procedures) != len(self.procedure_scores):
            raise ValueError("scores must parallel their result lists")
        if list(self.api_scores) != sorted(self.api_scores, reverse=True):
            raise ValueError("api scores must be sorted descending")
        if list(self.procedure_scores) != sorted(self.procedure_scores, reverse=True):
            raise ValueError("procedure scores must be sorted descending")


def _jsonl_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusFormatError(path, line_no, "record must be a JSON object")
            yield line_no, record


def _parse_param_schema(path: str | Path, line_no: int, raw: object) -> tuple[ParamSpec, ...]:
    if not isinstance(raw, list):
        raise CorpusFormatError(path, line_no, "param_schema must be a list")
    specs = []
    for item in raw:
        if not isinstance(item, dict):
            raise CorpusFormatError(path, line_no, "param_schema entries must be objects")
        try:
            specs.append(
                ParamSpec(
                    name=str(item["param_name"]),
                    type=str(item["type"]),
                    required=bool(item.get("required", True)),
                    enum_values=tuple(str(v) for v in item.get("enum_values", ())),
                )
            )
        except (KeyError, ValueError) as exc:
            raise CorpusFormatError(path, line_no, f"bad param spec: {exc}") from exc
    return tuple(specs)


def _load_catalog(path: str | Path) -> dict[str, ApiCatalogEntry]:
    catalog: dict[str, ApiCatalogEntry] = {}
    for line_no, record in _jsonl_records(path):
        try:
            entry = ApiCatalogEntry(
                name=str(record["name"]),
                usage=str(record["usage"]),
                param_schema=_parse_param_schema(path, line_no, record.get("param_schema", [])),
                description=str(record.get("description", "")),
            )
        except CorpusError:
            raise
        except (KeyError, ValueError) as exc:
            raise CorpusFormatError(path, line_no, f"bad api record: {exc}") from exc
        if entry.name in catalog:
            raise DuplicateEntryError(path, line_no, entry.name)
        catalog[entry.name] = entry
    if not catalog:
        raise EmptyCorpusError(f"{path}: api catalog must be non-empty")
    return catalog


def _load_handbook(path: str | Path, catalog: Mapping[str, ApiCatalogEntry]) -> dict[str, HandbookProcedure]:
    procedures: dict[str, HandbookProcedure] = {}
    for line_no, record in _jsonl_records(path):
        try:
            steps = tuple(
                HandbookStep(api_name=str(step["api_name"]), args=dict(step.get("args", {})))
                for step in record["steps"]
            )
            procedure = HandbookProcedure(
                task_id=str(record["task_id"]),
                title=str(record["title"]),
                trigger_examples=tuple(str(t) for t in record.get("trigger_examples", ())),
                steps=steps,
                notes=str(record.get("notes", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(path, line_no, f"bad handbook record: {exc}") from exc
        if procedure.task_id in procedures:
            raise DuplicateEntryError(path, line_no, procedure.task_id)
        for step in procedure.steps:
            api = catalog.get(step.api_name)
            if api is None:
                raise DanglingApiReferenceError(procedure.task_id, step.api_name)
            known_params = {spec.name for spec in api.param_schema}
            for arg_name in step.args:
                if arg_name not in known_params:
                    raise UnknownStepParamError(procedure.task_id, step.api_name, arg_name)
        procedures[procedure.task_id] = procedure
    if not procedures:
        raise EmptyCorpusError(f"{path}: handbook must be non-empty")
    return procedures


class KnowledgeBase:
    """Immutable corpora plus the two indices built over them."""

    def __init__(
        self,
        catalog: Mapping[str, ApiCatalogEntry],
        procedures: Mapping[str, HandbookProcedure],
        embedder: EmbedderConfig,
    ):
        self.catalog = dict(catalog)
        self.procedures = dict(procedures)
        self.embedder = embedder
        self.api_index = VectorIndex(
            IndexEntry(id=entry.name, vector=embed_text(entry.usage, embedder), payload_ref=entry.name)
            for entry in self.catalog.values()
        )
        self.handbook_index = VectorIndex(
            IndexEntry(id=proc.task_id, vector=embed_text(proc.index_text(), embedder), payload_ref=proc.task_id)
            for proc in self.procedures.values()
        )

    @property
    def param_schemas(self) -> dict[str, tuple[ParamSpec, ...]]:
        return {name: entry.param_schema for name, entry in self.catalog.items()}

    def retrieve_apis(self, instruction: str, k: int = DEFAULT_K_API) -> list[ApiCatalogEntry]:
        """Top-k catalog entries for an instruction (UAR)."""
        entries, _ = self.retrieve_apis_scored(instruction, k)
        return entries

    def retrieve_apis_scored(self, instruction: str, k: int = DEFAULT_K_API) -> tuple[list[ApiCatalogEntry], list[float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        hits = self.api_index.top_k(embed_text(instruction, self.embedder), k)
        return [self.catalog[hit.id] for hit in hits], [hit.score for hit in hits]

    def retrieve_procedures(self, instruction: str, k: int = DEFAULT_K_HANDBOOK) -> list[HandbookProcedure]:
        """Top-k handbook procedures for an instruction (RHR)."""
        entries, _ = self.retrieve_procedures_scored(instruction, k)
        return entries

    def retrieve_procedures_scored(
        self, instruction: str, k: int = DEFAULT_K_HANDBOOK
    ) -> tuple[list[HandbookProcedure], list[float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        hits = self.handbook_index.top_k(embed_text(instruction, self.embedder), k)
        return [self.procedures[hit.id] for hit in hits], [hit.score for hit in hits]

    def retrieve_context(
        self,
        instruction: str,
        k_api: int = DEFAULT_K_API,
        k_handbook: int = DEFAULT_K_HANDBOOK,
        use_uar: bool = True,
        use_rhr: bool = True,
    ) -> RetrievedContext:
        apis: list[ApiCatalogEntry] = []
        api_scores: list[float] = []
        procedures: list[HandbookProcedure] = []
        procedure_scores: list[float] = []
        if use_uar:
            apis, api_scores = self.retrieve_apis_scored(instruction, k_api)
        if use_rhr:
            procedures, procedure_scores = self.retrieve_procedures_scored(instruction, k_handbook)
        return RetrievedContext(tuple(apis), tuple(procedures), tuple(api_scores), tuple(procedure_scores))


def load_corpora(
    api_path: str | Path,
    handbook_path: str | Path,
    embedder: EmbedderConfig | None = None,
) -> KnowledgeBase:
    """Load and cross-validate both corpora, then build their indices."""
    if embedder is None:
        embedder = EmbedderConfig()
    catalog = _load_catalog(api_path)
    procedures = _load_handbook(handbook_path, catalog)
    return KnowledgeBase(catalog, procedures, embedder)


def load_eval_cases(path: str | Path) -> dict[str, list[RetrievalEvalCase]]:
    """Load a retrieval-evaluation query file into {'api': [...], 'handbook': [...]}."""
    cases: dict[str, list[RetrievalEvalCase]] = {"api": [], "handbook": []}
    for line_no, record in _jsonl_records(path):
        try:
            target = str(record["target"])
            case = RetrievalEvalCase(
                query=str(record["query"]),
                relevant_ids=frozenset(str(i) for i in record["relevant_ids"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(path, line_no, f"bad query record: {exc}") from exc
        if target not in cases:
            raise CorpusFormatError(path, line_no, f"target must be 'api' or 'handbook', got {target!r}")
        cases[target].append(case)
    return cases
