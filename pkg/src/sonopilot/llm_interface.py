"""Model-output generation and parsing for the think/act loop.

The output grammar is line-oriented and case-sensitive:

    Thought: <reasoning, until the next key line>
    Action: <api name>
    Action Input: <a single JSON object>

or, to finish:

    Thought: <reasoning>
    Final Answer: <text to the end>

Text before the first "Thought:" line is ignored. A thought cannot itself
contain a line starting with one of the reserved keys; such a line terminates
the thought. Action arguments must be strict JSON and are validated against
the named api's parameter schema, so malformed output becomes a typed,
recoverable error with a remediation message instead of a silent misfire.

Backends: a scripted backend replays a fixture transcript keyed by turn index
(the workhorse for hermetic tests and evaluation), and a remote backend calls
any chat-completions-compatible HTTP endpoint.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Protocol, Sequence, Union

import httpx

from .apispec import ParamSpec, validate_args

if TYPE_CHECKING:
    from .prompt_assembler import AssembledPrompt

ENDPOINT_ENV_VAR = "SONOPILOT_LLM_ENDPOINT"
API_KEY_ENV_VAR = "SONOPILOT_LLM_API_KEY"
MODEL_ENV_VAR = "SONOPILOT_LLM_MODEL"

_THOUGHT_KEY = "Thought:"
_ACTION_KEY = "Action:"
_ACTION_INPUT_KEY = "Action Input:"
_FINAL_KEY = "Final Answer:"

GRAMMAR_INSTRUCTIONS = """Respond using exactly this format, nothing else:

Thought: <your reasoning about the robot state and what to do next>
Action: <one api name, exactly as listed>
Action Input: <the arguments as a single JSON object>

You will then receive an Observation and be prompted again. When the task is
complete, respond instead with:

Thought: <your reasoning>
Final Answer: <a short summary of what was accomplished>"""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens: int = 512
    model_name: str = "scripted"

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class Action:
    api_name: str
    args: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Final:
    summary: str


@dataclass(frozen=True)
class ParsedTurn:
    thought: str
    payload: Union[Action, Final]

    @property
    def is_final(self) -> bool:
        return isinstance(self.payload, Final)


# ---------------------------------------------------------------------------
# Parse errors. Each carries a remediation message that can be fed back to the
# model as an observation so it can self-correct.
# ---------------------------------------------------------------------------


class TurnParseError(Exception):
    kind = "parse_error"

    def __init__(self, detail: str, remediation: str):
        self.detail = detail
        self.remediation = remediation
        super().__init__(detail)


class MissingThoughtError(TurnParseError):
    kind = "missing_thought"

    def __init__(self) -> None:
        super().__init__(
            'no "Thought:" line found',
            'Your output must begin with a "Thought:" line. Re-send your answer in the required format.',
        )


class MissingActionError(TurnParseError):
    kind = "missing_action"

    def __init__(self) -> None:
        super().__init__(
            'neither "Action:" nor "Final Answer:" found after the thought',
            'After your Thought, provide either an "Action:" line with an "Action Input:" JSON object,'
            ' or a "Final Answer:" line.',
        )


class UnknownApiParseError(TurnParseError):
    kind = "unknown_api"

    def __init__(self, name: str):
        self.name = name
        super().__init__(
            f"unknown api {name!r}",
            f'There is no api named "{name}". Use one of the api names listed in the prompt, exactly.',
        )


class MalformedArgsError(TurnParseError):
    kind = "malformed_args"

    def __init__(self, detail: str):
        super().__init__(
            detail,
            f"Action Input must be a single valid JSON object ({detail}). Re-send the action with corrected JSON.",
        )


class SchemaViolationError(TurnParseError):
    kind = "schema_violation"

    def __init__(self, param: str, reason: str):
        self.param = param
        self.reason = reason
        super().__init__(
            f"argument {param!r}: {reason}",
            f'Argument "{param}" is invalid: {reason}. Fix the arguments and re-send the action.',
        )


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class BackendError(Exception):
    """Base class for generation failures."""


class TranscriptExhaustedError(BackendError):
    def __init__(self, turn_index: int, size: int):
        self.turn_index = turn_index
        super().__init__(f"scripted transcript exhausted: turn {turn_index} requested, {size} entries available")


class TransportError(BackendError):
    pass


class ServiceStatusError(BackendError):
    def __init__(self, status_code: int, detail: str = ""):
        self.status_code = status_code
        super().__init__(f"chat service returned status {status_code}" + (f": {detail}" if detail else ""))


class EmptyChoicesError(BackendError):
    pass


class Backend(Protocol):
    label: str

    def complete(self, prompt_text: str, params: GenerationParams, turn_index: int) -> str: ...


class ScriptedBackend:
    """Replays a fixed transcript; lookup is keyed purely by turn index, so a
    single instance is safe to reuse across repeated deterministic runs."""

    def __init__(self, entries: Sequence[str] | Mapping[int, str], label: str = "scripted"):
        if isinstance(entries, Mapping):
            self._entries = dict(entries)
        else:
            self._entries = dict(enumerate(entries))
        self.label = label

    @classmethod
    def from_path(cls, path: str | Path) -> "ScriptedBackend":
        """Load a transcript file of JSON lines {"turn_index": int, "text": str}."""
        path = Path(path)
        entries: dict[int, str] = {}
        with path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    entries[int(record["turn_index"])] = str(record["text"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{line_no}: bad transcript line: {exc}") from exc
        return cls(entries, label=f"scripted:{path.name}")

    def __len__(self) -> int:
        return len(self._entries)

    def complete(self, prompt_text: str, params: GenerationParams, turn_index: int) -> str:
        try:
            return self._entries[turn_index]
        except KeyError:
            raise TranscriptExhaustedError(turn_index, len(self._entries)) from None


class RemoteChatBackend:
    """Chat-completions-compatible HTTP backend.

    Sends {model, messages, temperature, top_p, max_tokens} and reads
    choices[0].message.content. One retry on transport failure, configurable.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        retries: int = 1,
        seed: int | None = None,
    ):
        self.endpoint = endpoint
        self.model_name = model_name
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV_VAR)
        self.timeout = timeout
        self.retries = retries
        self.seed = seed
        self.label = model_name or f"remote:{endpoint}"

    @classmethod
    def from_env(cls, **kwargs) -> "RemoteChatBackend":
        endpoint = os.environ.get(ENDPOINT_ENV_VAR)
        if not endpoint:
            raise ValueError(f"{ENDPOINT_ENV_VAR} must be set")
        return cls(endpoint, model_name=os.environ.get(MODEL_ENV_VAR), **kwargs)

    def complete(self, prompt_text: str, params: GenerationParams, turn_index: int) -> str:
        payload: dict[str, object] = {
            "model": self.model_name or params.model_name,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if self.seed is not None:
            payload["seed"] = self.seed
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
                break
            except httpx.HTTPError as exc:
                last_exc = exc
        else:
            raise TransportError(f"chat request failed: {last_exc}") from last_exc
        if not (200 <= response.status_code < 300):
            raise ServiceStatusError(response.status_code, response.text[:200])
        try:
            choices = response.json()["choices"]
        except (KeyError, ValueError) as exc:
            raise EmptyChoicesError(f"malformed chat response: {exc}") from exc
        if not choices:
            raise EmptyChoicesError("chat response contained no choices")
        content = choices[0].get("message", {}).get("content")
        if not isinstance(content, str):
            raise EmptyChoicesError("first choice carried no text content")
        return content


def generate(
    prompt: "AssembledPrompt | str",
    params: GenerationParams,
    backend: Backend,
    turn_index: int = 0,
) -> str:
    """Produce raw model text for a prompt via the given backend."""
    prompt_text = prompt if isinstance(prompt, str) else prompt.text
    return backend.complete(prompt_text, params, turn_index)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _is_key_line(line: str) -> bool:
    return line.startswith(_ACTION_KEY) or line.startswith(_FINAL_KEY)


def parse_turn(raw: str, catalog: Mapping[str, Sequence[ParamSpec]]) -> ParsedTurn:
    """Parse raw model output into a turn, or raise a typed TurnParseError."""
    lines = raw.split("\n")
    thought_at = next((i for i, line in enumerate(lines) if line.startswith(_THOUGHT_KEY)), None)
    if thought_at is None:
        raise MissingThoughtError()

    thought_parts = [lines[thought_at][len(_THOUGHT_KEY):]]
    key_at = None
    for i in range(thought_at + 1, len(lines)):
        if _is_key_line(lines[i]):
            key_at = i
            break
        thought_parts.append(lines[i])
    thought = "\n".join(thought_parts).strip()
    if key_at is None:
        raise MissingActionError()

    key_line = lines[key_at]
    if key_line.startswith(_FINAL_KEY):
        summary_parts = [key_line[len(_FINAL_KEY):]] + lines[key_at + 1:]
        return ParsedTurn(thought=thought, payload=Final("\n".join(summary_parts).strip()))

    api_name = key_line[len(_ACTION_KEY):].strip()
    if not api_name:
        raise MalformedArgsError("the Action line names no api")
    if api_name not in catalog:
        raise UnknownApiParseError(api_name)

    input_at = None
    for i in range(key_at + 1, len(lines)):
        if lines[i].startswith(_ACTION_INPUT_KEY):
            input_at = i
            break
        if lines[i].strip():
            raise MalformedArgsError('expected an "Action Input:" line directly after the Action line')
    if input_at is None:
        raise MalformedArgsError('no "Action Input:" line found after the Action line')

    args_text = "\n".join([lines[input_at][len(_ACTION_INPUT_KEY):]] + lines[input_at + 1:]).strip()
    try:
        args = json.loads(args_text)
    except json.JSONDecodeError as exc:
        raise MalformedArgsError(f"JSON parse error: {exc}") from exc
    if not isinstance(args, dict):
        raise MalformedArgsError(f"expected a JSON object, got {type(args).__name__}")

    violations = validate_args(args, catalog[api_name])
    if violations:
        param, reason = violations[0]
        raise SchemaViolationError(param, reason)
    return ParsedTurn(thought=thought, payload=Action(api_name, args))


def render_turn(turn: ParsedTurn) -> str:
    """Render a parsed turn back to grammar text (inverse of parse_turn)."""
    if isinstance(turn.payload, Final):
        return f"{_THOUGHT_KEY} {turn.thought}\n{_FINAL_KEY} {turn.payload.summary}"
    args_json = json.dumps(dict(turn.payload.args), sort_keys=True)
    return (
        f"{_THOUGHT_KEY} {turn.thought}\n"
        f"{_ACTION_KEY} {turn.payload.api_name}\n"
        f"{_ACTION_INPUT_KEY} {args_json}"
    )
