"""Parameter schemas shared by the robot API surface, the catalog, and the parser."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

PARAM_TYPES = ("string", "number", "enum")


@dataclass(frozen=True)
class ParamSpec:
    """One parameter of a robot API call."""

    name: str
    type: str
    required: bool = True
    enum_values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.type not in PARAM_TYPES:
            raise ValueError(f"param type must be one of {PARAM_TYPES}, got {self.type!r}")
        if self.type == "enum" and not self.enum_values:
            raise ValueError(f"enum param {self.name!r} must list at least one value")
        if self.type != "enum" and self.enum_values:
            raise ValueError(f"param {self.name!r} is not an enum but lists enum values")


def _check_value(spec: ParamSpec, value: object) -> str | None:
    if spec.type == "string":
        if not isinstance(value, str):
            return f"expected a string, got {type(value).__name__}"
    elif spec.type == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"expected a number, got {type(value).__name__}"
    elif spec.type == "enum":
        if not isinstance(value, str) or value not in spec.enum_values:
            allowed = ", ".join(spec.enum_values)
            return f"expected one of [{allowed}], got {value!r}"
    return None


def validate_args(args: Mapping[str, object], schema: Sequence[ParamSpec]) -> list[tuple[str, str]]:
    """All (param, reason) violations of ``args`` against ``schema``.

    Deterministic order: missing required params in schema order, then unknown
    params sorted by name, then bad values in schema order.
    """
    violations: list[tuple[str, str]] = []
    known = {spec.name for spec in schema}
    for spec in schema:
        if spec.required and spec.name not in args:
            violations.append((spec.name, "required parameter is missing"))
    for name in sorted(args):
        if name not in known:
            violations.append((name, "unknown parameter"))
    for spec in schema:
        if spec.name in args:
            reason = _check_value(spec, args[spec.name])
            if reason is not None:
                violations.append((spec.name, reason))
    return violations


def render_param(spec: ParamSpec) -> str:
    """Human-readable one-line form used in prompts and CLI output."""
    if spec.type == "enum":
        type_text = "enum(" + "|".join(spec.enum_values) + ")"
    else:
        type_text = spec.type
    requirement = "required" if spec.required else "optional"
    return f"{spec.name}: {type_text} ({requirement})"
