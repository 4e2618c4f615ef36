"""Deterministic state-machine simulator of an ultrasound robot.

The callable surface covers probe selection, patient preparation, positioning,
contact-force safety, sweep acquisition, and status queries. Every call either
succeeds and returns the updated state, or fails its first violated
precondition and leaves the state untouched. There is no randomness anywhere:
coverage and image quality follow a fixed probe/pattern suitability table, so
task success is a decidable predicate.

Safety band: scanning requires a contact force between 2 and 15 newtons.
Requesting a force outside that band while scanning is refused and counts as a
safety violation for the task-success predicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

from .apispec import ParamSpec, validate_args

FORCE_LIMIT_N = 20.0
SAFE_FORCE_MIN_N = 2.0
SAFE_FORCE_MAX_N = 15.0
ANGLE_LIMIT_DEG = 60.0

MATCHED_COVERAGE_GAIN = 0.9
MISMATCHED_COVERAGE_GAIN = 0.4
MATCHED_IMAGE_QUALITY = 1.0
MISMATCHED_IMAGE_QUALITY = 0.5

COVERAGE_SUCCESS_THRESHOLD = 0.8
IMAGE_QUALITY_SUCCESS_THRESHOLD = 0.9


class BodyRegion(str, Enum):
    NECK = "neck"
    ABDOMEN_LIVER = "abdomen_liver"
    ABDOMEN_GALLBLADDER = "abdomen_gallbladder"
    ABDOMEN_KIDNEY = "abdomen_kidney"
    CHEST_CARDIAC = "chest_cardiac"
    NECK_CAROTID = "neck_carotid"


class ProbeType(str, Enum):
    LINEAR = "linear"
    CONVEX = "convex"
    PHASED_ARRAY = "phased_array"


class ScanPattern(str, Enum):
    LINEAR_SWEEP = "linear_sweep"
    FAN_SWEEP = "fan_sweep"
    SPIRAL = "spiral"


# Which (probe, pattern) pair yields full-quality acquisition per region.
REGION_REQUIREMENTS: dict[BodyRegion, tuple[ProbeType, ScanPattern]] = {
    BodyRegion.NECK: (ProbeType.LINEAR, ScanPattern.LINEAR_SWEEP),
    BodyRegion.NECK_CAROTID: (ProbeType.LINEAR, ScanPattern.LINEAR_SWEEP),
    BodyRegion.ABDOMEN_LIVER: (ProbeType.CONVEX, ScanPattern.FAN_SWEEP),
    BodyRegion.ABDOMEN_GALLBLADDER: (ProbeType.CONVEX, ScanPattern.FAN_SWEEP),
    BodyRegion.ABDOMEN_KIDNEY: (ProbeType.CONVEX, ScanPattern.FAN_SWEEP),
    BodyRegion.CHEST_CARDIAC: (ProbeType.PHASED_ARRAY, ScanPattern.FAN_SWEEP),
}

_REGION_VALUES = tuple(r.value for r in BodyRegion)
_PROBE_VALUES = tuple(p.value for p in ProbeType)
_PATTERN_VALUES = tuple(p.value for p in ScanPattern)

# The callable API surface; the knowledge-base catalog must describe exactly
# these names with matching parameter schemas.
API_SURFACE: dict[str, tuple[ParamSpec, ...]] = {
    "select_probe": (ParamSpec("probe_type", "enum", True, _PROBE_VALUES),),
    "apply_gel": (ParamSpec("region", "enum", True, _REGION_VALUES),),
    "remove_gel": (ParamSpec("region", "enum", True, _REGION_VALUES),),
    "move_probe": (ParamSpec("region", "enum", True, _REGION_VALUES),),
    "set_contact_force": (ParamSpec("newtons", "number", True),),
    "adjust_probe_angle": (ParamSpec("degrees", "number", True),),
    "center_probe": (),
    "start_scan": (ParamSpec("pattern", "enum", True, _PATTERN_VALUES),),
    "capture_image": (),
    "stop_scan": (),
    "query_state": (),
    "query_coverage": (ParamSpec("region", "enum", True, _REGION_VALUES),),
}


class UnknownApiError(Exception):
    """A call named an api the simulator does not implement (catalog drift)."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown api {name!r}")


@dataclass(frozen=True)
class ScanActivity:
    region: BodyRegion
    pattern: ScanPattern


@dataclass(frozen=True)
class UltrasoundImage:
    region: BodyRegion
    angle_deg: float
    quality: float


@dataclass(frozen=True)
class RobotState:
    probe: ProbeType | None = None
    gel_applied: frozenset[BodyRegion] = frozenset()
    probe_at: BodyRegion | None = None
    probe_angle_deg: float = 0.0
    contact_force_n: float = 0.0
    scanning: ScanActivity | None = None
    images: tuple[UltrasoundImage, ...] = ()
    coverage: Mapping[BodyRegion, float] = field(default_factory=dict)
    halted: bool = False

    def coverage_of(self, region: BodyRegion) -> float:
        return self.coverage.get(region, 0.0)

    def validate(self) -> None:
        """Raise AssertionError if any state invariant is violated."""
        assert 0.0 <= self.contact_force_n <= FORCE_LIMIT_N, "force outside [0, 20]"
        assert -ANGLE_LIMIT_DEG <= self.probe_angle_deg <= ANGLE_LIMIT_DEG, "angle outside [-60, 60]"
        assert all(0.0 <= v <= 1.0 for v in self.coverage.values()), "coverage outside [0, 1]"
        if self.scanning is not None:
            assert self.probe is not None, "scanning without a probe"
            assert self.probe_at == self.scanning.region, "scanning away from probe position"
            assert self.scanning.region in self.gel_applied, "scanning without gel"
            assert SAFE_FORCE_MIN_N <= self.contact_force_n <= SAFE_FORCE_MAX_N, "scanning outside safe force band"
        if self.halted:
            assert self.scanning is None, "halted while scanning"


@dataclass(frozen=True)
class ApiCall:
    name: str
    args: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Observation:
    """Result fed back to the language model after a call."""

    ok: bool
    text: str
    state_digest: str


@dataclass(frozen=True)
class ScanTask:
    instruction: str
    region: BodyRegion


def reset() -> RobotState:
    return RobotState()


def _fmt(value: float) -> str:
    return format(value, "g")


def state_digest(state: RobotState) -> str:
    """Stable single-line key=value summary; embedded in prompts, so the
    rendering must stay byte-identical for identical states."""
    gel = ",".join(sorted(r.value for r in state.gel_applied)) or "none"
    scan = f"{state.scanning.region.value}:{state.scanning.pattern.value}" if state.scanning else "none"
    covered = sorted((r.value, v) for r, v in state.coverage.items() if v > 0.0)
    coverage = ",".join(f"{name}:{value:.2f}" for name, value in covered) or "none"
    return (
        f"probe={state.probe.value if state.probe else 'none'}"
        f" pos={state.probe_at.value if state.probe_at else 'none'}"
        f" angle={_fmt(state.probe_angle_deg)}"
        f" force={_fmt(state.contact_force_n)}"
        f" gel={gel}"
        f" scan={scan}"
        f" images={len(state.images)}"
        f" coverage={coverage}"
        f" halted={'yes' if state.halted else 'no'}"
    )


def _fail(state: RobotState, text: str) -> tuple[RobotState, Observation, bool]:
    return state, Observation(ok=False, text=text, state_digest=state_digest(state)), False


def _ok(state: RobotState, text: str) -> tuple[RobotState, Observation, bool]:
    return state, Observation(ok=True, text=text, state_digest=state_digest(state)), False


def _matched(probe: ProbeType, pattern: ScanPattern, region: BodyRegion) -> bool:
    return REGION_REQUIREMENTS[region] == (probe, pattern)


def _apply(state: RobotState, call: ApiCall) -> tuple[RobotState, Observation, bool]:
    """Returns (next_state, observation, safety_violation)."""
    if call.name not in API_SURFACE:
        raise UnknownApiError(call.name)
    violations = validate_args(call.args, API_SURFACE[call.name])
    if violations:
        param, reason = violations[0]
        return _fail(state, f"invalid arguments for {call.name}: {param}: {reason}")
    args = call.args

    if call.name == "select_probe":
        if state.scanning is not None:
            return _fail(state, "cannot change probe while scanning")
        probe = ProbeType(str(args["probe_type"]))
        return _ok(replace(state, probe=probe), f"probe set to {probe.value}")

    if call.name == "apply_gel":
        region = BodyRegion(str(args["region"]))
        next_state = replace(state, gel_applied=state.gel_applied | {region})
        return _ok(next_state, f"gel applied to {region.value}")

    if call.name == "remove_gel":
        region = BodyRegion(str(args["region"]))
        if state.scanning is not None and state.scanning.region == region:
            return _fail(state, f"cannot remove gel from {region.value} while it is being scanned")
        next_state = replace(state, gel_applied=state.gel_applied - {region})
        return _ok(next_state, f"gel removed from {region.value}")

    if call.name == "move_probe":
        if state.probe is None:
            return _fail(state, "no probe selected")
        if state.scanning is not None:
            return _fail(state, "cannot move probe while scanning")
        region = BodyRegion(str(args["region"]))
        next_state = replace(state, probe_at=region, probe_angle_deg=0.0)
        return _ok(next_state, f"probe moved to {region.value}")

    if call.name == "set_contact_force":
        requested = float(args["newtons"])  # type: ignore[arg-type]
        if state.scanning is not None and not (SAFE_FORCE_MIN_N <= requested <= SAFE_FORCE_MAX_N):
            _, observation, _ = _fail(
                state,
                f"safety violation: contact force {_fmt(requested)} N is outside the"
                f" [{_fmt(SAFE_FORCE_MIN_N)}, {_fmt(SAFE_FORCE_MAX_N)}] N band required while scanning",
            )
            return state, observation, True
        clamped = max(0.0, min(FORCE_LIMIT_N, requested))
        next_state = replace(state, contact_force_n=clamped)
        return _ok(next_state, f"contact force set to {_fmt(clamped)} N")

    if call.name == "adjust_probe_angle":
        if state.probe_at is None:
            return _fail(state, "probe not positioned at any region")
        requested = float(args["degrees"])  # type: ignore[arg-type]
        clamped = max(-ANGLE_LIMIT_DEG, min(ANGLE_LIMIT_DEG, requested))
        next_state = replace(state, probe_angle_deg=clamped)
        return _ok(next_state, f"probe angle set to {_fmt(clamped)} degrees")

    if call.name == "center_probe":
        if state.probe_at is None:
            return _fail(state, "probe not positioned at any region")
        return _ok(replace(state, probe_angle_deg=0.0), "probe angle centered to 0 degrees")

    if call.name == "start_scan":
        if state.probe is None:
            return _fail(state, "no probe selected")
        if state.probe_at is None:
            return _fail(state, "probe not positioned at any region")
        if state.probe_at not in state.gel_applied:
            return _fail(state, f"no gel applied at {state.probe_at.value}")
        if not (SAFE_FORCE_MIN_N <= state.contact_force_n <= SAFE_FORCE_MAX_N):
            return _fail(
                state,
                f"contact force {_fmt(state.contact_force_n)} N outside the safe scanning band"
                f" [{_fmt(SAFE_FORCE_MIN_N)}, {_fmt(SAFE_FORCE_MAX_N)}] N",
            )
        pattern = ScanPattern(str(args["pattern"]))
        region = state.probe_at
        gain = MATCHED_COVERAGE_GAIN if _matched(state.probe, pattern, region) else MISMATCHED_COVERAGE_GAIN
        coverage = dict(state.coverage)
        coverage[region] = min(1.0, coverage.get(region, 0.0) + gain)
        next_state = replace(state, scanning=ScanActivity(region, pattern), coverage=coverage)
        return _ok(
            next_state,
            f"scan started at {region.value} with {pattern.value} pattern"
            f" (coverage {coverage[region]:.2f})",
        )

    if call.name == "capture_image":
        if state.scanning is None:
            return _fail(state, "not scanning")
        assert state.probe is not None
        quality = (
            MATCHED_IMAGE_QUALITY
            if _matched(state.probe, state.scanning.pattern, state.scanning.region)
            else MISMATCHED_IMAGE_QUALITY
        )
        image = UltrasoundImage(state.scanning.region, state.probe_angle_deg, quality)
        next_state = replace(state, images=state.images + (image,))
        return _ok(next_state, f"image captured at {image.region.value} (quality {quality:.2f})")

    if call.name == "stop_scan":
        if state.scanning is None:
            return _fail(state, "not scanning")
        region = state.scanning.region
        return _ok(replace(state, scanning=None), f"scan stopped at {region.value}")

    if call.name == "query_state":
        return _ok(state, state_digest(state))

    if call.name == "query_coverage":
        region = BodyRegion(str(args["region"]))
        return _ok(state, f"coverage at {region.value} = {state.coverage_of(region):.2f}")

    raise UnknownApiError(call.name)  # unreachable; every surfaced name is handled


def execute_api(state: RobotState, call: ApiCall) -> tuple[RobotState, Observation]:
    """Apply one call. Failed preconditions return ok=False and the input state."""
    next_state, observation, _ = _apply(state, call)
    return next_state, observation


def task_success(state: RobotState, task: ScanTask, safety_violations: int = 0) -> bool:
    """Strict overall-success predicate for one scan task.

    Requires sufficient coverage of the target region, at least one
    high-quality image of it, the scan properly stopped, and a clean safety
    record. A weaker errors-only metric lives on the execution trace.
    """
    if safety_violations > 0:
        return False
    if state.scanning is not None:
        return False
    if state.coverage_of(task.region) < COVERAGE_SUCCESS_THRESHOLD:
        return False
    return any(
        image.region == task.region and image.quality >= IMAGE_QUALITY_SUCCESS_THRESHOLD
        for image in state.images
    )


class UltrasoundRobot:
    """One robot session: current state plus the safety record of the run."""

    def __init__(self) -> None:
        self.state = reset()
        self.safety_violations = 0

    def reset(self) -> RobotState:
        self.state = reset()
        self.safety_violations = 0
        return self.state

    def execute(self, call: ApiCall) -> Observation:
        next_state, observation, violated = _apply(self.state, call)
        self.state = next_state
        if violated:
            self.safety_violations += 1
        return observation

    def task_success(self, task: ScanTask) -> bool:
        return task_success(self.state, task, self.safety_violations)

    def digest(self) -> str:
        return state_digest(self.state)
