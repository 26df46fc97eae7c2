"""Shared domain types: goals, plans, actions, observations, evaluations, trajectories.

All types are immutable value objects validated at construction, so they are
safe to share across tasks and sessions. The trajectory document format
(version 1) is a stable JSON shape used by the replay CLI and the service.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping
from urllib.parse import urlparse

TRAJECTORY_FORMAT_VERSION = 1

PAGE_SUMMARY_MAX_CHARS = 400
TEXT_EXCERPT_MAX_CHARS = 80


class InvariantViolation(ValueError):
    """A domain invariant does not hold for the given field values."""


class TrajectoryParseError(ValueError):
    """A trajectory document is not well-formed (distinct from invariant failures)."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvariantViolation(message)


def is_absolute_http_url(url: str) -> bool:
    try:
        parts = urlparse(url)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.netloc)


def clip_summary(text: str, limit: int = PAGE_SUMMARY_MAX_CHARS) -> str:
    """Clip free text to the page-summary budget, marking truncation."""
    text = " ".join(text.split())
    if len(text) <= limit:
        return text
    return text[: limit - 1] + "…"


@dataclass(frozen=True)
class Goal:
    """A user task: what to accomplish and where to start."""

    text: str
    starting_url: str

    def __post_init__(self) -> None:
        _require(bool(self.text.strip()), "goal text must be non-empty")
        _require(
            is_absolute_http_url(self.starting_url),
            f"starting_url must be an absolute http(s) URL, got {self.starting_url!r}",
        )


class PlanProvenance(str, Enum):
    USER_SUPPLIED = "user_supplied"
    GENERATED = "generated"
    REPLANNED = "replanned"


@dataclass(frozen=True)
class Plan:
    """The plan prompt guiding action generation, with revision lineage."""

    text: str
    revision: int = 0
    provenance: PlanProvenance = PlanProvenance.GENERATED

    def __post_init__(self) -> None:
        _require(self.revision >= 0, "plan revision must be non-negative")
        if self.provenance in (PlanProvenance.USER_SUPPLIED, PlanProvenance.GENERATED):
            _require(self.revision == 0, f"{self.provenance.value} plan must have revision 0")
        else:
            _require(self.revision >= 1, "replanned plan must have revision >= 1")


@dataclass(frozen=True)
class ActionDescription:
    """A natural-language action at a given step."""

    text: str
    step_index: int

    def __post_init__(self) -> None:
        _require(bool(self.text.strip()), "action text must be non-empty")
        _require(self.step_index >= 0, "step_index must be non-negative")


class ActionKind(str, Enum):
    NAVIGATE = "navigate"
    CLICK = "click"
    FILL = "fill"
    SELECT_OPTION = "select_option"
    SCROLL = "scroll"
    UPLOAD_FILE = "upload_file"
    SCRAPE = "scrape"
    GO_BACK = "go_back"
    FINISH = "finish"


SELECTOR_KINDS = frozenset(
    {ActionKind.CLICK, ActionKind.FILL, ActionKind.SELECT_OPTION, ActionKind.UPLOAD_FILE}
)


@dataclass(frozen=True)
class GroundedAction:
    """The executable browser-command form of a natural-language action."""

    kind: ActionKind
    selector: str | None = None
    arguments: Mapping[str, str] = field(default_factory=dict)
    source_step: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "arguments", dict(self.arguments))
        if self.kind in SELECTOR_KINDS:
            _require(bool(self.selector), f"{self.kind.value} requires a non-empty selector")
        if self.kind is ActionKind.NAVIGATE:
            _require("url" in self.arguments, "navigate requires a `url` argument")
        if self.kind is ActionKind.FILL:
            _require("value" in self.arguments, "fill requires a `value` argument")
        _require(self.source_step >= 0, "source_step must be non-negative")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroundedAction):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.selector == other.selector
            and dict(self.arguments) == dict(other.arguments)
            and self.source_step == other.source_step
        )


class ObservationFeature(str, Enum):
    AXTREE = "axtree"
    DOM = "dom"
    SCREENSHOT = "screenshot"
    SOM = "som"
    INTERACTIVE_ELEMENTS = "interactive_elements"


@dataclass(frozen=True)
class ImageHandle:
    """Opaque handle to a captured image; payload bytes are never inspected here."""

    media_type: str
    data: bytes


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float


@dataclass(frozen=True)
class ElementInfo:
    """Attributes of one page element, as used for prompts and selector synthesis."""

    tag: str
    id_attr: str | None = None
    name_attr: str | None = None
    role: str | None = None
    aria_label: str | None = None
    type_attr: str | None = None
    classes: tuple[str, ...] = ()
    sibling_index: int = 1
    text_excerpt: str = ""
    mark_id: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))
        _require(self.sibling_index >= 1, "sibling_index is 1-based")
        _require(
            len(self.text_excerpt) <= TEXT_EXCERPT_MAX_CHARS,
            f"text_excerpt exceeds {TEXT_EXCERPT_MAX_CHARS} chars",
        )


@dataclass(frozen=True)
class SomMark:
    """One Set-of-Marks badge: numeric label, box, and an opaque element reference."""

    mark_id: int
    box: BoundingBox
    element_ref: str


@dataclass(frozen=True)
class Observation:
    """A configurable feature bundle describing the current page.

    A feature field is populated iff its flag is in `features`; `url` is
    always present. Checked at construction so use sites never re-validate.
    """

    url: str
    features: frozenset[ObservationFeature] = frozenset()
    axtree_text: str | None = None
    dom_snapshot: str | None = None
    dom_truncated: bool = False
    screenshot_ref: ImageHandle | None = None
    som: tuple[SomMark, ...] | None = None
    interactive_elements: tuple[ElementInfo, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", frozenset(self.features))
        if self.som is not None:
            object.__setattr__(self, "som", tuple(self.som))
        if self.interactive_elements is not None:
            object.__setattr__(self, "interactive_elements", tuple(self.interactive_elements))
        pairs = [
            (ObservationFeature.AXTREE, self.axtree_text),
            (ObservationFeature.DOM, self.dom_snapshot),
            (ObservationFeature.SCREENSHOT, self.screenshot_ref),
            (ObservationFeature.SOM, self.som),
            (ObservationFeature.INTERACTIVE_ELEMENTS, self.interactive_elements),
        ]
        for feature, value in pairs:
            if feature in self.features:
                _require(value is not None, f"feature {feature.value} requested but not populated")
            else:
                _require(value is None, f"field {feature.value} populated without its feature flag")
        if self.dom_truncated:
            _require(ObservationFeature.DOM in self.features, "dom_truncated without dom feature")
        if self.som is not None:
            ids = [m.mark_id for m in self.som]
            _require(ids == list(range(1, len(ids) + 1)), "mark_ids must be contiguous from 1")


class EvalStatus(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass(frozen=True)
class EvaluationRecord:
    """Execution feedback for one action: outcome, message, post-action page summary."""

    status: EvalStatus
    message: str = ""
    page_summary: str = ""

    def __post_init__(self) -> None:
        if self.status is EvalStatus.FAILURE:
            _require(bool(self.message.strip()), "failure records must carry a message")
        _require(
            len(self.page_summary) <= PAGE_SUMMARY_MAX_CHARS,
            f"page_summary exceeds {PAGE_SUMMARY_MAX_CHARS} chars",
        )

    @property
    def ok(self) -> bool:
        return self.status is EvalStatus.SUCCESS


def success(message: str = "", page_summary: str = "") -> EvaluationRecord:
    return EvaluationRecord(EvalStatus.SUCCESS, message, clip_summary(page_summary))


def failure(message: str, page_summary: str = "") -> EvaluationRecord:
    return EvaluationRecord(EvalStatus.FAILURE, message, clip_summary(page_summary))


@dataclass(frozen=True)
class TrajectoryStep:
    """One executed step: the action, its grounding (absent when grounding failed),
    the evaluation, and the page URLs bracketing execution."""

    action: ActionDescription
    grounded: GroundedAction | None
    evaluation: EvaluationRecord
    pre_url: str
    post_url: str

    def __post_init__(self) -> None:
        if self.grounded is not None:
            _require(
                self.action.step_index == self.grounded.source_step,
                "action.step_index must equal grounded.source_step",
            )


@dataclass(frozen=True)
class Trajectory:
    """An ordered record of executed steps for one goal; the replay and search substrate."""

    goal: Goal
    initial_plan: Plan
    steps: tuple[TrajectoryStep, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        indices = [s.action.step_index for s in self.steps]
        _require(
            indices == list(range(len(indices))),
            f"step indices must be contiguous 0..n-1, got {indices}",
        )
        if self.steps:
            _require(
                self.steps[0].pre_url == self.goal.starting_url,
                "steps[0].pre_url must equal goal.starting_url",
            )

    @property
    def success_count(self) -> int:
        return sum(1 for s in self.steps if s.evaluation.ok)

    @property
    def final_url(self) -> str:
        return self.steps[-1].post_url if self.steps else self.goal.starting_url


# --- canonical trajectory document (version 1) ---


def _goal_to_obj(g: Goal) -> dict[str, Any]:
    return {"text": g.text, "starting_url": g.starting_url}


def _plan_to_obj(p: Plan) -> dict[str, Any]:
    return {"text": p.text, "revision": p.revision, "provenance": p.provenance.value}


def _step_to_obj(s: TrajectoryStep) -> dict[str, Any]:
    grounded = None
    if s.grounded is not None:
        grounded = {
            "kind": s.grounded.kind.value,
            "selector": s.grounded.selector,
            "arguments": dict(s.grounded.arguments),
            "source_step": s.grounded.source_step,
        }
    return {
        "action": {"text": s.action.text, "step_index": s.action.step_index},
        "grounded": grounded,
        "evaluation": {
            "status": s.evaluation.status.value,
            "message": s.evaluation.message,
            "page_summary": s.evaluation.page_summary,
        },
        "pre_url": s.pre_url,
        "post_url": s.post_url,
    }


def serialize_trajectory(t: Trajectory) -> str:
    """Render a trajectory as its canonical UTF-8 JSON document.

    Keys are sorted and the layout is stable, so serialized files diff cleanly.
    Round-trips losslessly through :func:`deserialize_trajectory`.
    """
    doc = {
        "version": TRAJECTORY_FORMAT_VERSION,
        "goal": _goal_to_obj(t.goal),
        "initial_plan": _plan_to_obj(t.initial_plan),
        "steps": [_step_to_obj(s) for s in t.steps],
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _parse_str(obj: Mapping[str, Any], key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise TrajectoryParseError(f"{where}.{key} must be a string")
    return value


def _parse_int(obj: Mapping[str, Any], key: str, where: str) -> int:
    value = obj.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise TrajectoryParseError(f"{where}.{key} must be an integer")
    return value


def _parse_obj(value: Any, where: str) -> Mapping[str, Any]:
    if not isinstance(value, dict):
        raise TrajectoryParseError(f"{where} must be an object")
    return value


def deserialize_trajectory(doc: str) -> Trajectory:
    """Parse a canonical trajectory document, re-validating every invariant.

    Raises :class:`TrajectoryParseError` for malformed documents and
    :class:`InvariantViolation` for well-formed documents whose values break
    domain invariants (the two are deliberately distinguishable).
    """
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise TrajectoryParseError(f"not valid JSON: {exc}") from exc
    root = _parse_obj(data, "document")
    version = root.get("version")
    if version != TRAJECTORY_FORMAT_VERSION:
        raise TrajectoryParseError(f"unsupported trajectory format version: {version!r}")

    goal_obj = _parse_obj(root.get("goal"), "goal")
    goal = Goal(_parse_str(goal_obj, "text", "goal"), _parse_str(goal_obj, "starting_url", "goal"))

    plan_obj = _parse_obj(root.get("initial_plan"), "initial_plan")
    try:
        provenance = PlanProvenance(_parse_str(plan_obj, "provenance", "initial_plan"))
    except ValueError as exc:
        raise TrajectoryParseError(f"unknown plan provenance: {exc}") from exc
    plan = Plan(
        _parse_str(plan_obj, "text", "initial_plan"),
        _parse_int(plan_obj, "revision", "initial_plan"),
        provenance,
    )

    steps_val = root.get("steps")
    if not isinstance(steps_val, list):
        raise TrajectoryParseError("steps must be a list")
    steps: list[TrajectoryStep] = []
    for i, raw in enumerate(steps_val):
        where = f"steps[{i}]"
        step_obj = _parse_obj(raw, where)
        action_obj = _parse_obj(step_obj.get("action"), f"{where}.action")
        action = ActionDescription(
            _parse_str(action_obj, "text", f"{where}.action"),
            _parse_int(action_obj, "step_index", f"{where}.action"),
        )
        grounded_val = step_obj.get("grounded")
        grounded: GroundedAction | None = None
        if grounded_val is not None:
            g_obj = _parse_obj(grounded_val, f"{where}.grounded")
            try:
                kind = ActionKind(_parse_str(g_obj, "kind", f"{where}.grounded"))
            except ValueError as exc:
                raise TrajectoryParseError(f"unknown action kind: {exc}") from exc
            args_val = g_obj.get("arguments", {})
            args = _parse_obj(args_val, f"{where}.grounded.arguments")
            if not all(isinstance(k, str) and isinstance(v, str) for k, v in args.items()):
                raise TrajectoryParseError(f"{where}.grounded.arguments must map strings to strings")
            selector_val = g_obj.get("selector")
            if selector_val is not None and not isinstance(selector_val, str):
                raise TrajectoryParseError(f"{where}.grounded.selector must be a string or null")
            grounded = GroundedAction(
                kind=kind,
                selector=selector_val,
                arguments=dict(args),
                source_step=_parse_int(g_obj, "source_step", f"{where}.grounded"),
            )
        eval_obj = _parse_obj(step_obj.get("evaluation"), f"{where}.evaluation")
        try:
            status = EvalStatus(_parse_str(eval_obj, "status", f"{where}.evaluation"))
        except ValueError as exc:
            raise TrajectoryParseError(f"unknown evaluation status: {exc}") from exc
        evaluation = EvaluationRecord(
            status,
            _parse_str(eval_obj, "message", f"{where}.evaluation"),
            _parse_str(eval_obj, "page_summary", f"{where}.evaluation"),
        )
        steps.append(
            TrajectoryStep(
                action=action,
                grounded=grounded,
                evaluation=evaluation,
                pre_url=_parse_str(step_obj, "pre_url", where),
                post_url=_parse_str(step_obj, "post_url", where),
            )
        )
    return Trajectory(goal=goal, initial_plan=plan, steps=tuple(steps))
