"""Action grounding: turn one natural-language action into a GroundedAction.

Grounding sees the current observation; action generation never does.
The model addresses elements by their numeric set-of-marks badge, and a
cited mark is converted to a verified unique selector so the resulting
action replays without the model in the loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol, Sequence

from .llm import (
    EmptyCompletionError,
    LlmGateway,
    ModelConfig,
    ChatMessage,
    ToolArgumentError,
    ToolCall,
    ToolNameError,
    ToolParam,
    ToolSchema,
    system,
    user,
)
from .model import (
    SELECTOR_KINDS,
    ActionDescription,
    ActionKind,
    ElementInfo,
    GroundedAction,
    Observation,
    ObservationFeature,
)

logger = logging.getLogger(__name__)

# One canonical tool set shared by action generation and grounding; the
# names are a stable contract for scripted providers.
ACTION_TOOLS: tuple[ToolSchema, ...] = (
    ToolSchema(
        "navigate",
        "Go to an absolute http(s) URL.",
        (ToolParam("url", description="Absolute URL to open.", required=True),),
    ),
    ToolSchema(
        "click",
        "Click an element.",
        (ToolParam("mark", description="Numeric mark of the element.", required=True),),
    ),
    ToolSchema(
        "fill",
        "Type a value into an input or textarea.",
        (
            ToolParam("mark", description="Numeric mark of the field.", required=True),
            ToolParam("value", description="Text to enter.", required=True),
        ),
    ),
    ToolSchema(
        "select_option",
        "Choose an option in a select element.",
        (
            ToolParam("mark", description="Numeric mark of the select.", required=True),
            ToolParam("value", description="Option value or visible label.", required=True),
        ),
    ),
    ToolSchema(
        "scroll",
        "Scroll the page vertically.",
        (ToolParam("direction", description="'up' or 'down' (default down)."),),
    ),
    ToolSchema(
        "upload_file",
        "Attach a local file to a file input.",
        (
            ToolParam("mark", description="Numeric mark of the file input.", required=True),
            ToolParam("path", description="Local file path to attach.", required=True),
        ),
    ),
    ToolSchema(
        "scrape",
        "Read the page markup, or one element's markup.",
        (ToolParam("mark", description="Numeric mark of the element (omit for the page)."),),
    ),
    ToolSchema("go_back", "Go back one history entry.", ()),
    ToolSchema("finish", "Declare the goal complete.", ()),
)

GROUNDING_TOOLS = ACTION_TOOLS
GENERATION_TOOLS = ACTION_TOOLS

DEFAULT_GROUNDING_FEATURES = frozenset(
    {
        ObservationFeature.INTERACTIVE_ELEMENTS,
        ObservationFeature.SOM,
        ObservationFeature.SCREENSHOT,
    }
)

GROUNDING_SYSTEM = (
    "You translate one browser action, described in natural language, into "
    "exactly one tool call against the current page. Address elements by "
    "their numeric mark."
)


class GroundingError(Exception):
    """The action could not be grounded; the step fails but the episode continues."""


class GroundingTextReply(GroundingError):
    """The model answered with prose instead of a tool call."""


class GroundingProtocolError(GroundingError):
    """The model kept violating the one-valid-tool-call protocol after a re-prompt."""


class UnresolvableTargetError(GroundingError):
    """The cited mark does not exist in the observation or no longer resolves."""


class MarkResolver(Protocol):
    """The slice of the driver session grounding needs."""

    async def selector_for_mark(self, mark_id: int) -> str | None: ...


@dataclass(frozen=True)
class GroundingConfig:
    """Which observation features ground actions, and which elements are shown."""

    features: frozenset[ObservationFeature] = DEFAULT_GROUNDING_FEATURES
    element_filter: frozenset[str] | None = None  # allowed tags/roles; None = all

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", frozenset(self.features))
        if self.element_filter is not None:
            object.__setattr__(self, "element_filter", frozenset(self.element_filter))


def describe_element(e: ElementInfo) -> str:
    bits = [e.tag]
    for label, value in (
        ("id", e.id_attr),
        ("name", e.name_attr),
        ("role", e.role),
        ("aria-label", e.aria_label),
        ("type", e.type_attr),
    ):
        if value:
            bits.append(f'{label}="{value}"')
    line = f"[{e.mark_id}] <{' '.join(bits)}>"
    if e.text_excerpt:
        line += f' "{e.text_excerpt}"'
    return line


def _element_passes(e: ElementInfo, element_filter: frozenset[str] | None) -> bool:
    if element_filter is None:
        return True
    return e.tag in element_filter or (e.role or "") in element_filter


def grounding_prompt(
    action: ActionDescription,
    observation: Observation,
    feature_flags: frozenset[ObservationFeature] | None = None,
    element_filter: frozenset[str] | None = None,
) -> list[ChatMessage]:
    """Assemble the grounding prompt. Deterministic: same inputs, same bytes.

    Sections appear in a fixed order (interactive elements, accessibility
    tree, DOM, screenshot) and only for features the flags select.
    """
    flags = observation.features if feature_flags is None else frozenset(feature_flags)
    if not flags <= observation.features:
        missing = ", ".join(sorted(f.value for f in flags - observation.features))
        raise ValueError(f"feature flags not present in the observation: {missing}")

    lines = [f"Action to ground: {action.text}", "", f"Current URL: {observation.url}"]
    if ObservationFeature.INTERACTIVE_ELEMENTS in flags:
        lines += ["", "Interactive elements (cite by mark number):"]
        assert observation.interactive_elements is not None
        shown = [
            describe_element(e)
            for e in observation.interactive_elements
            if _element_passes(e, element_filter)
        ]
        lines += shown if shown else ["(none)"]
    if ObservationFeature.AXTREE in flags:
        assert observation.axtree_text is not None
        lines += ["", "Accessibility tree:", observation.axtree_text]
    if ObservationFeature.DOM in flags:
        assert observation.dom_snapshot is not None
        header = "DOM snapshot (truncated):" if observation.dom_truncated else "DOM snapshot:"
        lines += ["", header, observation.dom_snapshot]
    images = ()
    if ObservationFeature.SCREENSHOT in flags:
        assert observation.screenshot_ref is not None
        lines += ["", "A screenshot of the page is attached."]
        images = (observation.screenshot_ref,)
    lines += ["", "Make exactly one tool call that performs the action."]
    return [system(GROUNDING_SYSTEM), user("\n".join(lines), images=images)]


def _observation_marks(observation: Observation) -> set[int]:
    marks: set[int] = set()
    if observation.som is not None:
        marks.update(m.mark_id for m in observation.som)
    if observation.interactive_elements is not None:
        marks.update(e.mark_id for e in observation.interactive_elements if e.mark_id)
    return marks


def _parse_mark(raw: str) -> int:
    cleaned = str(raw).strip().strip("[]")
    try:
        return int(cleaned)
    except ValueError:
        raise UnresolvableTargetError(f"mark {raw!r} is not a number") from None


async def _one_tool_call(
    messages: list[ChatMessage],
    gateway: LlmGateway,
    cfg: ModelConfig,
) -> ToolCall:
    """Get exactly one valid tool call, allowing a single corrective re-prompt."""
    for attempt in (0, 1):
        try:
            reply = await gateway.complete_with_tools(messages, GROUNDING_TOOLS, cfg, tag="grounding")
        except (ToolNameError, ToolArgumentError, EmptyCompletionError) as exc:
            if attempt == 0:
                messages.append(
                    user(f"That call was invalid: {exc}. Make exactly one valid tool call.")
                )
                continue
            raise GroundingProtocolError(f"invalid tool call after re-prompt: {exc}") from exc
        if isinstance(reply, str):
            raise GroundingTextReply(f"model replied with text instead of a tool call: {reply[:120]}")
        if len(reply) != 1:
            if attempt == 0:
                messages.append(
                    user(f"You made {len(reply)} tool calls; make exactly one.")
                )
                continue
            raise GroundingProtocolError(f"expected one tool call, got {len(reply)} after re-prompt")
        return reply[0]
    raise AssertionError("unreachable")


async def ground_action(
    action: ActionDescription,
    observation: Observation,
    session: MarkResolver,
    gateway: LlmGateway,
    model_cfg: ModelConfig,
    config: GroundingConfig | None = None,
) -> GroundedAction:
    """Ground one action against the page that produced the observation.

    Raises a GroundingError subtype on failure; callers record the failure
    and keep going, because a failed grounding is information for the policy.
    """
    config = config or GroundingConfig()
    messages = grounding_prompt(action, observation, element_filter=config.element_filter)
    call = await _one_tool_call(messages, gateway, model_cfg)

    try:
        kind = ActionKind(call.name)
    except ValueError:
        raise GroundingProtocolError(f"tool {call.name!r} maps to no action kind") from None

    arguments = dict(call.arguments)
    needs_selector = kind in SELECTOR_KINDS or (
        kind is ActionKind.SCRAPE and "mark" in arguments
    )
    if not needs_selector:
        return GroundedAction(kind, None, arguments, source_step=action.step_index)

    mark = _parse_mark(arguments.get("mark", ""))
    known = _observation_marks(observation)
    if mark not in known:
        shown = ", ".join(str(m) for m in sorted(known)) or "none"
        raise UnresolvableTargetError(f"mark {mark} is not in the observation (marks: {shown})")
    selector = await session.selector_for_mark(mark)
    if selector is None:
        raise UnresolvableTargetError(f"mark {mark} no longer resolves to an element")
    return GroundedAction(kind, selector, arguments, source_step=action.step_index)
