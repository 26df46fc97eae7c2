"""Agent policies and the episode loop.

Action generation is decoupled from grounding: the generation prompts carry
the goal, the plan, and the (action, evaluation) history, never raw page
observations. Grounding alone sees the page.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

from .browser import DriverLost, DriverSession
from .grounding import (
    GENERATION_TOOLS,
    GroundingConfig,
    GroundingError,
    describe_element,
    ground_action,
)
from .llm import (
    ChatMessage,
    EmptyCompletionError,
    GatewayError,
    LlmGateway,
    ModelConfig,
    ToolArgumentError,
    ToolCall,
    ToolNameError,
    system,
    user,
)
from .memory import MemoryStore, WorkflowMemoryEntry, induce_workflow
from .model import (
    ActionDescription,
    ActionKind,
    Goal,
    Observation,
    Plan,
    PlanProvenance,
    Trajectory,
    TrajectoryStep,
    failure,
)

logger = logging.getLogger(__name__)

FINISH_TOKEN = "FINISH"

EVENT_PLAN_GENERATED = "plan_generated"
EVENT_REPLANNED = "replanned"
EVENT_ACTION_GENERATED = "action_generated"
EVENT_ACTION_GROUNDED = "action_grounded"
EVENT_ACTION_EXECUTED = "action_executed"
EVENT_SEARCH_PROGRESS = "search_progress"
EVENT_DONE = "done"
EVENT_ERROR = "error"

EVENT_KINDS = frozenset(
    {
        EVENT_PLAN_GENERATED,
        EVENT_REPLANNED,
        EVENT_ACTION_GENERATED,
        EVENT_ACTION_GROUNDED,
        EVENT_ACTION_EXECUTED,
        EVENT_SEARCH_PROGRESS,
        EVENT_DONE,
        EVENT_ERROR,
    }
)

# sink(kind, data); consumers that need ordering wrap this in a sequenced buffer
EventSink = Callable[[str, dict[str, Any]], None]


class AgentKind(str, Enum):
    FUNCTION_CALLING = "function_calling"
    HIGH_LEVEL_PLANNING = "high_level_planning"
    CONTEXT_AWARE_PLANNING = "context_aware_planning"
    PROMPT = "prompt"


PLANNING_KINDS = frozenset({AgentKind.HIGH_LEVEL_PLANNING, AgentKind.CONTEXT_AWARE_PLANNING})


class AgentPolicyError(Exception):
    """The model broke the policy protocol even after a corrective re-prompt."""


@dataclass(frozen=True)
class EpisodeConfig:
    agent_kind: AgentKind = AgentKind.FUNCTION_CALLING
    max_steps: int = 8
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    replan_every: int = 1
    memory_enabled: bool = False

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.replan_every < 1:
            raise ValueError("replan_every must be >= 1")


PLANNING_SYSTEM = (
    "You plan web-browsing tasks. Write a short numbered plan of concrete "
    "browser steps that accomplishes the goal."
)

GENERATION_SYSTEM_TOOLS = (
    "You drive a web browser one step at a time. Call exactly one tool for "
    "the next action. When the goal is complete, reply with plain text "
    "instead of calling a tool."
)

GENERATION_SYSTEM_PROMPT = (
    "You drive a web browser one step at a time. Reply with exactly one "
    "next action as a short plain-text imperative. When the goal is "
    f"complete, reply with the single word {FINISH_TOKEN}."
)


def render_action_text(call: ToolCall) -> str:
    """Render a generation tool call as canonical natural-language action text."""
    a = call.arguments
    name = call.name
    if name == "navigate":
        return f"navigate to {a.get('url', '')}".strip()
    if name == "click":
        return f"click element [{a.get('mark', '?')}]"
    if name == "fill":
        return f"fill element [{a.get('mark', '?')}] with '{a.get('value', '')}'"
    if name == "select_option":
        return f"select '{a.get('value', '')}' in element [{a.get('mark', '?')}]"
    if name == "scroll":
        direction = a.get("direction") or "down"
        return f"scroll {direction}"
    if name == "upload_file":
        return f"upload '{a.get('path', '')}' to element [{a.get('mark', '?')}]"
    if name == "scrape":
        mark = a.get("mark")
        return f"scrape element [{mark}]" if mark else "scrape the page"
    if name == "go_back":
        return "go back"
    if name == "finish":
        return "finish"
    raise AgentPolicyError(f"no action rendering for tool {name!r}")


def history_lines(steps: Sequence[TrajectoryStep]) -> list[str]:
    """One line per executed step: action, outcome, post-action page summary."""
    lines = []
    for i, s in enumerate(steps, start=1):
        outcome = "ok" if s.evaluation.ok else "failed"
        line = f"{i}. {s.action.text} -> {outcome}"
        if s.evaluation.message:
            line += f": {s.evaluation.message}"
        if s.evaluation.page_summary:
            line += f" | page: {s.evaluation.page_summary}"
        lines.append(line)
    return lines


def _workflow_lines(workflows: Sequence[WorkflowMemoryEntry]) -> list[str]:
    lines = []
    for w in workflows:
        lines.append(f"- {w.task_summary}")
        lines.extend(f"    {i}. {step}" for i, step in enumerate(w.steps, start=1))
    return lines


def planning_messages(
    goal: Goal, workflows: Sequence[WorkflowMemoryEntry] = ()
) -> list[ChatMessage]:
    lines = [f"Goal: {goal.text}", f"Starting URL: {goal.starting_url}"]
    if workflows:
        lines += ["", "Workflows that solved similar tasks:"]
        lines += _workflow_lines(workflows)
    lines += ["", "Write the plan."]
    return [system(PLANNING_SYSTEM), user("\n".join(lines))]


async def generate_initial_plan(
    goal: Goal,
    gateway: LlmGateway,
    model_cfg: ModelConfig,
    workflows: Sequence[WorkflowMemoryEntry] = (),
) -> Plan:
    text = await gateway.complete(planning_messages(goal, workflows), model_cfg, tag="plan")
    return Plan(text.strip(), revision=0, provenance=PlanProvenance.GENERATED)


def next_action_messages(
    goal: Goal,
    initial_plan: Plan,
    current_plan: Plan,
    steps: Sequence[TrajectoryStep],
    agent_kind: AgentKind,
) -> list[ChatMessage]:
    sys_text = (
        GENERATION_SYSTEM_PROMPT if agent_kind is AgentKind.PROMPT else GENERATION_SYSTEM_TOOLS
    )
    lines = [f"Goal: {goal.text}", "", "Plan:", initial_plan.text]
    if current_plan.revision > 0:
        lines += ["", f"Revised plan (revision {current_plan.revision}):", current_plan.text]
    lines += ["", "Steps so far:"]
    lines += history_lines(steps) or ["(none yet)"]
    lines += ["", "Decide the next action, or stop if the goal is complete."]
    return [system(sys_text), user("\n".join(lines))]


async def next_action(
    goal: Goal,
    initial_plan: Plan,
    current_plan: Plan,
    steps: Sequence[TrajectoryStep],
    agent_kind: AgentKind,
    step_index: int,
    gateway: LlmGateway,
    model_cfg: ModelConfig,
) -> ActionDescription | None:
    """Generate the next action, or None when the policy decides to stop."""
    messages = next_action_messages(goal, initial_plan, current_plan, steps, agent_kind)

    if agent_kind is AgentKind.PROMPT:
        for attempt in (0, 1):
            try:
                text = await gateway.complete(messages, model_cfg, tag="next_action")
            except EmptyCompletionError as exc:
                if attempt == 0:
                    messages.append(
                        user(f"Reply with one action, or {FINISH_TOKEN} if the goal is complete.")
                    )
                    continue
                raise AgentPolicyError(f"empty action reply after re-prompt: {exc}") from exc
            stripped = text.strip()
            if stripped == FINISH_TOKEN:
                return None
            return ActionDescription(stripped, step_index)
        raise AssertionError("unreachable")

    for attempt in (0, 1):
        try:
            reply = await gateway.complete_with_tools(
                messages, GENERATION_TOOLS, model_cfg, tag="next_action"
            )
        except (ToolNameError, ToolArgumentError, EmptyCompletionError) as exc:
            if attempt == 0:
                messages.append(
                    user(
                        f"That was invalid: {exc}. Call exactly one tool, "
                        "or reply with plain text to stop."
                    )
                )
                continue
            raise AgentPolicyError(f"invalid generation call after re-prompt: {exc}") from exc
        if isinstance(reply, str):
            return None
        # several calls in one reply: the first one is the step
        return ActionDescription(render_action_text(reply[0]), step_index)
    raise AssertionError("unreachable")


def _observation_lines(observation: Observation) -> list[str]:
    lines = [f"Current URL: {observation.url}"]
    if observation.interactive_elements is not None:
        lines += ["Interactive elements:"]
        lines += [describe_element(e) for e in observation.interactive_elements] or ["(none)"]
    if observation.axtree_text is not None:
        lines += ["Accessibility tree:", observation.axtree_text]
    return lines


async def replan(
    goal: Goal,
    current_plan: Plan,
    steps: Sequence[TrajectoryStep],
    agent_kind: AgentKind,
    gateway: LlmGateway,
    model_cfg: ModelConfig,
    observation: Observation | None = None,
    workflows: Sequence[WorkflowMemoryEntry] = (),
) -> Plan:
    """Produce the next plan revision. Context-aware replanning also reads the page."""
    if agent_kind not in PLANNING_KINDS:
        raise ValueError(f"{agent_kind.value} does not replan")
    if agent_kind is AgentKind.CONTEXT_AWARE_PLANNING and observation is None:
        raise ValueError("context_aware_planning replan requires an observation")

    lines = [f"Goal: {goal.text}", "", "Previous plan:", current_plan.text, "", "Steps so far:"]
    lines += history_lines(steps) or ["(none yet)"]
    if agent_kind is AgentKind.CONTEXT_AWARE_PLANNING and observation is not None:
        lines += ["", "Current page:"]
        lines += _observation_lines(observation)
    if workflows:
        lines += ["", "Workflows that solved similar tasks:"]
        lines += _workflow_lines(workflows)
    lines += ["", "Revise the plan for what remains."]
    messages = [system(PLANNING_SYSTEM), user("\n".join(lines))]
    text = await gateway.complete(messages, model_cfg, tag="plan")
    return Plan(
        text.strip(),
        revision=current_plan.revision + 1,
        provenance=PlanProvenance.REPLANNED,
    )


async def run_episode(
    goal: Goal,
    config: EpisodeConfig,
    session: DriverSession,
    gateway: LlmGateway,
    model_cfg: ModelConfig,
    user_plan: str | None = None,
    memory_store: MemoryStore | None = None,
    event_sink: EventSink | None = None,
) -> Trajectory:
    """Run one generate-ground-execute episode and return its trajectory.

    Emits exactly one terminal event (done or error). Step-level failures
    (grounding, execution) are recorded and the episode continues; driver
    loss, gateway failure, and protocol exhaustion end it with an error event.
    """
    emit: EventSink = event_sink or (lambda kind, data: None)

    nav = await session.navigate(goal.starting_url)
    if not nav.ok:
        emit(EVENT_ERROR, {"error": f"initial navigation failed: {nav.message}", "steps": 0})
        placeholder = Plan("(not planned)", revision=0, provenance=PlanProvenance.GENERATED)
        return Trajectory(goal, placeholder, ())

    workflows: Sequence[WorkflowMemoryEntry] = ()
    if config.memory_enabled and memory_store is not None:
        workflows = memory_store.retrieve(goal)

    steps: list[TrajectoryStep] = []
    initial_plan = Plan("", 0, PlanProvenance.GENERATED)  # replaced below
    try:
        if user_plan is not None:
            initial_plan = Plan(user_plan, revision=0, provenance=PlanProvenance.USER_SUPPLIED)
        else:
            initial_plan = await generate_initial_plan(goal, gateway, model_cfg, workflows)
        emit(
            EVENT_PLAN_GENERATED,
            {
                "plan": initial_plan.text,
                "revision": initial_plan.revision,
                "provenance": initial_plan.provenance.value,
            },
        )
        current_plan = initial_plan

        reason = "max_steps"
        for t in range(config.max_steps):
            if config.agent_kind in PLANNING_KINDS and t > 0 and t % config.replan_every == 0:
                replan_obs = None
                if config.agent_kind is AgentKind.CONTEXT_AWARE_PLANNING:
                    replan_obs = await session.capture_observation(config.grounding.features)
                current_plan = await replan(
                    goal,
                    current_plan,
                    steps,
                    config.agent_kind,
                    gateway,
                    model_cfg,
                    observation=replan_obs,
                    workflows=workflows,
                )
                emit(
                    EVENT_REPLANNED,
                    {"step": t, "plan": current_plan.text, "revision": current_plan.revision},
                )

            action = await next_action(
                goal, initial_plan, current_plan, steps, config.agent_kind, t, gateway, model_cfg
            )
            if action is None:
                reason = "policy_stop"
                break
            emit(EVENT_ACTION_GENERATED, {"step": t, "action": action.text})

            pre_url = await session.current_url()
            observation = await session.capture_observation(config.grounding.features)
            try:
                grounded = await ground_action(
                    action, observation, session, gateway, model_cfg, config.grounding
                )
            except GroundingError as exc:
                emit(EVENT_ACTION_GROUNDED, {"step": t, "ok": False, "error": str(exc)})
                evaluation = failure(f"grounding failed: {exc}")
                emit(
                    EVENT_ACTION_EXECUTED,
                    {"step": t, "ok": False, "message": evaluation.message, "url": pre_url},
                )
                steps.append(TrajectoryStep(action, None, evaluation, pre_url, pre_url))
                continue
            emit(
                EVENT_ACTION_GROUNDED,
                {
                    "step": t,
                    "ok": True,
                    "kind": grounded.kind.value,
                    "selector": grounded.selector,
                    "arguments": dict(grounded.arguments),
                },
            )

            if grounded.selector:
                await session.highlight(grounded.selector, action.text)
            evaluation = await session.execute(grounded)
            await session.clear_highlights()
            post_url = await session.current_url()
            emit(
                EVENT_ACTION_EXECUTED,
                {
                    "step": t,
                    "ok": evaluation.ok,
                    "message": evaluation.message,
                    "page_summary": evaluation.page_summary,
                    "url": post_url,
                },
            )
            steps.append(TrajectoryStep(action, grounded, evaluation, pre_url, post_url))
            if grounded.kind is ActionKind.FINISH:
                reason = "finish"
                break
    except (DriverLost, GatewayError, AgentPolicyError) as exc:
        trajectory = Trajectory(goal, initial_plan, tuple(steps))
        emit(EVENT_ERROR, {"error": str(exc), "steps": len(steps)})
        return trajectory

    trajectory = Trajectory(goal, initial_plan, tuple(steps))
    if config.memory_enabled and memory_store is not None and trajectory.success_count > 0:
        entry = induce_workflow(trajectory)
        if entry is not None:
            memory_store.append(entry)
    emit(
        EVENT_DONE,
        {
            "reason": reason,
            "steps": len(steps),
            "success_count": trajectory.success_count,
            "final_url": trajectory.final_url,
        },
    )
    return trajectory
