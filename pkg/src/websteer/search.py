"""Tree search over action sequences: BFS, DFS, and MCTS with UCT.

Each node is one executed action reached by replaying the path from the
root. Node values come from a model judgment of the trajectory so far.
MCTS spends its budget selectively; BFS and DFS expand exhaustively and
evaluate every node they execute.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from .agents import (
    AgentKind,
    EVENT_SEARCH_PROGRESS,
    EventSink,
    history_lines,
    next_action_messages,
    render_action_text,
)
from .browser import DriverSession
from .grounding import GENERATION_TOOLS, GroundingConfig, GroundingError, ground_action
from .llm import (
    LlmGateway,
    ModelConfig,
    ToolArgumentError,
    ToolNameError,
    system,
    user,
)
from .model import (
    ActionDescription,
    ActionKind,
    EvaluationRecord,
    Goal,
    GroundedAction,
    ImageHandle,
    InvariantViolation,
    Plan,
    Trajectory,
    TrajectoryStep,
    failure,
)
from .replay import replay_trajectory

logger = logging.getLogger(__name__)


class SearchError(Exception):
    """The search produced no evaluated node to choose a trajectory from."""


class SearchStrategy(str, Enum):
    BFS = "bfs"
    DFS = "dfs"
    MCTS = "mcts"


@dataclass(frozen=True)
class SearchConfig:
    strategy: SearchStrategy = SearchStrategy.MCTS
    branching_k: int = 3
    max_depth: int = 3
    iterations: int = 10
    exploration_c: float = math.sqrt(2.0)
    sample_temperature: float | None = 1.0
    value_threshold: float = 0.95

    def __post_init__(self) -> None:
        if self.branching_k < 1:
            raise ValueError("branching_k must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.exploration_c < 0:
            raise ValueError("exploration_c must be >= 0")
        if not 0 < self.value_threshold <= 1:
            raise ValueError("value_threshold must be in (0, 1]")


def uct_score(visits: int, total_value: float, parent_visits: int, exploration_c: float) -> float:
    """UCT: Q + c * sqrt(ln(N_parent) / N). Unvisited nodes score +inf."""
    if visits == 0:
        return math.inf
    return total_value / visits + exploration_c * math.sqrt(math.log(parent_visits) / visits)


# --- trajectory value judgment ---

VALUE_SYSTEM = (
    "You judge how close a web-browsing trajectory is to completing its "
    "goal. Reply with one decimal number between 0 and 1."
)

_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)")


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    clamped: bool = False
    unparseable: bool = False


async def value_of(
    goal: Goal,
    plan: Plan,
    trajectory: Trajectory,
    screenshot: ImageHandle | None,
    gateway: LlmGateway,
    model_cfg: ModelConfig,
) -> ValueEstimate:
    """Score a non-empty trajectory in [0, 1].

    Out-of-range numbers are clamped and flagged. An unparseable reply gets
    one corrective re-prompt, then scores 0.0 with the unparseable flag set.
    """
    if not trajectory.steps:
        raise InvariantViolation("value_of requires a non-empty trajectory")
    lines = [f"Goal: {goal.text}", "", "Plan:", plan.text, "", "Steps taken:"]
    lines += history_lines(trajectory.steps)
    lines += ["", "How complete is the goal, from 0 (no progress) to 1 (done)?"]
    images = (screenshot,) if screenshot is not None else ()
    messages = [system(VALUE_SYSTEM), user("\n".join(lines), images=images)]

    for attempt in (0, 1):
        text = await gateway.complete(messages, model_cfg, tag="value")
        match = _NUMBER_RE.search(text)
        if match:
            raw = float(match.group())
            if 0.0 <= raw <= 1.0:
                return ValueEstimate(raw)
            return ValueEstimate(min(max(raw, 0.0), 1.0), clamped=True)
        if attempt == 0:
            messages.append(user("Reply with only one decimal number between 0 and 1."))
    return ValueEstimate(0.0, unparseable=True)


async def sample_actions(
    goal: Goal,
    plan: Plan,
    steps: Sequence[TrajectoryStep],
    k: int,
    step_index: int,
    gateway: LlmGateway,
    model_cfg: ModelConfig,
) -> list[ActionDescription]:
    """Sample up to k candidate actions; duplicates collapse by rendered text.

    A plain-text reply is the policy signaling completion: sampling stops
    and whatever was collected so far is the candidate set (possibly empty,
    which makes the node terminal).
    """
    seen: set[str] = set()
    actions: list[ActionDescription] = []
    messages = next_action_messages(goal, plan, plan, steps, AgentKind.FUNCTION_CALLING)
    for _ in range(k):
        try:
            reply = await gateway.complete_with_tools(
                messages, GENERATION_TOOLS, model_cfg, tag="next_action"
            )
        except (ToolNameError, ToolArgumentError) as exc:
            logger.warning("discarding invalid sampled call: %s", exc)
            continue
        if isinstance(reply, str):
            break
        text = render_action_text(reply[0])
        if text not in seen:
            seen.add(text)
            actions.append(ActionDescription(text, step_index))
    return actions


# --- the search tree ---


@dataclass
class SearchNode:
    node_id: int
    parent: int | None
    action: ActionDescription | None  # None only at the root
    depth: int
    grounded: GroundedAction | None = None
    evaluation: EvaluationRecord | None = None
    pre_url: str = ""
    post_url: str = ""
    visits: int = 0
    total_value: float = 0.0
    children: list[int] = field(default_factory=list)
    candidates_sampled: bool = False
    executed: bool = False
    invalid: bool = False
    terminal: bool = False
    value: float | None = None  # latest value judgment
    value_unparseable: bool = False

    @property
    def q(self) -> float:
        return self.total_value / self.visits if self.visits else 0.0


class SearchTree:
    def __init__(self) -> None:
        root = SearchNode(node_id=0, parent=None, action=None, depth=0, executed=True)
        self.nodes: dict[int, SearchNode] = {0: root}
        self._next_id = 1

    @property
    def root(self) -> SearchNode:
        return self.nodes[0]

    def new_child(self, parent: SearchNode, action: ActionDescription) -> SearchNode:
        node = SearchNode(
            node_id=self._next_id,
            parent=parent.node_id,
            action=action,
            depth=parent.depth + 1,
        )
        self._next_id += 1
        self.nodes[node.node_id] = node
        parent.children.append(node.node_id)
        return node

    def children_of(self, node: SearchNode) -> list[SearchNode]:
        return [self.nodes[c] for c in node.children]

    def path_to(self, node: SearchNode) -> list[SearchNode]:
        path = [node]
        while path[-1].parent is not None:
            path.append(self.nodes[path[-1].parent])
        return list(reversed(path))

    def export(self, best_path: Sequence[int] = ()) -> dict[str, Any]:
        """JSON-friendly snapshot for progress events and the UI tree view."""
        nodes = []
        for node in self.nodes.values():
            nodes.append(
                {
                    "id": node.node_id,
                    "parent": node.parent,
                    "action": node.action.text if node.action else None,
                    "depth": node.depth,
                    "visits": node.visits,
                    "total_value": node.total_value,
                    "q": node.q,
                    "value": node.value,
                    "executed": node.executed,
                    "invalid": node.invalid,
                    "terminal": node.terminal,
                    "url": node.post_url,
                }
            )
        return {"root": 0, "nodes": nodes, "best_path": list(best_path)}


class SearchRunner:
    """Runs one search strategy for one goal against a live driver session."""

    def __init__(
        self,
        goal: Goal,
        plan: Plan,
        config: SearchConfig,
        session: DriverSession,
        gateway: LlmGateway,
        model_cfg: ModelConfig,
        grounding: GroundingConfig | None = None,
        event_sink: EventSink | None = None,
    ) -> None:
        self.goal = goal
        self.plan = plan
        self.config = config
        self.session = session
        self.gateway = gateway
        self.model_cfg = model_cfg
        self.grounding = grounding or GroundingConfig()
        self.emit: EventSink = event_sink or (lambda kind, data: None)
        self.tree = SearchTree()
        self.expansion_log: list[int] = [0]  # node ids in execution order
        self.completed_iterations = 0
        if config.sample_temperature is not None:
            self.sample_cfg = dataclasses.replace(
                model_cfg, temperature=config.sample_temperature
            )
        else:
            self.sample_cfg = model_cfg

    # --- shared plumbing ---

    def trajectory_to(self, node: SearchNode) -> Trajectory:
        """The root-to-node action sequence as a standalone trajectory."""
        steps = []
        for i, n in enumerate(self.tree.path_to(node)[1:]):
            assert n.action is not None and n.evaluation is not None
            action = ActionDescription(n.action.text, i)
            grounded = (
                dataclasses.replace(n.grounded, source_step=i) if n.grounded else None
            )
            steps.append(TrajectoryStep(action, grounded, n.evaluation, n.pre_url, n.post_url))
        return Trajectory(self.goal, self.plan, tuple(steps))

    async def _restore(self, node: SearchNode) -> bool:
        """Replay the path to the node; divergence marks it invalid."""
        result = await replay_trajectory(self.trajectory_to(node), self.session)
        if not result.ok:
            node.invalid = True
            logger.warning(
                "restore of node %d failed (diverged_at=%s)", node.node_id, result.diverged_at
            )
            return False
        return True

    async def _sample_at(self, node: SearchNode) -> None:
        trajectory = self.trajectory_to(node)
        actions = await sample_actions(
            self.goal,
            self.plan,
            trajectory.steps,
            self.config.branching_k,
            node.depth,
            self.gateway,
            self.sample_cfg,
        )
        node.candidates_sampled = True
        if not actions:
            node.terminal = True
            return
        for action in actions:
            self.tree.new_child(node, action)

    async def _execute_child(self, child: SearchNode) -> None:
        """Ground and execute a child's action from its parent's restored state."""
        assert child.action is not None
        child.pre_url = await self.session.current_url()
        observation = await self.session.capture_observation(self.grounding.features)
        try:
            grounded = await ground_action(
                child.action, observation, self.session, self.gateway, self.model_cfg, self.grounding
            )
        except GroundingError as exc:
            child.evaluation = failure(f"grounding failed: {exc}")
            child.post_url = child.pre_url
            child.executed = True
            self.expansion_log.append(child.node_id)
            return
        child.grounded = grounded
        child.evaluation = await self.session.execute(grounded)
        child.post_url = await self.session.current_url()
        child.executed = True
        self.expansion_log.append(child.node_id)
        if grounded.kind is ActionKind.FINISH:
            child.terminal = True

    async def _evaluate(self, node: SearchNode) -> float:
        shot = await self.session.screenshot()
        estimate = await value_of(
            self.goal, self.plan, self.trajectory_to(node), shot, self.gateway, self.model_cfg
        )
        node.value = estimate.value
        node.value_unparseable = estimate.unparseable
        if estimate.value >= self.config.value_threshold:
            node.terminal = True
        return estimate.value

    def _backpropagate(self, node: SearchNode, value: float) -> None:
        current: SearchNode | None = node
        while current is not None:
            current.visits += 1
            current.total_value += value
            current = self.tree.nodes[current.parent] if current.parent is not None else None

    def _emit_progress(self, iteration: int) -> None:
        best_path = self._best_path_ids()
        self.emit(
            EVENT_SEARCH_PROGRESS,
            {
                "strategy": self.config.strategy.value,
                "iteration": iteration,
                "node_count": len(self.tree.nodes),
                "tree": self.tree.export(best_path),
            },
        )

    # --- BFS / DFS ---

    async def _expand_children(self, node: SearchNode, budget: list[int]) -> list[SearchNode]:
        """Restore, sample, and execute-evaluate each child. Returns executed children."""
        if not await self._restore(node):
            return []
        if not node.candidates_sampled:
            await self._sample_at(node)
        executed = []
        for child in self.tree.children_of(node):
            if budget[0] <= 0:
                break
            if child.executed or child.invalid:
                continue
            if not await self._restore(node):
                break
            await self._execute_child(child)
            await self._evaluate(child)
            budget[0] -= 1
            executed.append(child)
            self._emit_progress(len(self.expansion_log) - 1)
        return executed

    async def _run_bfs(self) -> None:
        budget = [self.config.iterations]
        frontier = [self.tree.root]
        while frontier and budget[0] > 0:
            next_frontier: list[SearchNode] = []
            for node in frontier:
                if budget[0] <= 0:
                    break
                if node.terminal or node.invalid or node.depth >= self.config.max_depth:
                    continue
                next_frontier.extend(await self._expand_children(node, budget))
            frontier = next_frontier

    async def _run_dfs(self, node: SearchNode, budget: list[int]) -> None:
        if budget[0] <= 0 or node.terminal or node.invalid or node.depth >= self.config.max_depth:
            return
        if not await self._restore(node):
            return
        if not node.candidates_sampled:
            await self._sample_at(node)
        for child in self.tree.children_of(node):
            if budget[0] <= 0:
                return
            if child.executed or child.invalid:
                continue
            if not await self._restore(node):
                return
            await self._execute_child(child)
            await self._evaluate(child)
            budget[0] -= 1
            self._emit_progress(len(self.expansion_log) - 1)
            await self._run_dfs(child, budget)

    # --- MCTS ---

    async def _mcts_iteration(self) -> bool:
        """One select-expand-evaluate-backpropagate pass. True if backpropagated."""
        node = self.tree.root
        mode = "evaluate"
        while True:
            if node.terminal or node.depth >= self.config.max_depth:
                mode = "evaluate"
                break
            if not node.candidates_sampled:
                mode = "expand"
                break
            children = [c for c in self.tree.children_of(node) if not c.invalid]
            unexecuted = [c for c in children if not c.executed]
            if unexecuted:
                mode = "expand"
                break
            if not children:
                mode = "evaluate"  # every branch below is invalid; judge the node itself
                break
            node = max(
                children,
                key=lambda c: uct_score(
                    c.visits, c.total_value, max(node.visits, 1), self.config.exploration_c
                ),
            )

        if mode == "expand":
            if not await self._restore(node):
                return False
            if not node.candidates_sampled:
                await self._sample_at(node)
            pending = [
                c for c in self.tree.children_of(node) if not c.executed and not c.invalid
            ]
            if not pending:
                # sampling came back empty: the node is terminal, judge it instead
                if node.parent is None:
                    return False  # nothing to evaluate at an empty root
                value = await self._evaluate(node)
                self._backpropagate(node, value)
                return True
            child = pending[0]
            await self._execute_child(child)
            value = await self._evaluate(child)
            self._backpropagate(child, value)
            return True

        if node.parent is None:
            return False  # cannot judge an empty trajectory
        if not await self._restore(node):
            return False
        value = await self._evaluate(node)
        self._backpropagate(node, value)
        return True

    async def _run_mcts(self) -> None:
        for i in range(self.config.iterations):
            root = self.tree.root
            if root.terminal and not root.children:
                break  # the policy had no first action to try
            if await self._mcts_iteration():
                self.completed_iterations += 1
            self._emit_progress(i + 1)

    # --- best-trajectory selection ---

    def _best_path_ids(self) -> list[int]:
        if self.config.strategy is SearchStrategy.MCTS:
            path = []
            node = self.tree.root
            while True:
                candidates = [
                    c for c in self.tree.children_of(node)
                    if c.executed and not c.invalid and c.visits > 0
                ]
                if not candidates:
                    break
                node = max(candidates, key=lambda c: (c.visits, c.q, -c.node_id))
                path.append(node.node_id)
            return path
        best = self._best_simple_node()
        if best is None:
            return []
        return [n.node_id for n in self.tree.path_to(best)[1:]]

    def _best_simple_node(self) -> SearchNode | None:
        candidates = [
            n for n in self.tree.nodes.values()
            if n.parent is not None and n.value is not None and not n.invalid
        ]
        if not candidates:
            return None
        return max(candidates, key=lambda n: (n.value, -n.node_id))

    def best_trajectory(self) -> Trajectory:
        """The best action sequence found, per the strategy's selection rule."""
        path = self._best_path_ids()
        if not path:
            raise SearchError("search evaluated no nodes")
        return self.trajectory_to(self.tree.nodes[path[-1]])

    async def run(self) -> Trajectory:
        if self.config.strategy is SearchStrategy.BFS:
            await self._run_bfs()
        elif self.config.strategy is SearchStrategy.DFS:
            await self._run_dfs(self.tree.root, [self.config.iterations])
        else:
            await self._run_mcts()
        return self.best_trajectory()
