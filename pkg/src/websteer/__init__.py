"""websteer: orchestration for VLM-driven web agents.

Action generation is decoupled from grounding: policies decide the next
step from plan and history alone, grounding binds it to the live page via
set-of-marks observations, and a CDP driver executes it. Episodes stream
events over an HTTP/SSE service, trajectories replay deterministically,
and tree search (BFS/DFS/MCTS) explores alternative action sequences.
"""

from .agents import (
    AgentKind,
    AgentPolicyError,
    EpisodeConfig,
    run_episode,
)
from .browser import (
    BrowserEnvironmentConfig,
    BrowserMode,
    DriverConnectError,
    DriverError,
    DriverLost,
    DriverSession,
    open_session,
)
from .grounding import (
    ACTION_TOOLS,
    GroundingConfig,
    GroundingError,
    UnresolvableTargetError,
    ground_action,
)
from .llm import (
    HttpChatProvider,
    LlmGateway,
    ModelConfig,
    ScriptedProvider,
    ToolCall,
)
from .memory import MemoryStore, WorkflowMemoryEntry, induce_workflow, retrieve
from .model import (
    ActionDescription,
    ActionKind,
    EvaluationRecord,
    Goal,
    GroundedAction,
    Observation,
    ObservationFeature,
    Plan,
    Trajectory,
    TrajectoryStep,
    deserialize_trajectory,
    serialize_trajectory,
)
from .replay import ReplayResult, replay_trajectory
from .search import SearchConfig, SearchRunner, SearchStrategy, uct_score, value_of
from .selectors import SelectorSynthesisError, is_stable_identifier, unique_selector
from .service import create_app, serve

__all__ = [
    "ACTION_TOOLS",
    "ActionDescription",
    "ActionKind",
    "AgentKind",
    "AgentPolicyError",
    "BrowserEnvironmentConfig",
    "BrowserMode",
    "DriverConnectError",
    "DriverError",
    "DriverLost",
    "DriverSession",
    "EpisodeConfig",
    "EvaluationRecord",
    "Goal",
    "GroundedAction",
    "GroundingConfig",
    "GroundingError",
    "HttpChatProvider",
    "LlmGateway",
    "MemoryStore",
    "ModelConfig",
    "Observation",
    "ObservationFeature",
    "Plan",
    "ReplayResult",
    "ScriptedProvider",
    "SearchConfig",
    "SearchRunner",
    "SearchStrategy",
    "SelectorSynthesisError",
    "ToolCall",
    "Trajectory",
    "TrajectoryStep",
    "UnresolvableTargetError",
    "WorkflowMemoryEntry",
    "create_app",
    "deserialize_trajectory",
    "ground_action",
    "induce_workflow",
    "is_stable_identifier",
    "open_session",
    "replay_trajectory",
    "retrieve",
    "run_episode",
    "serialize_trajectory",
    "serve",
    "uct_score",
    "unique_selector",
    "value_of",
]
