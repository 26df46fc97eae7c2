"""HTTP service: browser sessions, instruction submission, and SSE event streams.

Each session owns one browser. Instructions run as background tasks and
append to a per-session event buffer with gap-free sequence numbers, so a
client can resume the stream from any point with `from_seq`.
"""

from __future__ import annotations

import asyncio
import json
import logging
import math
import os
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from importlib import metadata
from typing import Any, AsyncIterator, Awaitable, Callable

from fastapi import FastAPI, HTTPException, Response
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .agents import (
    AgentKind,
    EVENT_DONE,
    EVENT_ERROR,
    EVENT_KINDS,
    EVENT_PLAN_GENERATED,
    EpisodeConfig,
    generate_initial_plan,
    run_episode,
)
from .browser import (
    BrowserEnvironmentConfig,
    BrowserMode,
    DriverConnectError,
    DriverSession,
    open_session,
)
from .grounding import GroundingConfig
from .llm import HttpChatProvider, LlmGateway, ModelConfig, ScriptedProvider, config_from_env
from .memory import MemoryStore
from .model import Goal, InvariantViolation, ObservationFeature, Plan, PlanProvenance
from .search import SearchConfig, SearchError, SearchRunner, SearchStrategy

logger = logging.getLogger(__name__)

TERMINAL_KINDS = frozenset({EVENT_DONE, EVENT_ERROR})


def _package_version() -> str:
    try:
        return metadata.version("websteer")
    except metadata.PackageNotFoundError:
        return "0.0.0"


class EventBuffer:
    """Ordered event log with gap-free seq numbers starting at 1."""

    def __init__(self) -> None:
        self.events: list[dict[str, Any]] = []
        self.closed = False
        self._signal = asyncio.Event()

    @property
    def last_seq(self) -> int:
        return len(self.events)

    def emit(self, kind: str, data: dict[str, Any]) -> None:
        if kind not in EVENT_KINDS:
            raise InvariantViolation(f"unknown event kind {kind!r}")
        self.events.append({"seq": len(self.events) + 1, "kind": kind, "data": data})
        self._wake()

    def close(self) -> None:
        self.closed = True
        self._wake()

    def _wake(self) -> None:
        signal, self._signal = self._signal, asyncio.Event()
        signal.set()

    async def stream_from(self, after_seq: int) -> AsyncIterator[dict[str, Any]]:
        """Yield events with seq > after_seq; end after a terminal event or close."""
        cursor = max(after_seq, 0)
        while True:
            while cursor < len(self.events):
                event = self.events[cursor]
                cursor += 1
                yield event
                if event["kind"] in TERMINAL_KINDS:
                    return
            if self.closed:
                return
            signal = self._signal
            if cursor < len(self.events) or self.closed:
                continue
            await signal.wait()


# --- request bodies ---


class CreateSessionBody(BaseModel):
    mode: str | None = None
    endpoint: str | None = None
    headless: bool = True
    viewport: tuple[int, int] | None = None


class GoalBody(BaseModel):
    text: str
    starting_url: str


class EpisodeBody(BaseModel):
    agent_kind: str = AgentKind.FUNCTION_CALLING.value
    max_steps: int = 8
    replan_every: int = 1
    memory_enabled: bool = False
    features: list[str] | None = None


class SearchBody(BaseModel):
    strategy: str = SearchStrategy.MCTS.value
    branching_k: int = 3
    max_depth: int = 3
    iterations: int = 10
    exploration_c: float = math.sqrt(2.0)
    sample_temperature: float | None = 1.0
    value_threshold: float = 0.95
    features: list[str] | None = None


class InstructionBody(BaseModel):
    goal: GoalBody
    plan: str | None = None
    episode: EpisodeBody | None = None
    search: SearchBody | None = None


@dataclass
class ServiceConfig:
    browser: BrowserEnvironmentConfig = field(
        default_factory=lambda: BrowserEnvironmentConfig(mode=BrowserMode.LAUNCH_LOCAL)
    )
    model: ModelConfig = field(default_factory=ModelConfig)
    scripted_llm_path: str | None = None
    memory_path: str | None = None


def config_from_environment() -> ServiceConfig:
    """Service config from the environment: CDP_ENDPOINT, LLM_*, WEBSTEER_SCRIPTED_LLM."""
    endpoint = os.environ.get("CDP_ENDPOINT") or None
    if endpoint:
        browser = BrowserEnvironmentConfig(mode=BrowserMode.ATTACH_CDP, endpoint=endpoint)
    else:
        browser = BrowserEnvironmentConfig(mode=BrowserMode.LAUNCH_LOCAL)
    return ServiceConfig(
        browser=browser,
        model=config_from_env(),
        scripted_llm_path=os.environ.get("WEBSTEER_SCRIPTED_LLM") or None,
        memory_path=os.environ.get("AWM_STORE_PATH") or None,
    )


@dataclass
class ServiceSession:
    session_id: str
    driver: DriverSession
    buffer: EventBuffer
    task: asyncio.Task | None = None
    instruction_count: int = 0

    @property
    def status(self) -> str:
        if self.task is not None and not self.task.done():
            return "running"
        return "idle"


def _features_from(names: list[str] | None, fallback: frozenset[ObservationFeature]) -> frozenset[ObservationFeature]:
    if names is None:
        return fallback
    try:
        return frozenset(ObservationFeature(n) for n in names)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=f"unknown observation feature: {exc}")


def create_app(
    config: ServiceConfig | None = None,
    gateway_factory: Callable[[], LlmGateway] | None = None,
    driver_factory: Callable[[BrowserEnvironmentConfig], Awaitable[DriverSession]] | None = None,
) -> FastAPI:
    """Build the service app. Factories exist so tests can inject fakes."""
    cfg = config or config_from_environment()
    make_driver = driver_factory or open_session

    def default_gateway() -> LlmGateway:
        if cfg.scripted_llm_path:
            return LlmGateway(ScriptedProvider.from_file(cfg.scripted_llm_path))
        return LlmGateway(HttpChatProvider())

    make_gateway = gateway_factory or default_gateway
    sessions: dict[str, ServiceSession] = {}

    @asynccontextmanager
    async def lifespan(_: FastAPI) -> AsyncIterator[None]:
        yield
        for session_id in list(sessions):
            await _teardown_session(session_id)

    app = FastAPI(title="websteer", version=_package_version(), lifespan=lifespan)
    app.state.sessions = sessions
    app.state.config = cfg

    async def _teardown_session(session_id: str) -> None:
        session = sessions.pop(session_id, None)
        if session is None:
            return
        if session.task is not None and not session.task.done():
            session.task.cancel()
            try:
                await session.task
            except asyncio.CancelledError:
                pass
            except Exception:  # noqa: BLE001
                pass
        session.buffer.close()
        try:
            await session.driver.close()
        except Exception:  # noqa: BLE001
            logger.warning("driver close failed for %s", session_id, exc_info=True)

    def _session_or_404(session_id: str) -> ServiceSession:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return session

    @app.post("/sessions", status_code=201)
    async def create_session(body: CreateSessionBody | None = None) -> dict[str, Any]:
        body = body or CreateSessionBody()
        env = cfg.browser
        if body.mode is not None or body.endpoint is not None or body.viewport is not None:
            try:
                env = BrowserEnvironmentConfig(
                    mode=BrowserMode(body.mode) if body.mode else cfg.browser.mode,
                    endpoint=body.endpoint if body.endpoint is not None else cfg.browser.endpoint,
                    headless=body.headless,
                    viewport=tuple(body.viewport) if body.viewport else cfg.browser.viewport,
                    live_view_url=cfg.browser.live_view_url,
                    nav_grace=cfg.browser.nav_grace,
                    load_timeout=cfg.browser.load_timeout,
                )
            except (ValueError, InvariantViolation) as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        try:
            driver = await make_driver(env)
        except DriverConnectError as exc:
            raise HTTPException(status_code=502, detail=f"browser unavailable: {exc}")
        session = ServiceSession(uuid.uuid4().hex[:16], driver, EventBuffer())
        sessions[session.session_id] = session
        return {
            "session_id": session.session_id,
            "live_view_url": driver.info.live_view_url,
        }

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str) -> dict[str, Any]:
        session = _session_or_404(session_id)
        return {
            "session_id": session.session_id,
            "status": session.status,
            "live_view_url": session.driver.info.live_view_url,
            "last_seq": session.buffer.last_seq,
            "instructions": session.instruction_count,
        }

    @app.delete("/sessions/{session_id}", status_code=204)
    async def delete_session(session_id: str) -> Response:
        await _teardown_session(session_id)
        return Response(status_code=204)

    async def _run_instruction(session: ServiceSession, body: InstructionBody) -> None:
        emit = session.buffer.emit
        try:
            gateway = make_gateway()
            goal = Goal(body.goal.text, body.goal.starting_url)
            if body.search is not None:
                await _run_search(session, goal, body, gateway)
            else:
                episode = body.episode or EpisodeBody()
                grounding = GroundingConfig(
                    features=_features_from(episode.features, GroundingConfig().features)
                )
                episode_cfg = EpisodeConfig(
                    agent_kind=AgentKind(episode.agent_kind),
                    max_steps=episode.max_steps,
                    grounding=grounding,
                    replan_every=episode.replan_every,
                    memory_enabled=episode.memory_enabled,
                )
                store = MemoryStore(cfg.memory_path) if episode.memory_enabled else None
                await run_episode(
                    goal,
                    episode_cfg,
                    session.driver,
                    gateway,
                    cfg.model,
                    user_plan=body.plan,
                    memory_store=store,
                    event_sink=emit,
                )
        except asyncio.CancelledError:
            emit(EVENT_ERROR, {"error": "instruction cancelled"})
            raise
        except Exception as exc:  # noqa: BLE001 -- every instruction must end in a terminal event
            logger.exception("instruction failed")
            emit(EVENT_ERROR, {"error": str(exc)})

    async def _run_search(
        session: ServiceSession, goal: Goal, body: InstructionBody, gateway: LlmGateway
    ) -> None:
        assert body.search is not None
        emit = session.buffer.emit
        search = body.search
        search_cfg = SearchConfig(
            strategy=SearchStrategy(search.strategy),
            branching_k=search.branching_k,
            max_depth=search.max_depth,
            iterations=search.iterations,
            exploration_c=search.exploration_c,
            sample_temperature=search.sample_temperature,
            value_threshold=search.value_threshold,
        )
        grounding = GroundingConfig(
            features=_features_from(search.features, GroundingConfig().features)
        )
        if body.plan is not None:
            plan = Plan(body.plan, revision=0, provenance=PlanProvenance.USER_SUPPLIED)
        else:
            plan = await generate_initial_plan(goal, gateway, cfg.model)
        emit(
            EVENT_PLAN_GENERATED,
            {"plan": plan.text, "revision": plan.revision, "provenance": plan.provenance.value},
        )
        nav = await session.driver.navigate(goal.starting_url)
        if not nav.ok:
            emit(EVENT_ERROR, {"error": f"initial navigation failed: {nav.message}"})
            return
        runner = SearchRunner(
            goal,
            plan,
            search_cfg,
            session.driver,
            gateway,
            cfg.model,
            grounding,
            event_sink=emit,
        )
        try:
            best = await runner.run()
        except SearchError as exc:
            emit(EVENT_ERROR, {"error": str(exc)})
            return
        emit(
            EVENT_DONE,
            {
                "reason": "search_complete",
                "steps": len(best.steps),
                "success_count": best.success_count,
                "final_url": best.final_url,
                "best_value": runner.tree.nodes[runner._best_path_ids()[-1]].value
                if runner._best_path_ids()
                else None,
            },
        )

    @app.post("/sessions/{session_id}/instructions", status_code=202)
    async def submit_instruction(session_id: str, body: InstructionBody) -> dict[str, Any]:
        session = _session_or_404(session_id)
        if session.status == "running":
            raise HTTPException(status_code=409, detail="an instruction is already running")
        if body.episode is not None and body.search is not None:
            raise HTTPException(status_code=422, detail="provide episode or search, not both")
        session.instruction_count += 1
        instruction_id = f"{session.session_id}-{session.instruction_count}"
        session.task = asyncio.get_running_loop().create_task(
            _run_instruction(session, body)
        )
        return {"instruction_id": instruction_id, "from_seq": session.buffer.last_seq}

    @app.get("/sessions/{session_id}/events")
    async def stream_events(session_id: str, from_seq: int = 0) -> StreamingResponse:
        session = _session_or_404(session_id)

        async def sse() -> AsyncIterator[str]:
            async for event in session.buffer.stream_from(from_seq):
                data = json.dumps(event["data"], separators=(",", ":"))
                yield f"id: {event['seq']}\nevent: {event['kind']}\ndata: {data}\n\n"

        return StreamingResponse(
            sse(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.get("/config")
    async def get_config() -> dict[str, Any]:
        defaults_episode = EpisodeConfig()
        defaults_search = SearchConfig()
        return {
            "service": "websteer",
            "version": _package_version(),
            "browser": {
                "mode": cfg.browser.mode.value,
                "endpoint": cfg.browser.endpoint,
                "viewport": list(cfg.browser.viewport),
                "headless": cfg.browser.headless,
            },
            "defaults": {
                "agent_kind": defaults_episode.agent_kind.value,
                "max_steps": defaults_episode.max_steps,
                "replan_every": defaults_episode.replan_every,
                "memory_enabled": defaults_episode.memory_enabled,
                "features": sorted(f.value for f in defaults_episode.grounding.features),
                "search": {
                    "strategy": defaults_search.strategy.value,
                    "branching_k": defaults_search.branching_k,
                    "max_depth": defaults_search.max_depth,
                    "iterations": defaults_search.iterations,
                    "exploration_c": defaults_search.exploration_c,
                    "sample_temperature": defaults_search.sample_temperature,
                    "value_threshold": defaults_search.value_threshold,
                },
            },
            "agent_kinds": [k.value for k in AgentKind],
            "search_strategies": [s.value for s in SearchStrategy],
            "observation_features": [f.value for f in ObservationFeature],
            "event_kinds": sorted(EVENT_KINDS),
        }

    return app


def serve(host: str = "127.0.0.1", port: int | None = None) -> None:
    """Run the service under uvicorn; PORT overrides the default port."""
    import uvicorn

    resolved = port if port is not None else int(os.environ.get("PORT", "8700"))
    uvicorn.run(create_app(), host=host, port=resolved)
