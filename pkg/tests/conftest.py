"""Shared test plumbing: async test support, simulator sessions, providers."""

from __future__ import annotations

import asyncio
import functools
import http.server
import inspect
import os
import re
import threading
from contextlib import asynccontextmanager
from pathlib import Path

import pytest

from websteer.browser import (
    BrowserEnvironmentConfig,
    BrowserMode,
    DriverSession,
    open_session,
)
from websteer.llm import LlmGateway, ProviderReply, ScriptedProvider, ToolCall
from websteer.sim import SimBrowser, StaticSite, serve_sim

FIXTURE_DIR = Path(__file__).parent / "fixture_site"
ORIGIN = "http://fixture.test"

ACCEPTANCE_CDP_ENV = "WEBSTEER_ACCEPTANCE_CDP"


def pytest_pyfunc_call(pyfuncitem):
    """Run coroutine tests on a fresh event loop; no plugin dependency."""
    fn = pyfuncitem.obj
    if inspect.iscoroutinefunction(fn):
        names = pyfuncitem._fixtureinfo.argnames
        kwargs = {name: pyfuncitem.funcargs[name] for name in names}
        asyncio.run(fn(**kwargs))
        return True
    return None


@functools.lru_cache(maxsize=1)
def _fixture_pages() -> dict[str, str]:
    return dict(StaticSite.from_directory(FIXTURE_DIR, origin=ORIGIN).pages)


def make_fixture_site() -> StaticSite:
    return StaticSite(origin=ORIGIN, pages=_fixture_pages())


@pytest.fixture()
def fixture_site() -> StaticSite:
    return make_fixture_site()


def page_url(path: str, base: str = ORIGIN) -> str:
    return base + path


@asynccontextmanager
async def sim_driver(site: StaticSite | None = None, **overrides):
    """A driver session attached to a fresh simulator serving the fixture site."""
    browser = await serve_sim(site or make_fixture_site())
    try:
        config = BrowserEnvironmentConfig(
            mode=BrowserMode.ATTACH_CDP,
            endpoint=browser.endpoint,
            nav_grace=overrides.pop("nav_grace", 0.02),
            load_timeout=overrides.pop("load_timeout", 5.0),
            **overrides,
        )
        session = await open_session(config)
        try:
            yield session, browser
        finally:
            await session.close()
    finally:
        await browser.stop()


class _QuietHandler(http.server.SimpleHTTPRequestHandler):
    def log_message(self, *args):  # tests should not spam stderr
        pass


@asynccontextmanager
async def acceptance_driver():
    """Driver plus base URL for acceptance runs.

    Default lane: the bundled simulator. When WEBSTEER_ACCEPTANCE_CDP points
    at a real browser's CDP endpoint, the fixture site is served over local
    HTTP and the same tests run against that browser instead.
    """
    real_endpoint = os.environ.get(ACCEPTANCE_CDP_ENV)
    if not real_endpoint:
        async with sim_driver() as (session, _browser):
            yield session, ORIGIN
        return

    handler = functools.partial(_QuietHandler, directory=str(FIXTURE_DIR))
    httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    try:
        base = f"http://127.0.0.1:{httpd.server_address[1]}"
        config = BrowserEnvironmentConfig(
            mode=BrowserMode.ATTACH_CDP, endpoint=real_endpoint
        )
        session = await open_session(config)
        try:
            yield session, base
        finally:
            await session.close()
    finally:
        httpd.shutdown()
        thread.join(timeout=5)


# --- deterministic providers ---


def scripted_gateway(*entries) -> LlmGateway:
    """Gateway over a positional script; entries may be str, ToolCall, ProviderReply."""
    return LlmGateway(ScriptedProvider(list(entries)))


def tool(name: str, **arguments: str) -> ToolCall:
    return ToolCall(name, {k: str(v) for k, v in arguments.items()})


_STEP_LINE_RE = re.compile(r"^\d+\. (.+?) ->", re.MULTILINE)


def steps_in_prompt(prompt: str) -> list[str]:
    """Action texts from the numbered history lines of a generation/value prompt."""
    return _STEP_LINE_RE.findall(prompt)


class RuleProvider:
    """Content-keyed provider for search tests.

    Generation calls cycle through scroll directions, grounding echoes the
    action's direction, and value replies come from a pure function of the
    trajectory described in the prompt. Content keying (rather than call
    position) keeps replies identical across traversal orders.
    """

    def __init__(self, directions=("down", "up"), value_rule=None, plan_text="1. look around"):
        self.directions = tuple(directions)
        self.value_rule = value_rule or self.default_value_rule
        self.plan_text = plan_text
        self.gen_calls = 0

    @staticmethod
    def default_value_rule(steps: list[str]) -> float:
        downs = sum(1 for s in steps if "scroll down" in s)
        ups = sum(1 for s in steps if "scroll up" in s)
        return min(0.9, 0.2 + 0.15 * downs + 0.05 * ups)

    async def chat(self, messages, tools, cfg) -> ProviderReply:
        prompt = messages[-1].content
        if tools is not None:
            if prompt.startswith("Action to ground:"):
                first_line = prompt.splitlines()[0]
                direction = "up" if "scroll up" in first_line else "down"
                return ProviderReply(tool_calls=(ToolCall("scroll", {"direction": direction}),))
            index = self.gen_calls
            self.gen_calls += 1
            direction = self.directions[index % len(self.directions)]
            return ProviderReply(tool_calls=(ToolCall("scroll", {"direction": direction}),))
        if "How complete is the goal" in prompt:
            return ProviderReply(text=f"{self.value_rule(steps_in_prompt(prompt)):.3f}")
        return ProviderReply(text=self.plan_text)
