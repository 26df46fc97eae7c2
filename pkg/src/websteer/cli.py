"""Command-line entry points: serve the API, run an episode, replay a recording."""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path
from typing import Any

from .agents import AgentKind, EpisodeConfig, run_episode
from .browser import BrowserEnvironmentConfig, BrowserMode, DriverConnectError, open_session
from .llm import HttpChatProvider, LlmGateway, ScriptedProvider, config_from_env
from .memory import MemoryStore
from .model import Goal, Trajectory, deserialize_trajectory, serialize_trajectory
from .replay import replay_trajectory
from .service import serve


def _add_browser_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--cdp",
        metavar="WS_URL",
        default=None,
        help="attach to a running browser's CDP websocket (default: $CDP_ENDPOINT)",
    )
    parser.add_argument(
        "--sim-site",
        metavar="DIR",
        default=None,
        help="serve DIR of html files on the built-in simulator and attach to it",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="websteer", description="VLM web-agent orchestration")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=None, help="default: $PORT or 8700")

    p_run = sub.add_parser("run", help="run one agent episode")
    p_run.add_argument("--goal", required=True, help="task description")
    p_run.add_argument("--url", required=True, help="starting URL")
    p_run.add_argument(
        "--agent",
        default=AgentKind.FUNCTION_CALLING.value,
        choices=[k.value for k in AgentKind],
    )
    p_run.add_argument("--plan", default=None, help="skip planning and use this plan text")
    p_run.add_argument("--max-steps", type=int, default=8)
    p_run.add_argument("--replan-every", type=int, default=1)
    p_run.add_argument("--memory", action="store_true", help="retrieve and store workflows")
    p_run.add_argument(
        "--scripted-llm",
        metavar="JSONL",
        default=None,
        help="serve model replies from a script file instead of an API",
    )
    p_run.add_argument("--save-trajectory", metavar="FILE", default=None)
    _add_browser_args(p_run)

    p_replay = sub.add_parser("replay", help="re-execute a recorded trajectory")
    p_replay.add_argument("file", help="trajectory JSON file")
    _add_browser_args(p_replay)

    return parser


def _browser_config(args: argparse.Namespace, sim_endpoint: str | None) -> BrowserEnvironmentConfig:
    endpoint = sim_endpoint or args.cdp or os.environ.get("CDP_ENDPOINT") or None
    if endpoint:
        return BrowserEnvironmentConfig(mode=BrowserMode.ATTACH_CDP, endpoint=endpoint)
    return BrowserEnvironmentConfig(mode=BrowserMode.LAUNCH_LOCAL)


async def _start_sim(directory: str) -> tuple[Any, str]:
    from .sim import StaticSite, serve_sim

    site = StaticSite.from_directory(Path(directory), origin="http://fixture.test")
    browser = await serve_sim(site)
    return browser, browser.endpoint


async def _run_command(args: argparse.Namespace) -> int:
    sim_browser = None
    sim_endpoint = None
    if args.sim_site:
        sim_browser, sim_endpoint = await _start_sim(args.sim_site)
    try:
        try:
            session = await open_session(_browser_config(args, sim_endpoint))
        except DriverConnectError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

        if args.scripted_llm:
            gateway = LlmGateway(ScriptedProvider.from_file(args.scripted_llm))
        else:
            gateway = LlmGateway(HttpChatProvider())
        model_cfg = config_from_env()

        def sink(kind: str, data: dict[str, Any]) -> None:
            print(f"[{kind}] {json.dumps(data, separators=(',', ':'))}")

        goal = Goal(args.goal, args.url)
        config = EpisodeConfig(
            agent_kind=AgentKind(args.agent),
            max_steps=args.max_steps,
            replan_every=args.replan_every,
            memory_enabled=args.memory,
        )
        store = MemoryStore() if args.memory else None
        try:
            trajectory = await run_episode(
                goal,
                config,
                session,
                gateway,
                model_cfg,
                user_plan=args.plan,
                memory_store=store,
                event_sink=sink,
            )
        finally:
            await session.close()

        if args.save_trajectory:
            Path(args.save_trajectory).write_text(
                serialize_trajectory(trajectory), encoding="utf-8"
            )
            print(f"trajectory saved to {args.save_trajectory}")
        ok = trajectory.success_count
        print(f"{len(trajectory.steps)} steps, {ok} succeeded, final url {trajectory.final_url}")
        return 0
    finally:
        if sim_browser is not None:
            await sim_browser.stop()


async def _replay_command(args: argparse.Namespace) -> int:
    try:
        trajectory: Trajectory = deserialize_trajectory(
            Path(args.file).read_text(encoding="utf-8")
        )
    except (OSError, ValueError) as exc:
        print(f"error: cannot load trajectory: {exc}", file=sys.stderr)
        return 2

    sim_browser = None
    sim_endpoint = None
    if args.sim_site:
        sim_browser, sim_endpoint = await _start_sim(args.sim_site)
    try:
        try:
            session = await open_session(_browser_config(args, sim_endpoint))
        except DriverConnectError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        try:
            result = await replay_trajectory(trajectory, session)
        finally:
            await session.close()

        if not result.navigation.ok:
            print(f"navigation failed: {result.navigation.message}", file=sys.stderr)
            return 1
        by_index = {s.action.step_index: s for s in trajectory.steps}
        for record in result.steps:
            text = by_index[record.index].action.text
            if not record.executed:
                print(f"step {record.index}: {text} -> skipped ({record.message})")
            elif record.replay_ok:
                print(f"step {record.index}: {text} -> ok")
            else:
                print(f"step {record.index}: {text} -> failed: {record.message}")
        print(f"final url: {result.final_url}")
        if result.diverged_at is not None:
            print(f"divergence at step {result.diverged_at}", file=sys.stderr)
            return 1
        return 0
    finally:
        if sim_browser is not None:
            await sim_browser.stop()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        serve(host=args.host, port=args.port)
        return 0
    if args.command == "run":
        return asyncio.run(_run_command(args))
    if args.command == "replay":
        return asyncio.run(_replay_command(args))
    raise AssertionError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
