"""Acceptance gate: one test per core guarantee, at its stated tolerance.

Each test prints a single PASS line (run with -s to see them; pytest -v
gives the per-criterion verdict either way). Browser-backed criteria run
on the simulator by default and against a real browser when
WEBSTEER_ACCEPTANCE_CDP is set; see conftest.acceptance_driver.
"""

import asyncio
import math
import time

import pytest

from conftest import (
    FIXTURE_DIR,
    RuleProvider,
    acceptance_driver,
    page_url,
    scripted_gateway,
    sim_driver,
    tool,
)
from test_service import (
    GOAL_BODY,
    ONE_STEP_SCRIPT,
    create_session,
    read_frames,
    scripted_factory,
    service_client,
    wait_until_idle,
)
from websteer.agents import AgentKind, EpisodeConfig, run_episode
from websteer.grounding import GroundingConfig
from websteer.llm import LlmGateway, ModelConfig, ProviderReply
from websteer.memory import MemoryStore, WorkflowMemoryEntry, retrieve
from websteer.model import (
    ActionKind,
    Goal,
    GroundedAction,
    ObservationFeature,
    Plan,
    PlanProvenance,
)
from websteer.replay import replay_trajectory
from websteer.search import SearchConfig, SearchRunner, SearchStrategy, uct_score
from websteer.service import EventBuffer
from websteer.sim.cssmatch import parse_selector

CFG = ModelConfig()

ELEMENTS_ONLY = frozenset({ObservationFeature.INTERACTIVE_ELEMENTS})
FULL_FEATURES = frozenset(ObservationFeature)

PAGES = sorted(p.name for p in FIXTURE_DIR.glob("*.html"))

# A selector of the shape real pages force on synthesizers: a deep positional
# chain from a role anchor down to an attribute-qualified leaf. The search
# fixture mirrors this structure node for node; the engine must both parse
# the selector as written and synthesize an equivalent unique one itself.
REFERENCE_SELECTOR = (
    '[role="search"] > div:nth-of-type(1) > div:nth-of-type(1) > div:nth-of-type(2)'
    " > div:nth-of-type(4) > div:nth-of-type(6) > center >"
    ' input[type="submit"][aria-label="Google Search"]:nth-of-type(1)'
)


def passed(number: int, detail: str) -> None:
    print(f"criterion {number:02d} PASS: {detail}")


async def test_criterion_01_selector_uniqueness_across_fixture_corpus():
    started = time.monotonic()
    checked = 0
    async with acceptance_driver() as (session, base):
        for page in PAGES:
            nav = await session.navigate(f"{base}/{page}")
            assert nav.ok, f"{page}: {nav.message}"
            observation = await session.capture_observation(ELEMENTS_ONLY)
            for element in observation.interactive_elements:
                node = session.element_for_mark(element.mark_id)
                assert node is not None
                selector = await session.selector_for_mark(element.mark_id)
                assert selector, f"{page} mark {element.mark_id}: nothing synthesized"
                refs = await session._query_refs(selector)
                assert len(refs) == 1, (
                    f"{page} mark {element.mark_id}: {selector!r} "
                    f"matched {len(refs)} elements"
                )
                assert refs == [str(node.node_id)], (
                    f"{page} mark {element.mark_id}: {selector!r} resolved elsewhere"
                )
                checked += 1
    elapsed = time.monotonic() - started
    assert checked >= 50, f"fixture corpus exposes only {checked} elements"
    assert elapsed < 30.0, f"synthesis sweep took {elapsed:.1f}s"
    passed(1, f"{checked} elements, all selectors unique, {elapsed:.1f}s")


async def test_criterion_02_reference_selector_compatibility():
    parse_selector(REFERENCE_SELECTOR)  # must be accepted as written
    adapted = REFERENCE_SELECTOR.replace("Google Search", "Site Search")
    async with acceptance_driver() as (session, base):
        nav = await session.navigate(f"{base}/search.html")
        assert nav.ok, nav.message
        observation = await session.capture_observation(ELEMENTS_ONLY)
        reference_refs = await session._query_refs(adapted)
        assert len(reference_refs) == 1, (
            f"reference selector matched {len(reference_refs)} elements"
        )
        target_mark = next(
            e.mark_id
            for e in observation.interactive_elements
            if e.aria_label == "Site Search"
        )
        synthesized = await session.selector_for_mark(target_mark)
        assert synthesized
        assert await session._query_refs(synthesized) == reference_refs, (
            f"{synthesized!r} does not resolve to the reference element"
        )
    passed(2, f"reference selector and synthesized {synthesized!r} agree")


async def test_criterion_03_replay_is_deterministic():
    script = (
        tool("fill", mark="1", value="alice"),
        tool("fill", mark="1", value="alice"),
        tool("fill", mark="2", value="hunter2"),
        tool("fill", mark="2", value="hunter2"),
        tool("click", mark="3"),
        tool("click", mark="3"),
        "signed in",
    )
    async with acceptance_driver() as (session, base):
        goal = Goal("sign in as alice", f"{base}/login.html")
        recorded = await run_episode(
            goal,
            EpisodeConfig(max_steps=5, grounding=GroundingConfig(features=ELEMENTS_ONLY)),
            session,
            scripted_gateway(*script),
            CFG,
            user_plan="1. fill the form\n2. submit it",
        )
        assert len(recorded.steps) == 3
        assert recorded.success_count == 3

        runs = []
        for _ in range(5):
            result = await replay_trajectory(recorded, session)
            assert result.ok, result.navigation.message
            runs.append(([r.replay_ok for r in result.steps], result.final_url))
    statuses, final_url = runs[0]
    assert statuses == [True, True, True]
    assert final_url.startswith(f"{base}/done.html")
    assert all(run == runs[0] for run in runs), f"replays disagree: {runs}"
    passed(3, f"5 replays identical, final url {final_url}")


async def test_criterion_04_episode_event_stream_shape():
    buffer = EventBuffer()
    async with acceptance_driver() as (session, base):
        goal = Goal("sign in as alice", f"{base}/login.html")
        trajectory = await run_episode(
            goal,
            EpisodeConfig(max_steps=4, grounding=GroundingConfig(features=ELEMENTS_ONLY)),
            session,
            scripted_gateway(
                tool("navigate", url=f"{base}/login.html"),
                tool("navigate", url=f"{base}/login.html"),
                tool("click", mark="3"),
                tool("click", mark="3"),
                "The form was submitted; goal complete.",
            ),
            CFG,
            user_plan="1. open the form\n2. submit it",
            event_sink=buffer.emit,
        )
    kinds = [e["kind"] for e in buffer.events]
    assert kinds == [
        "plan_generated",
        "action_generated",
        "action_grounded",
        "action_executed",
        "action_generated",
        "action_grounded",
        "action_executed",
        "done",
    ], kinds
    assert [e["seq"] for e in buffer.events] == list(range(1, 9))
    assert len(trajectory.steps) == 2
    assert trajectory.success_count == 2
    assert buffer.events[-1]["data"]["reason"] == "policy_stop"
    passed(4, "8 events in order, gap-free seq 1..8, 2/2 steps succeeded")


async def test_criterion_05_step_cap_beats_a_policy_that_never_stops():
    relentless = [tool("scroll", direction="down")] * 1000
    events = []
    async with acceptance_driver() as (session, base):
        goal = Goal("scroll forever", f"{base}/login.html")
        trajectory = await run_episode(
            goal,
            EpisodeConfig(
                max_steps=20, grounding=GroundingConfig(features=ELEMENTS_ONLY)
            ),
            session,
            scripted_gateway(*relentless),
            CFG,
            user_plan="1. keep scrolling",
            event_sink=lambda kind, data: events.append((kind, data)),
        )
    assert len(trajectory.steps) == 20
    assert sum(1 for kind, _ in events if kind == "action_generated") == 20
    assert events[-1][0] == "done"
    assert events[-1][1]["reason"] == "max_steps"
    passed(5, "1000-action script halted at exactly 20 steps (reason max_steps)")


# Substrings that only occur inside observation payloads: accessibility tree
# dumps, DOM snapshots, and set-of-marks element listings. None may appear in
# a generation prompt; generation sees plan and history alone.
OBSERVATION_PAYLOAD_MARKERS = (
    "RootWebArea",
    "<html",
    "Accessibility tree:",
    "DOM snapshot",
    "Interactive elements",
    "] <",
)

PLANNING_SWEEP_SCRIPT = (
    "1. look, then act",
    tool("scroll"),
    tool("scroll"),
    "2. revised after one step",
    tool("scroll", direction="up"),
    tool("scroll", direction="up"),
    "3. wrap up",
    "that will do",
)

SWEEP = (
    (AgentKind.FUNCTION_CALLING, (tool("scroll"), tool("scroll"), "stopping here"), "1. scroll once"),
    (AgentKind.PROMPT, ("scroll down", tool("scroll"), "FINISH"), "1. scroll once"),
    (AgentKind.HIGH_LEVEL_PLANNING, PLANNING_SWEEP_SCRIPT, None),
    (AgentKind.CONTEXT_AWARE_PLANNING, PLANNING_SWEEP_SCRIPT, None),
)


async def test_criterion_06_generation_prompts_stay_observation_free():
    transcripts = []
    async with acceptance_driver() as (session, base):
        goal = Goal("sign in as alice", f"{base}/login.html")
        for kind, script, user_plan in SWEEP:
            gateway = scripted_gateway(*script)
            await run_episode(
                goal,
                EpisodeConfig(
                    agent_kind=kind,
                    replan_every=1,
                    max_steps=4,
                    grounding=GroundingConfig(features=FULL_FEATURES),
                ),
                session,
                gateway,
                CFG,
                user_plan=user_plan,
            )
            transcripts.append((kind.value, gateway.transcript))

        # tree search samples candidate actions through the same tagged path
        search_gateway = LlmGateway(RuleProvider())
        plan = Plan("1. scroll around", 0, PlanProvenance.USER_SUPPLIED)
        runner = SearchRunner(
            goal,
            plan,
            SearchConfig(strategy=SearchStrategy.BFS, branching_k=2, max_depth=1, iterations=2),
            session,
            search_gateway,
            CFG,
            grounding=GroundingConfig(features=FULL_FEATURES),
        )
        await runner.run()
        transcripts.append(("search", search_gateway.transcript))

    scanned = 0
    for label, transcript in transcripts:
        prompts = transcript.prompts_tagged("next_action")
        assert prompts, f"{label}: sweep produced no generation prompts"
        for prompt in prompts:
            for marker in OBSERVATION_PAYLOAD_MARKERS:
                assert marker not in prompt, (
                    f"{label}: {marker!r} leaked into a generation prompt"
                )
            scanned += 1

    # the scan has teeth: the very same markers do show up where they belong
    grounding_prompts = [
        p for _, t in transcripts for p in t.prompts_tagged("grounding")
    ]
    assert any("Interactive elements (cite by mark number):" in p for p in grounding_prompts)
    context_aware = dict(transcripts)[AgentKind.CONTEXT_AWARE_PLANNING.value]
    assert any("Accessibility tree:" in p for p in context_aware.prompts_tagged("plan"))
    passed(6, f"{scanned} generation prompts scanned, zero observation payloads")


def exhaustive_config(strategy: SearchStrategy) -> SearchConfig:
    # k=2 over 3 levels: 2 + 4 + 8 = 14 executions, 15 nodes with the root
    return SearchConfig(strategy=strategy, branching_k=2, max_depth=3, iterations=14)


def preorder(tree) -> list[int]:
    order = []

    def visit(node_id: int) -> None:
        order.append(node_id)
        for child_id in tree.nodes[node_id].children:
            visit(child_id)

    visit(0)
    return order


def best_value(runner: SearchRunner) -> float:
    return max(
        n["value"] for n in runner.tree.export()["nodes"] if n["value"] is not None
    )


async def test_criterion_07_bfs_and_dfs_explore_the_full_tree():
    async with acceptance_driver() as (session, base):
        goal = Goal("scroll through the page", f"{base}/login.html")
        plan = Plan("1. scroll until everything was seen", 0, PlanProvenance.USER_SUPPLIED)
        runs = {}
        for strategy in (SearchStrategy.BFS, SearchStrategy.DFS):
            runner = SearchRunner(
                goal,
                plan,
                exhaustive_config(strategy),
                session,
                LlmGateway(RuleProvider()),
                CFG,
            )
            trajectory = await runner.run()
            assert len(runner.tree.nodes) == 15, (
                f"{strategy.value}: {len(runner.tree.nodes)} nodes"
            )
            assert sorted(runner.expansion_log) == list(range(15))
            runs[strategy] = (runner, trajectory)

    bfs_runner, bfs_trajectory = runs[SearchStrategy.BFS]
    dfs_runner, dfs_trajectory = runs[SearchStrategy.DFS]

    depths = [bfs_runner.tree.nodes[i].depth for i in bfs_runner.expansion_log]
    assert depths == sorted(depths), "BFS expansion was not level-contiguous"
    assert dfs_runner.expansion_log == preorder(dfs_runner.tree), (
        "DFS expansion was not preorder"
    )

    assert best_value(bfs_runner) == pytest.approx(best_value(dfs_runner))
    assert [s.action.text for s in bfs_trajectory.steps] == [
        s.action.text for s in dfs_trajectory.steps
    ]
    passed(7, f"15 nodes each, orders correct, equal best value {best_value(bfs_runner):.2f}")


async def test_criterion_08_mcts_visit_statistics():
    # the judge awards 1.0 only to the lone "scroll down" first step, 0.2
    # otherwise, so visits must concentrate on the down branch
    def spiked(steps: list[str]) -> float:
        return 1.0 if steps == ["scroll down"] else 0.2

    async with acceptance_driver() as (session, base):
        goal = Goal("scroll through the page", f"{base}/login.html")
        plan = Plan("1. scroll until everything was seen", 0, PlanProvenance.USER_SUPPLIED)
        runner = SearchRunner(
            goal,
            plan,
            SearchConfig(strategy=SearchStrategy.MCTS, branching_k=2, max_depth=2, iterations=20),
            session,
            LlmGateway(RuleProvider(value_rule=spiked)),
            CFG,
        )
        await runner.run()

    tree = runner.tree
    assert runner.completed_iterations == 20
    assert tree.root.visits == 20

    for node in tree.nodes.values():
        child_visits = sum(tree.nodes[c].visits for c in node.children)
        assert node.visits >= child_visits, (
            f"node {node.node_id}: {node.visits} visits < children's {child_visits}"
        )
        if node.visits:
            q = node.total_value / node.visits
            assert 0.0 <= q <= 1.0, f"node {node.node_id}: Q={q}"

    by_text = {
        tree.nodes[c].action.text: tree.nodes[c] for c in tree.root.children
    }
    assert set(by_text) == {"scroll down", "scroll up"}
    assert by_text["scroll down"].visits > by_text["scroll up"].visits, (
        f"visits did not concentrate: {by_text['scroll down'].visits} "
        f"vs {by_text['scroll up'].visits}"
    )
    passed(
        8,
        f"root.N=20, conservation holds, Q in [0,1], "
        f"{by_text['scroll down'].visits} down vs {by_text['scroll up'].visits} up",
    )


def test_criterion_09_uct_worked_examples():
    assert uct_score(0, 0.0, 10, 1.41421) == math.inf
    assert uct_score(2, 1.0, 10, 1.41421) == pytest.approx(2.0174, abs=1e-3)
    assert uct_score(1, 0.9, 10, 0.0) == pytest.approx(0.9)
    passed(9, "unvisited=inf, hand-derived 2.0174 within 1e-3, c=0 exploits")


def test_criterion_10_memory_ranking_and_robust_load(tmp_path):
    def entry(summary, domain, created_at):
        return WorkflowMemoryEntry(summary, domain, ("navigate to {url}",), created_at)

    goal = Goal("order a table lamp", "http://shop.fixture/catalog")
    # goal tokens {order, a, table, lamp}; hand scores:
    best = entry("order a desk lamp", "shop.fixture", 100.0)  # 1.0 + 3/5  = 1.600
    same_domain = entry("compare lamp shades", "shop.fixture", 50.0)  # 1.0 + 1/6 = 1.167
    tie_new = entry("pick a gift card", "shop.fixture", 20.0)  # 1.0 + 1/7  = 1.143
    tie_old = entry("pick a gift card", "shop.fixture", 10.0)  # 1.0 + 1/7  = 1.143
    same_task = entry("order a table lamp", "other.test", 200.0)  # 0.0 + 4/4 = 1.000
    noise = entry("weather dashboard widgets", "elsewhere.example", 300.0)  # 0.0

    ranked = retrieve(
        goal, [noise, same_task, tie_old, tie_new, same_domain, best], top_n=10
    )
    assert ranked == [best, same_domain, tie_new, tie_old, same_task]

    store_path = tmp_path / "workflows.jsonl"
    store = MemoryStore(store_path)
    for e in (best, same_domain, same_task):
        store.append(e)
    lines = store_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    lines[1] = '{"task_summary": "broken entry", "steps": 42'
    store_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    reloaded = MemoryStore(store_path)
    assert len(reloaded) == 2, f"{len(reloaded)} entries survived"
    assert reloaded.warning_count == 1
    assert [e.task_summary for e in reloaded.entries] == [
        "order a desk lamp",
        "order a table lamp",
    ]
    passed(10, "hand-scored ranking exact, corrupt line dropped (3 -> 2 entries)")


async def test_criterion_11_event_stream_resume_and_busy_conflict():
    async with service_client(gateway_factory=scripted_factory(ONE_STEP_SCRIPT)) as (
        client,
        _,
    ):
        session_id = await create_session(client)
        await client.post(
            f"/sessions/{session_id}/instructions",
            json={"goal": GOAL_BODY, "plan": "1. scroll"},
        )
        full = await read_frames(client, session_id)
        assert [f["seq"] for f in full] == [1, 2, 3, 4, 5]
        resume_from = 2
        suffix = await read_frames(client, session_id, from_seq=resume_from)
        assert [f["seq"] for f in suffix] == [3, 4, 5], "resume must be gap-free"
        assert suffix == full[resume_from:], "resumed events must match the originals"

    gate = asyncio.Event()

    class GatedProvider:
        async def chat(self, messages, tools, cfg):
            await gate.wait()
            return ProviderReply(text="that is enough")

    async with service_client(
        gateway_factory=lambda: LlmGateway(GatedProvider())
    ) as (client, _):
        session_id = await create_session(client)
        first = await client.post(
            f"/sessions/{session_id}/instructions",
            json={"goal": GOAL_BODY, "plan": "1. scroll"},
        )
        assert first.status_code == 202
        for _ in range(200):
            status = (await client.get(f"/sessions/{session_id}")).json()["status"]
            if status == "running":
                break
            await asyncio.sleep(0.01)
        else:
            raise AssertionError("instruction never started running")
        second = await client.post(
            f"/sessions/{session_id}/instructions",
            json={"goal": GOAL_BODY, "plan": "1. scroll"},
        )
        assert second.status_code == 409
        gate.set()
        await wait_until_idle(client, session_id)
    passed(11, "resume from seq 2 yielded exactly 3..5; concurrent submit got 409")


async def test_criterion_12_cdp_commands_frame_correctly():
    # framing is a protocol-level guarantee, so this one always runs against
    # the bundled CDP server, whose transcript records both directions
    async with sim_driver() as (session, browser):
        await session.navigate(page_url("/login.html"))
        observation = await session.capture_observation(
            frozenset(
                {
                    ObservationFeature.INTERACTIVE_ELEMENTS,
                    ObservationFeature.AXTREE,
                    ObservationFeature.DOM,
                }
            )
        )
        first_mark = observation.interactive_elements[0].mark_id
        selector = await session.selector_for_mark(first_mark)
        assert selector
        await session.execute(GroundedAction(ActionKind.CLICK, "#submit", {}, source_step=0))
        transcript = list(browser.transcript)

    command_ids = []
    outstanding = set()
    responses = 0
    for entry in transcript:
        message = entry["msg"]
        if entry["dir"] == "recv":  # client -> server command
            assert "id" in message and "method" in message, message
            if command_ids:
                assert message["id"] > command_ids[-1], (
                    f"command id {message['id']} after {command_ids[-1]}"
                )
            command_ids.append(message["id"])
            outstanding.add(message["id"])
        elif "id" in message:  # server -> client response (events carry no id)
            assert message["id"] in outstanding, (
                f"response {message['id']} matches no outstanding command"
            )
            outstanding.discard(message["id"])
            responses += 1
    assert not outstanding, f"commands never answered: {sorted(outstanding)}"
    assert responses == len(command_ids)
    assert len(command_ids) >= 10, "exchange too small to be meaningful"
    passed(
        12,
        f"{len(command_ids)} commands strictly increasing, all answered exactly once",
    )
