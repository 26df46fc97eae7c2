"""Policies and the episode loop: generation purity, events, termination."""

import pytest

from conftest import page_url, scripted_gateway, sim_driver, tool
from websteer.agents import (
    AgentKind,
    AgentPolicyError,
    EpisodeConfig,
    history_lines,
    next_action,
    planning_messages,
    render_action_text,
    replan,
    run_episode,
)
from websteer.grounding import GroundingConfig
from websteer.llm import LlmGateway, ModelConfig, ProviderReply, ScriptedProvider
from websteer.memory import MemoryStore, WorkflowMemoryEntry
from websteer.model import (
    ActionDescription,
    ActionKind,
    Goal,
    GroundedAction,
    Observation,
    ObservationFeature,
    Plan,
    PlanProvenance,
    TrajectoryStep,
    failure,
    success,
)

CFG = ModelConfig()
GOAL = Goal("sign in as alice", page_url("/login.html"))
PLAN = Plan("1. fill the form\n2. submit", 0, PlanProvenance.USER_SUPPLIED)

ELEMENTS_FEATURES = frozenset({ObservationFeature.INTERACTIVE_ELEMENTS})
LIGHT_GROUNDING = GroundingConfig(features=ELEMENTS_FEATURES)


def collect_events():
    events = []

    def sink(kind, data):
        events.append((kind, data))

    return events, sink


class TestRendering:
    @pytest.mark.parametrize(
        "call,expected",
        [
            (tool("navigate", url="http://x.test/"), "navigate to http://x.test/"),
            (tool("click", mark="3"), "click element [3]"),
            (tool("fill", mark="1", value="alice"), "fill element [1] with 'alice'"),
            (tool("select_option", mark="2", value="express"), "select 'express' in element [2]"),
            (tool("scroll"), "scroll down"),
            (tool("scroll", direction="up"), "scroll up"),
            (tool("upload_file", mark="4", path="/tmp/f.txt"), "upload '/tmp/f.txt' to element [4]"),
            (tool("scrape", mark="5"), "scrape element [5]"),
            (tool("scrape"), "scrape the page"),
            (tool("go_back"), "go back"),
            (tool("finish"), "finish"),
        ],
    )
    def test_render_action_text(self, call, expected):
        assert render_action_text(call) == expected

    def test_unknown_tool_has_no_rendering(self):
        with pytest.raises(AgentPolicyError):
            render_action_text(tool("teleport"))

    def test_history_lines(self):
        steps = [
            TrajectoryStep(
                ActionDescription("click element [3]", 0),
                GroundedAction(ActionKind.CLICK, selector="#submit", source_step=0),
                success("clicked #submit", page_summary="Welcome"),
                "http://a.test/",
                "http://a.test/done",
            ),
            TrajectoryStep(
                ActionDescription("click element [9]", 1),
                None,
                failure("grounding failed: mark 9 is not in the observation"),
                "http://a.test/done",
                "http://a.test/done",
            ),
        ]
        lines = history_lines(steps)
        assert lines[0] == "1. click element [3] -> ok: clicked #submit | page: Welcome"
        assert lines[1].startswith("2. click element [9] -> failed: grounding failed")


class TestNextAction:
    async def test_prompt_kind_finish_token_stops(self):
        gateway = scripted_gateway("FINISH")
        action = await next_action(GOAL, PLAN, PLAN, [], AgentKind.PROMPT, 0, gateway, CFG)
        assert action is None

    async def test_prompt_kind_returns_text_action(self):
        gateway = scripted_gateway("click the submit button")
        action = await next_action(GOAL, PLAN, PLAN, [], AgentKind.PROMPT, 2, gateway, CFG)
        assert action == ActionDescription("click the submit button", 2)

    async def test_prompt_kind_empty_reply_reprompted(self):
        gateway = scripted_gateway("", "go back")
        action = await next_action(GOAL, PLAN, PLAN, [], AgentKind.PROMPT, 0, gateway, CFG)
        assert action.text == "go back"
        assert gateway.provider.call_count == 2

    async def test_prompt_kind_empty_twice_is_policy_error(self):
        gateway = scripted_gateway("", "")
        with pytest.raises(AgentPolicyError):
            await next_action(GOAL, PLAN, PLAN, [], AgentKind.PROMPT, 0, gateway, CFG)

    async def test_tool_kind_renders_call(self):
        gateway = scripted_gateway(tool("fill", mark="1", value="alice"))
        action = await next_action(
            GOAL, PLAN, PLAN, [], AgentKind.FUNCTION_CALLING, 0, gateway, CFG
        )
        assert action.text == "fill element [1] with 'alice'"

    async def test_tool_kind_text_reply_stops(self):
        gateway = scripted_gateway("all done here")
        action = await next_action(
            GOAL, PLAN, PLAN, [], AgentKind.FUNCTION_CALLING, 0, gateway, CFG
        )
        assert action is None

    async def test_tool_kind_invalid_then_valid(self):
        gateway = scripted_gateway(tool("warp", to="mars"), tool("go_back"))
        action = await next_action(
            GOAL, PLAN, PLAN, [], AgentKind.FUNCTION_CALLING, 0, gateway, CFG
        )
        assert action.text == "go back"

    async def test_tool_kind_invalid_twice_is_policy_error(self):
        gateway = scripted_gateway(tool("warp"), tool("warp"))
        with pytest.raises(AgentPolicyError):
            await next_action(GOAL, PLAN, PLAN, [], AgentKind.FUNCTION_CALLING, 0, gateway, CFG)

    async def test_first_of_several_calls_wins(self):
        reply = ProviderReply(tool_calls=(tool("go_back"), tool("scroll")))
        gateway = LlmGateway(ScriptedProvider([reply]))
        action = await next_action(
            GOAL, PLAN, PLAN, [], AgentKind.FUNCTION_CALLING, 0, gateway, CFG
        )
        assert action.text == "go back"

    async def test_revised_plan_block_appears_only_after_replanning(self):
        gateway = scripted_gateway("FINISH", "FINISH")
        await next_action(GOAL, PLAN, PLAN, [], AgentKind.PROMPT, 0, gateway, CFG)
        revised = Plan("new plan", 1, PlanProvenance.REPLANNED)
        await next_action(GOAL, PLAN, revised, [], AgentKind.PROMPT, 1, gateway, CFG)
        first, second = gateway.transcript.prompts_tagged("next_action")
        assert "Revised plan" not in first
        assert "Revised plan (revision 1):" in second
        assert "new plan" in second


class TestReplan:
    STEPS = [
        TrajectoryStep(
            ActionDescription("scroll down", 0),
            GroundedAction(ActionKind.SCROLL, source_step=0),
            success("scrolled"),
            page_url("/login.html"),
            page_url("/login.html"),
        )
    ]

    async def test_non_planning_kind_rejected(self):
        gateway = scripted_gateway("plan")
        with pytest.raises(ValueError, match="does not replan"):
            await replan(GOAL, PLAN, [], AgentKind.FUNCTION_CALLING, gateway, CFG)

    async def test_context_aware_requires_observation(self):
        gateway = scripted_gateway("plan")
        with pytest.raises(ValueError, match="observation"):
            await replan(GOAL, PLAN, [], AgentKind.CONTEXT_AWARE_PLANNING, gateway, CFG)

    async def test_revision_increments(self):
        gateway = scripted_gateway("do the rest")
        plan2 = await replan(GOAL, PLAN, self.STEPS, AgentKind.HIGH_LEVEL_PLANNING, gateway, CFG)
        assert plan2.revision == 1
        assert plan2.provenance is PlanProvenance.REPLANNED
        plan3 = await replan(GOAL, plan2, self.STEPS, AgentKind.HIGH_LEVEL_PLANNING, gateway := scripted_gateway("more"), CFG)
        assert plan3.revision == 2

    async def test_context_aware_prompt_includes_page(self):
        obs = Observation(
            url=page_url("/login.html"),
            features={ObservationFeature.AXTREE},
            axtree_text='RootWebArea "Sign in"',
        )
        gateway = scripted_gateway("updated plan")
        await replan(
            GOAL, PLAN, [], AgentKind.CONTEXT_AWARE_PLANNING, gateway, CFG, observation=obs
        )
        prompt = gateway.transcript.prompts_tagged("plan")[0]
        assert "Current page:" in prompt
        assert 'RootWebArea "Sign in"' in prompt

    async def test_high_level_prompt_stays_observation_free(self):
        gateway = scripted_gateway("updated plan")
        await replan(GOAL, PLAN, self.STEPS, AgentKind.HIGH_LEVEL_PLANNING, gateway, CFG)
        prompt = gateway.transcript.prompts_tagged("plan")[0]
        assert "Current page:" not in prompt
        assert "Previous plan:" in prompt
        assert "1. scroll down -> ok" in prompt


def test_planning_messages_include_workflows():
    wf = WorkflowMemoryEntry("sign in", "fixture.test", ("navigate to {url}", "click [3]"), 1.0)
    content = planning_messages(GOAL, [wf])[1].content
    assert "Workflows that solved similar tasks:" in content
    assert "- sign in" in content
    assert "    1. navigate to {url}" in content


def test_episode_config_validation():
    with pytest.raises(ValueError):
        EpisodeConfig(max_steps=0)
    with pytest.raises(ValueError):
        EpisodeConfig(replan_every=0)


class TestEpisode:
    async def test_two_step_episode_event_order(self):
        async with sim_driver() as (session, _):
            gateway = scripted_gateway(
                tool("navigate", url=page_url("/login.html")),  # generation t=0
                tool("navigate", url=page_url("/login.html")),  # grounding t=0
                tool("click", mark="3"),  # generation t=1
                tool("click", mark="3"),  # grounding t=1
                "The form was submitted; goal complete.",  # generation t=2: stop
            )
            events, sink = collect_events()
            trajectory = await run_episode(
                GOAL,
                EpisodeConfig(agent_kind=AgentKind.FUNCTION_CALLING, grounding=LIGHT_GROUNDING),
                session,
                gateway,
                CFG,
                user_plan="1. open the form\n2. submit it",
                event_sink=sink,
            )

        assert [kind for kind, _ in events] == [
            "plan_generated",
            "action_generated",
            "action_grounded",
            "action_executed",
            "action_generated",
            "action_grounded",
            "action_executed",
            "done",
        ]
        assert len(trajectory.steps) == 2
        assert trajectory.success_count == 2
        assert events[0][1]["provenance"] == "user_supplied"
        assert events[2][1] == {
            "step": 0,
            "ok": True,
            "kind": "navigate",
            "selector": None,
            "arguments": {"url": page_url("/login.html")},
        }
        assert events[5][1]["selector"] == "#submit"
        done = events[-1][1]
        assert done["reason"] == "policy_stop"
        assert done["steps"] == 2
        assert done["success_count"] == 2
        assert done["final_url"].startswith(page_url("/done.html"))

    async def test_finish_tool_ends_episode(self):
        async with sim_driver() as (session, _):
            gateway = scripted_gateway(tool("finish"), tool("finish"))
            events, sink = collect_events()
            trajectory = await run_episode(
                GOAL,
                EpisodeConfig(agent_kind=AgentKind.FUNCTION_CALLING, grounding=LIGHT_GROUNDING),
                session,
                gateway,
                CFG,
                user_plan="1. finish",
                event_sink=sink,
            )
        assert events[-1][1]["reason"] == "finish"
        assert len(trajectory.steps) == 1
        assert trajectory.steps[0].grounded.kind is ActionKind.FINISH

    async def test_max_steps_halts_unbounded_script(self):
        # the script could fuel hundreds of steps; the loop must stop at max_steps
        async with sim_driver() as (session, _):
            gateway = LlmGateway(ScriptedProvider([tool("scroll")] * 50))
            events, sink = collect_events()
            trajectory = await run_episode(
                GOAL,
                EpisodeConfig(
                    agent_kind=AgentKind.FUNCTION_CALLING,
                    max_steps=4,
                    grounding=LIGHT_GROUNDING,
                ),
                session,
                gateway,
                CFG,
                user_plan="1. scroll forever",
                event_sink=sink,
            )
        assert len(trajectory.steps) == 4
        assert events[-1][1]["reason"] == "max_steps"
        assert gateway.provider.call_count == 8  # 4 generations + 4 groundings

    async def test_grounding_failure_recorded_and_loop_continues(self):
        async with sim_driver() as (session, _):
            gateway = scripted_gateway(
                tool("click", mark="9"),  # generation cites a mark that will not exist
                tool("click", mark="9"),  # grounding cites it too -> unresolvable
                "stopping now",
            )
            events, sink = collect_events()
            trajectory = await run_episode(
                GOAL,
                EpisodeConfig(agent_kind=AgentKind.FUNCTION_CALLING, grounding=LIGHT_GROUNDING),
                session,
                gateway,
                CFG,
                user_plan="1. click the missing thing",
                event_sink=sink,
            )
        assert len(trajectory.steps) == 1
        step = trajectory.steps[0]
        assert step.grounded is None
        assert not step.evaluation.ok
        assert "grounding failed" in step.evaluation.message
        grounded_events = [d for k, d in events if k == "action_grounded"]
        assert grounded_events[0]["ok"] is False
        assert "mark 9" in grounded_events[0]["error"]
        assert events[-1][0] == "done"

    async def test_initial_navigation_failure_emits_error(self, monkeypatch):
        from websteer.sim.server import SimBrowser

        def navigate_without_load_event(self, tab, params, events):
            tab.load(params.get("url") or "")
            return {"frameId": tab.frame_id, "loaderId": "loader-stuck"}

        monkeypatch.setattr(SimBrowser, "_page_navigate", navigate_without_load_event)
        async with sim_driver(load_timeout=0.05) as (session, _):
            gateway = scripted_gateway("never used")
            events, sink = collect_events()
            trajectory = await run_episode(
                GOAL,
                EpisodeConfig(agent_kind=AgentKind.PROMPT, grounding=LIGHT_GROUNDING),
                session,
                gateway,
                CFG,
                user_plan="1. open the page",
                event_sink=sink,
            )
        assert [kind for kind, _ in events] == ["error"]
        assert "initial navigation failed" in events[0][1]["error"]
        assert events[0][1]["steps"] == 0
        assert trajectory.steps == ()
        assert gateway.provider.call_count == 0

    async def test_policy_error_mid_episode_emits_error_with_partial_trajectory(self):
        async with sim_driver() as (session, _):
            gateway = scripted_gateway(
                tool("scroll"),
                tool("scroll"),
                tool("warp"),  # generation protocol violation...
                tool("warp"),  # ...and again after the corrective re-prompt
            )
            events, sink = collect_events()
            trajectory = await run_episode(
                GOAL,
                EpisodeConfig(agent_kind=AgentKind.FUNCTION_CALLING, grounding=LIGHT_GROUNDING),
                session,
                gateway,
                CFG,
                user_plan="1. scroll",
                event_sink=sink,
            )
        assert events[-1][0] == "error"
        assert events[-1][1]["steps"] == 1
        assert len(trajectory.steps) == 1

    async def test_replanning_kind_emits_replanned_event(self):
        async with sim_driver() as (session, _):
            gateway = scripted_gateway(
                "1. scroll a bit",  # initial plan
                tool("scroll"),  # generation t=0
                tool("scroll"),  # grounding t=0
                "2. now stop scrolling",  # replan at t=1
                "looks done",  # generation t=1: text -> stop
            )
            events, sink = collect_events()
            trajectory = await run_episode(
                GOAL,
                EpisodeConfig(
                    agent_kind=AgentKind.HIGH_LEVEL_PLANNING,
                    replan_every=1,
                    grounding=LIGHT_GROUNDING,
                ),
                session,
                gateway,
                CFG,
                event_sink=sink,
            )
        kinds = [kind for kind, _ in events]
        assert kinds == [
            "plan_generated",
            "action_generated",
            "action_grounded",
            "action_executed",
            "replanned",
            "done",
        ]
        replanned = events[4][1]
        assert replanned == {"step": 1, "plan": "2. now stop scrolling", "revision": 1}
        assert trajectory.initial_plan.text == "1. scroll a bit"

    async def test_memory_round_trip_through_episodes(self, tmp_path):
        store = MemoryStore(tmp_path / "wf.jsonl")
        config = EpisodeConfig(
            agent_kind=AgentKind.FUNCTION_CALLING,
            grounding=LIGHT_GROUNDING,
            memory_enabled=True,
        )
        async with sim_driver() as (session, _):
            gateway = scripted_gateway(
                "1. fill and submit",  # plan (no workflows yet)
                tool("fill", mark="1", value="alice"),
                tool("fill", mark="1", value="alice"),
                "done",
            )
            await run_episode(GOAL, config, session, gateway, CFG, memory_store=store)
        assert len(store) == 1
        assert store.entries[0].steps == ("fill element [1] with {value}",)

        # second run: the stored workflow reaches the planning prompt
        async with sim_driver() as (session, _):
            gateway = scripted_gateway("1. reuse what worked", "done")
            await run_episode(GOAL, config, session, gateway, CFG, memory_store=store)
        plan_prompt = gateway.transcript.prompts_tagged("plan")[0]
        assert "Workflows that solved similar tasks:" in plan_prompt
        assert "fill element [1] with {value}" in plan_prompt

    async def test_all_failed_episode_stores_nothing(self, tmp_path):
        store = MemoryStore(tmp_path / "wf.jsonl")
        async with sim_driver() as (session, _):
            gateway = scripted_gateway(
                "1. try",
                tool("click", mark="9"),
                tool("click", mark="9"),
                "giving up",
            )
            await run_episode(
                GOAL,
                EpisodeConfig(
                    agent_kind=AgentKind.FUNCTION_CALLING,
                    grounding=LIGHT_GROUNDING,
                    memory_enabled=True,
                ),
                session,
                gateway,
                CFG,
                memory_store=store,
            )
        assert len(store) == 0


OBSERVATION_MARKERS = (
    "RootWebArea",
    "<html",
    "Interactive elements",
    "Accessibility tree:",
)


class TestGenerationPurity:
    async def test_next_action_prompts_never_carry_observation_payloads(self):
        # context-aware replanning feeds the page into plan prompts by design;
        # generation prompts must stay clean even then
        features = frozenset(
            {
                ObservationFeature.INTERACTIVE_ELEMENTS,
                ObservationFeature.AXTREE,
                ObservationFeature.DOM,
            }
        )
        async with sim_driver() as (session, _):
            gateway = scripted_gateway(
                "1. look, then act",  # plan
                tool("scroll"),
                tool("scroll"),
                "2. revised with the page in view",  # context-aware replan at t=1
                tool("scroll", direction="up"),
                tool("scroll", direction="up"),
                "3. finish up",  # replan at t=2
                "that will do",
            )
            await run_episode(
                GOAL,
                EpisodeConfig(
                    agent_kind=AgentKind.CONTEXT_AWARE_PLANNING,
                    replan_every=1,
                    max_steps=4,
                    grounding=GroundingConfig(features=features),
                ),
                session,
                gateway,
                CFG,
            )

        next_action_prompts = gateway.transcript.prompts_tagged("next_action")
        assert len(next_action_prompts) == 3
        for prompt in next_action_prompts:
            for marker in OBSERVATION_MARKERS:
                assert marker not in prompt, f"{marker!r} leaked into a generation prompt"

        # the scan has teeth: the same markers do appear in replan prompts
        plan_prompts = gateway.transcript.prompts_tagged("plan")
        assert any("Accessibility tree:" in p for p in plan_prompts)
        # and grounding prompts carry the interactive-element listing
        grounding_prompts = gateway.transcript.prompts_tagged("grounding")
        assert all("Interactive elements (cite by mark number):" in p for p in grounding_prompts)
