"""Trajectory replay: re-execute recorded grounded actions without a model.

Replay restores browser state for tree search and verifies that a recording
still holds against the live site. A step that succeeded when recorded but
fails now is a divergence; replay stops there and reports the step index.
"""

from __future__ import annotations

from dataclasses import dataclass

from .browser import DriverSession
from .model import EvaluationRecord, Trajectory


@dataclass(frozen=True)
class ReplayStepRecord:
    index: int
    executed: bool  # False when the recording carries no grounded action
    recorded_ok: bool
    replay_ok: bool | None
    message: str


@dataclass(frozen=True)
class ReplayResult:
    navigation: EvaluationRecord
    steps: tuple[ReplayStepRecord, ...]
    final_url: str
    diverged_at: int | None

    @property
    def ok(self) -> bool:
        return self.navigation.ok and self.diverged_at is None


async def replay_trajectory(trajectory: Trajectory, session: DriverSession) -> ReplayResult:
    """Navigate to the start URL and re-run each recorded grounded action in order.

    Steps recorded without a grounded action (grounding failed at record
    time) changed nothing then, so they are skipped now. Steps recorded as
    failures may fail or succeed without diverging; only a recorded success
    that now fails stops the replay.
    """
    nav = await session.navigate(trajectory.goal.starting_url)
    if not nav.ok:
        return ReplayResult(nav, (), await session.current_url(), None)

    records: list[ReplayStepRecord] = []
    diverged_at: int | None = None
    for step in trajectory.steps:
        index = step.action.step_index
        if step.grounded is None:
            records.append(
                ReplayStepRecord(index, False, step.evaluation.ok, None, "no grounded action; skipped")
            )
            continue
        evaluation = await session.execute(step.grounded)
        records.append(
            ReplayStepRecord(index, True, step.evaluation.ok, evaluation.ok, evaluation.message)
        )
        if step.evaluation.ok and not evaluation.ok:
            diverged_at = index
            break
    return ReplayResult(nav, tuple(records), await session.current_url(), diverged_at)
