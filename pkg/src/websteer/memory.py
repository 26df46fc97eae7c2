"""Workflow memory: induce reusable step patterns from successful trajectories.

Stored workflows are abstracted (URLs, quoted values, long numeric ids become
placeholders) so that one recorded flow transfers across concrete pages.
Retrieval scores domain match plus task-text token overlap.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from urllib.parse import urlparse

from .model import Goal, Trajectory

logger = logging.getLogger(__name__)

AWM_STORE_ENV = "AWM_STORE_PATH"
DEFAULT_STORE_FILENAME = "awm_store.jsonl"
DEFAULT_TOP_N = 3

# applied in this order; double-quoted labels are deliberately left intact
_URL_RE = re.compile(r"https?://[^\s'\"<>]+")
_SINGLE_QUOTED_RE = re.compile(r"'[^']*'")
_LONG_NUMBER_RE = re.compile(r"\b\d{3,}\b")

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class WorkflowMemoryEntry:
    task_summary: str
    domain: str
    steps: tuple[str, ...]
    created_at: float
    use_count: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.task_summary.strip():
            raise ValueError("task_summary must be non-empty")
        if not self.steps:
            raise ValueError("workflow steps must be non-empty")


def abstract_step(text: str) -> str:
    """Replace URLs, single-quoted values, then standalone numbers >= 3 digits."""
    text = _URL_RE.sub("{url}", text)
    text = _SINGLE_QUOTED_RE.sub("{value}", text)
    text = _LONG_NUMBER_RE.sub("{id}", text)
    return text


def _domain_of(url: str) -> str:
    return urlparse(url).hostname or ""


def induce_workflow(trajectory: Trajectory) -> WorkflowMemoryEntry | None:
    """Distill the successful steps of a trajectory, or None if all failed."""
    steps = tuple(
        abstract_step(s.action.text) for s in trajectory.steps if s.evaluation.ok
    )
    if not steps:
        return None
    summary = " ".join(trajectory.goal.text.split())
    return WorkflowMemoryEntry(
        task_summary=summary,
        domain=_domain_of(trajectory.goal.starting_url),
        steps=steps,
        created_at=time.time(),
    )


def _tokens(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(text.lower()))


def _overlap(a: frozenset[str], b: frozenset[str]) -> float:
    if not a or not b:
        return 0.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def score_entry(goal: Goal, entry: WorkflowMemoryEntry) -> float:
    """Domain match contributes 1.0; task-token Jaccard overlap contributes [0, 1]."""
    score = 1.0 if entry.domain and entry.domain == _domain_of(goal.starting_url) else 0.0
    return score + _overlap(_tokens(goal.text), _tokens(entry.task_summary))


def retrieve(
    goal: Goal,
    entries: Sequence[WorkflowMemoryEntry],
    top_n: int = DEFAULT_TOP_N,
) -> list[WorkflowMemoryEntry]:
    """Top entries by score, ties broken newest-first. Zero-score entries are noise."""
    scored = [
        (score_entry(goal, e), e.created_at, i, e)
        for i, e in enumerate(entries)
    ]
    scored = [row for row in scored if row[0] > 0.0]
    scored.sort(key=lambda row: (-row[0], -row[1], -row[2]))
    return [row[3] for row in scored[:top_n]]


def default_store_path() -> Path:
    return Path(os.environ.get(AWM_STORE_ENV) or DEFAULT_STORE_FILENAME)


def _entry_to_obj(e: WorkflowMemoryEntry) -> dict:
    return {
        "task_summary": e.task_summary,
        "domain": e.domain,
        "steps": list(e.steps),
        "created_at": e.created_at,
        "use_count": e.use_count,
    }


def _entry_from_obj(obj: object) -> WorkflowMemoryEntry:
    if not isinstance(obj, dict):
        raise ValueError("entry must be an object")
    steps = obj.get("steps")
    if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
        raise ValueError("steps must be a list of strings")
    return WorkflowMemoryEntry(
        task_summary=str(obj["task_summary"]),
        domain=str(obj.get("domain", "")),
        steps=tuple(steps),
        created_at=float(obj.get("created_at", 0.0)),
        use_count=int(obj.get("use_count", 0)),
    )


class MemoryStore:
    """Append-only JSONL store. Malformed lines are skipped with a warning."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else default_store_path()
        self.entries: list[WorkflowMemoryEntry] = []
        self.warning_count = 0
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        for lineno, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                self.entries.append(_entry_from_obj(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                self.warning_count += 1
                logger.warning("skipping malformed workflow line %d in %s: %s", lineno, self.path, exc)

    def append(self, entry: WorkflowMemoryEntry) -> None:
        self.entries.append(entry)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(_entry_to_obj(entry)) + "\n")

    def retrieve(self, goal: Goal, top_n: int = DEFAULT_TOP_N) -> list[WorkflowMemoryEntry]:
        return retrieve(goal, self.entries, top_n)

    def __len__(self) -> int:
        return len(self.entries)
