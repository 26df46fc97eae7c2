"""Browser driver: session lifecycle, observation capture, action execution.

Talks structured DevTools domains for everything the protocol models
directly (DOM queries, box models, screenshots, navigation history,
accessibility) and falls back to small page scripts only for in-page
effects. Page-level problems come back as failure EvaluationRecords;
only losing the browser raises.
"""

from __future__ import annotations

import asyncio
import base64
import json
import logging
import os
import re
import shutil
import tempfile
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .cdp import (
    CdpCommandError,
    CdpConnectError,
    CdpConnection,
    CdpConnectionLost,
    CdpError,
    CdpTargetSession,
)
from .model import (
    ActionKind,
    BoundingBox,
    ElementInfo,
    EvaluationRecord,
    GroundedAction,
    ImageHandle,
    InvariantViolation,
    Observation,
    ObservationFeature,
    SomMark,
    TEXT_EXCERPT_MAX_CHARS,
    clip_summary,
    failure,
    is_absolute_http_url,
    success,
)
from .selectors import unique_selector

logger = logging.getLogger(__name__)

DEFAULT_VIEWPORT = (1280, 720)
LOAD_TIMEOUT = 30.0
NAV_GRACE = 1.0  # seconds to wait for a load event after a click before assuming none
DOM_SNAPSHOT_MAX_CHARS = 500_000
SCROLL_STEP_PX = 600

# One query captures everything the agent may act on; box-model visibility
# filters it down afterwards.
INTERACTIVE_SELECTOR = "a, button, input, select, textarea, [role], [onclick], [contenteditable]"

OVERLAY_CONTAINER_ID = "__websteer_overlay__"

_DEVTOOLS_LINE_RE = re.compile(r"DevTools listening on (ws://\S+)")
_BROWSER_BINARIES = ("google-chrome", "chromium", "chromium-browser", "chrome", "headless_shell")

# The in-page half of the driver. A real browser runs the JavaScript; the
# simulator recognizes the marker comment and interprets the args line
# natively. Both produce the same result objects.
_PAGE_OP_JS = """/* websteer page-op */
const args = __ARGS__;
(() => {
  const q = (sel) => Array.from(document.querySelectorAll(sel));
  const one = (sel) => { const els = q(sel); return els.length === 1 ? els[0] : els.length; };
  const bad = (n) => ({ ok: false, reason: "selector matched " + n + " elements" });
  const overlay = (create) => {
    let c = document.getElementById("__websteer_overlay__");
    if (!c && create) {
      c = document.createElement("div");
      c.id = "__websteer_overlay__";
      c.setAttribute("data-websteer-overlay", "1");
      c.style.position = "absolute";
      c.style.left = "0px";
      c.style.top = "0px";
      c.style.zIndex = "2147483646";
      document.body.appendChild(c);
    }
    return c;
  };
  const box = (el, geom, cls) => {
    el.setAttribute("data-x", String(geom.x));
    el.setAttribute("data-y", String(geom.y));
    el.setAttribute("data-w", String(geom.w));
    el.setAttribute("data-h", String(geom.h));
    el.style.position = "absolute";
    el.style.left = geom.x + "px";
    el.style.top = geom.y + "px";
    el.style.width = geom.w + "px";
    el.style.minHeight = geom.h + "px";
    el.style.border = "2px solid " + (cls === "note" ? "#78680e" : "#d65c0e");
    el.style.background = cls === "note" ? "#fff4b4" : "transparent";
    el.style.font = "12px sans-serif";
    el.style.color = "#000";
  };
  switch (args.op) {
    case "click": {
      const el = one(args.selector);
      if (typeof el === "number") return bad(el);
      el.click();
      return { ok: true, navigated: false };
    }
    case "set_value": {
      const el = one(args.selector);
      if (typeof el === "number") return bad(el);
      el.value = args.value;
      el.setAttribute("value", args.value);
      el.dispatchEvent(new Event("input", { bubbles: true }));
      el.dispatchEvent(new Event("change", { bubbles: true }));
      return { ok: true };
    }
    case "select_option": {
      const el = one(args.selector);
      if (typeof el === "number") return bad(el);
      for (const opt of el.options || []) {
        if (opt.value === args.value || opt.textContent.trim() === args.value) {
          el.value = opt.value;
          opt.setAttribute("selected", "selected");
          el.dispatchEvent(new Event("change", { bubbles: true }));
          return { ok: true };
        }
      }
      return { ok: false, reason: "no option matching " + JSON.stringify(args.value) };
    }
    case "read_value": {
      const el = one(args.selector);
      if (typeof el === "number") return bad(el);
      return { ok: true, value: el.value !== undefined ? String(el.value) : el.textContent };
    }
    case "scroll": {
      window.scrollBy(0, args.dy);
      return { ok: true, y: window.scrollY };
    }
    case "som_marks": {
      const c = overlay(true);
      for (const m of args.marks) {
        const s = document.createElement("span");
        s.setAttribute("data-websteer-mark", String(m.mark));
        s.textContent = String(m.mark);
        box(s, m, "mark");
        c.appendChild(s);
      }
      return { ok: true, count: args.marks.length };
    }
    case "note": {
      const c = overlay(true);
      const d = document.createElement("div");
      d.setAttribute("data-websteer-note", "1");
      d.textContent = args.note;
      box(d, args, "note");
      c.appendChild(d);
      return { ok: true };
    }
    case "clear_overlays": {
      const c = overlay(false);
      if (!c) return { ok: true, removed: false };
      c.remove();
      return { ok: true, removed: true };
    }
    case "page_text": {
      let text = "";
      if (document.body) {
        const clone = document.body.cloneNode(true);
        for (const el of clone.querySelectorAll("[data-websteer-overlay]")) el.remove();
        text = clone.innerText || clone.textContent || "";
      }
      return { ok: true, title: document.title, text: text.slice(0, args.max_chars) };
    }
  }
  return { ok: false, reason: "unknown op " + JSON.stringify(args.op) };
})()
"""


class BrowserMode(str, Enum):
    LAUNCH_LOCAL = "launch_local"
    ATTACH_CDP = "attach_cdp"
    REMOTE_ENDPOINT = "remote_endpoint"


class DriverError(RuntimeError):
    """Base class for driver-level failures."""


class DriverConnectError(DriverError):
    """No browser could be launched or attached."""


class DriverLost(DriverError):
    """The browser went away mid-session; the episode cannot continue."""


@dataclass(frozen=True)
class BrowserEnvironmentConfig:
    """Where the browser lives and how the session should be shaped."""

    mode: BrowserMode = BrowserMode.ATTACH_CDP
    endpoint: str | None = None
    headless: bool = True
    viewport: tuple[int, int] = DEFAULT_VIEWPORT
    live_view_url: str | None = None
    nav_grace: float = NAV_GRACE
    load_timeout: float = LOAD_TIMEOUT

    def __post_init__(self) -> None:
        if self.mode is BrowserMode.LAUNCH_LOCAL:
            if self.endpoint is not None:
                raise InvariantViolation("launch_local manages its own endpoint")
        elif not self.endpoint:
            raise InvariantViolation(f"{self.mode.value} requires an endpoint")
        if self.viewport[0] <= 0 or self.viewport[1] <= 0:
            raise InvariantViolation("viewport dimensions must be positive")


@dataclass(frozen=True)
class BrowserSession:
    """Identity of one attached browser session, as reported to callers."""

    session_id: str
    mode: BrowserMode
    live_view_url: str | None = None


class DomNode:
    """Driver-side view of one DOM element, as parsed from DOM.getDocument."""

    __slots__ = ("node_id", "backend_id", "tag", "attrs", "parent", "children", "texts")

    def __init__(self, node_id: int, backend_id: int, tag: str, attrs: dict[str, str]) -> None:
        self.node_id = node_id
        self.backend_id = backend_id
        self.tag = tag
        self.attrs = attrs
        self.parent: DomNode | None = None
        self.children: list[DomNode] = []
        self.texts: list[str] = []

    @property
    def ref(self) -> str:
        return str(self.node_id)

    def attr(self, name: str) -> str | None:
        return self.attrs.get(name.lower())

    def same_tag_index(self) -> int:
        if self.parent is None:
            return 1
        index = 0
        for sibling in self.parent.children:
            if sibling.tag == self.tag:
                index += 1
                if sibling is self:
                    return index
        return 1

    def subtree_text(self, limit: int = TEXT_EXCERPT_MAX_CHARS) -> str:
        parts = list(self.texts)
        for child in self.children:
            parts.append(child.subtree_text(limit))
        return " ".join(" ".join(parts).split())[:limit]


class DomIndex:
    """Snapshot of the page's element tree keyed by protocol node id."""

    def __init__(self, root_id: int) -> None:
        self.root_id = root_id
        self.by_id: dict[int, DomNode] = {}
        self.elements: list[DomNode] = []

    @classmethod
    def parse(cls, root_payload: dict) -> "DomIndex":
        index = cls(root_payload["nodeId"])

        def walk(payload: dict, parent: DomNode | None) -> None:
            node_type = payload.get("nodeType")
            if node_type == 3:
                if parent is not None:
                    parent.texts.append(payload.get("nodeValue", ""))
                return
            if node_type == 9:
                for child in payload.get("children", []):
                    walk(child, parent)
                return
            if node_type != 1:
                return
            raw_attrs = payload.get("attributes", [])
            attrs = {
                raw_attrs[i].lower(): raw_attrs[i + 1] for i in range(0, len(raw_attrs) - 1, 2)
            }
            node = DomNode(
                payload["nodeId"],
                payload.get("backendNodeId", payload["nodeId"]),
                payload.get("localName") or payload.get("nodeName", "").lower(),
                attrs,
            )
            node.parent = parent
            if parent is not None:
                parent.children.append(node)
            index.by_id[node.node_id] = node
            index.elements.append(node)
            for child in payload.get("children", []):
                walk(child, node)

        walk(root_payload, None)
        return index


@dataclass
class CaptureState:
    """What the last observation pinned down, kept for grounding."""

    index: DomIndex
    mark_nodes: dict[int, int] = field(default_factory=dict)  # mark_id -> node_id


def _render_axtree(nodes: Sequence[dict]) -> str:
    by_id = {n["nodeId"]: n for n in nodes}
    referenced = {cid for n in nodes for cid in n.get("childIds", [])}
    lines: list[str] = []

    def walk(node: dict, depth: int) -> None:
        if not node.get("ignored"):
            role = (node.get("role") or {}).get("value", "")
            name = (node.get("name") or {}).get("value", "")
            line = f'{"  " * depth}{role} "{name}"' if name else f'{"  " * depth}{role}'
            lines.append(line)
            depth += 1
        for child_id in node.get("childIds", []):
            child = by_id.get(child_id)
            if child is not None:
                walk(child, depth)

    for node in nodes:
        if node["nodeId"] not in referenced:
            walk(node, 0)
    return "\n".join(lines)


def _find_browser_binary() -> str | None:
    override = os.environ.get("WEBSTEER_BROWSER")
    if override:
        return override if shutil.which(override) or os.path.exists(override) else None
    for name in _BROWSER_BINARIES:
        path = shutil.which(name)
        if path:
            return path
    return None


class DriverSession:
    """One attached page target plus the helpers built on it."""

    def __init__(
        self,
        info: BrowserSession,
        connection: CdpConnection,
        target: CdpTargetSession,
        config: BrowserEnvironmentConfig,
        process: asyncio.subprocess.Process | None = None,
        profile_dir: str | None = None,
    ) -> None:
        self.info = info
        self.connection = connection
        self.target = target
        self.config = config
        self._process = process
        self._profile_dir = profile_dir
        self.last_capture: CaptureState | None = None

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    async def open_session(cls, config: BrowserEnvironmentConfig) -> "DriverSession":
        process: asyncio.subprocess.Process | None = None
        profile_dir: str | None = None
        if config.mode is BrowserMode.LAUNCH_LOCAL:
            binary = _find_browser_binary()
            if binary is None:
                raise DriverConnectError(
                    "no local browser binary found (set WEBSTEER_BROWSER or install chromium)"
                )
            process, endpoint, profile_dir = await cls._launch(binary, config)
        else:
            endpoint = config.endpoint or ""

        try:
            connection = await CdpConnection.connect(endpoint)
        except CdpConnectError as exc:
            await cls._reap(process, profile_dir)
            raise DriverConnectError(str(exc)) from exc

        try:
            targets = await connection.send("Target.getTargets")
            page_target = next(
                (t for t in targets.get("targetInfos", []) if t.get("type") == "page"), None
            )
            if page_target is None:
                created = await connection.send("Target.createTarget", {"url": "about:blank"})
                target_id = created["targetId"]
            else:
                target_id = page_target["targetId"]
            attached = await connection.send(
                "Target.attachToTarget", {"targetId": target_id, "flatten": True}
            )
            target = CdpTargetSession(connection, attached["sessionId"])
            await target.send("Page.enable")
            await target.send("DOM.enable")
            await target.send("Runtime.enable")
            await target.send("Accessibility.enable")
            await target.send("Page.setLifecycleEventsEnabled", {"enabled": True})
            await target.send(
                "Emulation.setDeviceMetricsOverride",
                {
                    "width": config.viewport[0],
                    "height": config.viewport[1],
                    "deviceScaleFactor": 1,
                    "mobile": False,
                },
            )
        except CdpError as exc:
            await connection.close()
            await cls._reap(process, profile_dir)
            raise DriverConnectError(f"attach handshake failed: {exc}") from exc

        live_view = config.live_view_url if config.mode is BrowserMode.REMOTE_ENDPOINT else None
        info = BrowserSession(uuid.uuid4().hex[:12], config.mode, live_view)
        return cls(info, connection, target, config, process, profile_dir)

    @staticmethod
    async def _launch(
        binary: str, config: BrowserEnvironmentConfig
    ) -> tuple[asyncio.subprocess.Process, str, str]:
        profile_dir = tempfile.mkdtemp(prefix="websteer-profile-")
        argv = [
            binary,
            "--remote-debugging-port=0",
            f"--user-data-dir={profile_dir}",
            "--no-first-run",
            "--no-default-browser-check",
            f"--window-size={config.viewport[0]},{config.viewport[1]}",
        ]
        if config.headless:
            argv.insert(1, "--headless=new")
        process = await asyncio.create_subprocess_exec(
            *argv, stdout=asyncio.subprocess.DEVNULL, stderr=asyncio.subprocess.PIPE
        )

        async def read_endpoint() -> str:
            assert process.stderr is not None
            while True:
                line = await process.stderr.readline()
                if not line:
                    raise DriverConnectError("browser exited before announcing its endpoint")
                match = _DEVTOOLS_LINE_RE.search(line.decode("utf-8", "replace"))
                if match:
                    return match.group(1)

        try:
            endpoint = await asyncio.wait_for(read_endpoint(), 10.0)
        except asyncio.TimeoutError as exc:
            await DriverSession._reap(process, profile_dir)
            raise DriverConnectError("browser did not announce a DevTools endpoint") from exc
        return process, endpoint, profile_dir

    @staticmethod
    async def _reap(process: asyncio.subprocess.Process | None, profile_dir: str | None) -> None:
        if process is not None and process.returncode is None:
            process.terminate()
            try:
                await asyncio.wait_for(process.wait(), 5.0)
            except asyncio.TimeoutError:
                process.kill()
                await process.wait()
        if profile_dir is not None:
            shutil.rmtree(profile_dir, ignore_errors=True)

    async def close(self) -> None:
        await self.connection.close()
        await self._reap(self._process, self._profile_dir)

    # -- page ops ----------------------------------------------------------

    async def _page_op(self, args: dict) -> dict:
        script = _PAGE_OP_JS.replace("__ARGS__", json.dumps(args))
        result = await self.target.send(
            "Runtime.evaluate", {"expression": script, "returnByValue": True}
        )
        if "exceptionDetails" in result:
            text = result["exceptionDetails"].get("text", "evaluation failed")
            return {"ok": False, "reason": f"page script failed: {text}"}
        value = (result.get("result") or {}).get("value")
        if not isinstance(value, dict):
            return {"ok": False, "reason": "page script returned no result object"}
        return value

    async def _page_summary(self) -> str:
        try:
            result = await self._page_op({"op": "page_text", "max_chars": 600})
        except CdpError:
            return ""
        if not result.get("ok"):
            return ""
        title = result.get("title", "")
        text = result.get("text", "")
        return clip_summary(f"{title} — {text}" if title else text)

    # -- navigation ---------------------------------------------------------

    def _arm_load_waiter(self) -> asyncio.Future:
        return self.target.wait_event(
            "Page.lifecycleEvent",
            predicate=lambda e: e.params.get("name") in ("load", "networkIdle"),
        )

    async def navigate(self, url: str) -> EvaluationRecord:
        """Go to an absolute URL and wait for the page to settle.

        Completion is the load lifecycle event, with network-idle accepted
        as the quiet fallback; config.load_timeout caps the wait.
        """
        if not is_absolute_http_url(url):
            return failure(f"invalid URL: {url!r} (must be absolute http or https)")
        waiter = self._arm_load_waiter()
        try:
            result = await self.target.send("Page.navigate", {"url": url})
        except CdpCommandError as exc:
            waiter.cancel()
            return failure(f"navigation to {url} failed: {exc.message}")
        if result.get("errorText"):
            waiter.cancel()
            return failure(f"navigation to {url} failed: {result['errorText']}")
        try:
            await asyncio.wait_for(waiter, self.config.load_timeout)
        except asyncio.TimeoutError:
            return failure(f"page load timed out after {self.config.load_timeout}s")
        return success(f"navigated to {url}", page_summary=await self._page_summary())

    async def current_url(self) -> str:
        history = await self.target.send("Page.getNavigationHistory")
        entries = history.get("entries", [])
        index = history.get("currentIndex", -1)
        if 0 <= index < len(entries):
            return entries[index].get("url", "about:blank")
        return "about:blank"

    # -- observation --------------------------------------------------------

    async def _fresh_index(self) -> DomIndex:
        document = await self.target.send("DOM.getDocument", {"depth": -1})
        return DomIndex.parse(document["root"])

    async def _box_for(self, node_id: int) -> BoundingBox | None:
        try:
            result = await self.target.send("DOM.getBoxModel", {"nodeId": node_id})
        except CdpCommandError:
            return None
        model = result.get("model", {})
        content = model.get("content", [])
        if len(content) < 8:
            return None
        xs = content[0::2]
        ys = content[1::2]
        width = max(xs) - min(xs)
        height = max(ys) - min(ys)
        if width <= 0 or height <= 0:
            return None
        return BoundingBox(x=min(xs), y=min(ys), width=width, height=height)

    async def _discover_interactive(
        self, index: DomIndex
    ) -> list[tuple[DomNode, BoundingBox]]:
        result = await self.target.send(
            "DOM.querySelectorAll",
            {"nodeId": index.root_id, "selector": INTERACTIVE_SELECTOR},
        )
        found: list[tuple[DomNode, BoundingBox]] = []
        for node_id in result.get("nodeIds", []):
            node = index.by_id.get(node_id)
            if node is None:
                continue
            if any(
                ancestor.attr("data-websteer-overlay") is not None
                for ancestor in self._ancestry(node)
            ):
                continue
            box = await self._box_for(node_id)
            if box is None:
                continue
            found.append((node, box))
        return found

    @staticmethod
    def _ancestry(node: DomNode):
        current: DomNode | None = node
        while current is not None:
            yield current
            current = current.parent

    @staticmethod
    def _element_info(node: DomNode, mark_id: int) -> ElementInfo:
        classes = tuple((node.attr("class") or "").split())
        return ElementInfo(
            tag=node.tag,
            id_attr=node.attr("id"),
            name_attr=node.attr("name"),
            role=node.attr("role"),
            aria_label=node.attr("aria-label"),
            type_attr=node.attr("type"),
            classes=classes,
            sibling_index=node.same_tag_index(),
            text_excerpt=node.subtree_text(),
            mark_id=mark_id,
        )

    async def capture_observation(
        self, features: Sequence[ObservationFeature] | frozenset[ObservationFeature]
    ) -> Observation:
        """Capture exactly the requested feature bundle for the current page.

        DOM and accessibility captures happen before mark overlays are
        injected, so snapshots stay overlay-free; the screenshot happens
        after, so set-of-marks badges are visible in it.
        """
        feature_set = frozenset(features)
        await self.clear_highlights()  # stale overlays must not leak into this capture
        url = await self.current_url()

        interactive: tuple[ElementInfo, ...] | None = None
        som: tuple[SomMark, ...] | None = None
        axtree_text: str | None = None
        dom_snapshot: str | None = None
        dom_truncated = False
        screenshot_ref: ImageHandle | None = None

        needs_discovery = bool(
            feature_set & {ObservationFeature.INTERACTIVE_ELEMENTS, ObservationFeature.SOM}
        )
        discovered: list[tuple[DomNode, BoundingBox]] = []
        if needs_discovery:
            index = await self._fresh_index()
            discovered = await self._discover_interactive(index)
            state = CaptureState(index=index)
            for position, (node, _) in enumerate(discovered, start=1):
                state.mark_nodes[position] = node.node_id
            self.last_capture = state

        if ObservationFeature.INTERACTIVE_ELEMENTS in feature_set:
            interactive = tuple(
                self._element_info(node, mark_id)
                for mark_id, (node, _) in enumerate(discovered, start=1)
            )

        if ObservationFeature.DOM in feature_set:
            root_id = (
                self.last_capture.index.root_id
                if needs_discovery and self.last_capture is not None
                else (await self._fresh_index()).root_id
            )
            outer = await self.target.send("DOM.getOuterHTML", {"nodeId": root_id})
            markup = outer.get("outerHTML", "")
            if len(markup) > DOM_SNAPSHOT_MAX_CHARS:
                markup = markup[:DOM_SNAPSHOT_MAX_CHARS]
                dom_truncated = True
            dom_snapshot = markup

        if ObservationFeature.AXTREE in feature_set:
            tree = await self.target.send("Accessibility.getFullAXTree")
            axtree_text = _render_axtree(tree.get("nodes", []))

        if ObservationFeature.SOM in feature_set:
            marks = [
                SomMark(mark_id, box, element_ref=str(node.node_id))
                for mark_id, (node, box) in enumerate(discovered, start=1)
            ]
            som = tuple(marks)
            payload = [
                {"mark": m.mark_id, "x": m.box.x, "y": m.box.y, "w": m.box.width, "h": m.box.height}
                for m in marks
            ]
            await self._page_op({"op": "som_marks", "marks": payload})

        if ObservationFeature.SCREENSHOT in feature_set:
            screenshot_ref = await self.screenshot()

        return Observation(
            url=url,
            features=feature_set,
            axtree_text=axtree_text,
            dom_snapshot=dom_snapshot,
            dom_truncated=dom_truncated,
            screenshot_ref=screenshot_ref,
            som=som,
            interactive_elements=interactive,
        )

    async def screenshot(self) -> ImageHandle:
        result = await self.target.send("Page.captureScreenshot", {"format": "png"})
        return ImageHandle("image/png", base64.b64decode(result["data"]))

    # -- grounding support ---------------------------------------------------

    def element_for_mark(self, mark_id: int) -> DomNode | None:
        if self.last_capture is None:
            return None
        node_id = self.last_capture.mark_nodes.get(mark_id)
        if node_id is None:
            return None
        return self.last_capture.index.by_id.get(node_id)

    async def _query_refs(self, selector: str) -> list[str]:
        if self.last_capture is None:
            raise DriverError("no capture to query against")
        result = await self.target.send(
            "DOM.querySelectorAll",
            {"nodeId": self.last_capture.index.root_id, "selector": selector},
        )
        return [str(node_id) for node_id in result.get("nodeIds", [])]

    async def selector_for_mark(self, mark_id: int) -> str | None:
        """Synthesize a verified unique selector for a marked element."""
        node = self.element_for_mark(mark_id)
        if node is None:
            return None
        return await unique_selector(node, self._query_refs)

    # -- execution -----------------------------------------------------------

    async def execute(self, action: GroundedAction) -> EvaluationRecord:
        """Run one grounded action. Page-level problems return failure records."""
        try:
            return await self._execute_inner(action)
        except CdpConnectionLost as exc:
            raise DriverLost(str(exc)) from exc
        except CdpCommandError as exc:
            return failure(f"{action.kind.value} failed: {exc.message}")

    async def _execute_inner(self, action: GroundedAction) -> EvaluationRecord:
        kind = action.kind
        args = dict(action.arguments)

        if kind is ActionKind.NAVIGATE:
            return await self.navigate(args["url"])

        if kind is ActionKind.FINISH:
            return success("finish acknowledged", page_summary=await self._page_summary())

        if kind is ActionKind.GO_BACK:
            history = await self.target.send("Page.getNavigationHistory")
            index = history.get("currentIndex", 0)
            entries = history.get("entries", [])
            if index <= 0:
                return failure("cannot go back: no earlier history entry")
            waiter = self._arm_load_waiter()
            await self.target.send(
                "Page.navigateToHistoryEntry", {"entryId": entries[index - 1]["id"]}
            )
            try:
                await asyncio.wait_for(waiter, self.config.load_timeout)
            except asyncio.TimeoutError:
                return failure("went back but the page never settled")
            return success(
                f"went back to {entries[index - 1].get('url', '')}",
                page_summary=await self._page_summary(),
            )

        if kind is ActionKind.SCROLL:
            direction = args.get("direction", "down")
            dy = SCROLL_STEP_PX if direction != "up" else -SCROLL_STEP_PX
            result = await self._page_op({"op": "scroll", "dy": dy})
            if not result.get("ok"):
                return failure(f"scroll failed: {result.get('reason', 'unknown')}")
            return success(
                f"scrolled {direction} to y={result.get('y', 0)}",
                page_summary=await self._page_summary(),
            )

        if kind is ActionKind.SCRAPE:
            index = await self._fresh_index()
            node_id = index.root_id
            if action.selector:
                resolved = await self._resolve_unique(index, action.selector)
                if isinstance(resolved, EvaluationRecord):
                    return resolved
                node_id = resolved.node_id
            outer = await self.target.send("DOM.getOuterHTML", {"nodeId": node_id})
            markup = outer.get("outerHTML", "")
            return success(markup[:2000], page_summary=await self._page_summary())

        # Selector-addressed interactions.
        index = await self._fresh_index()
        resolved = await self._resolve_unique(index, action.selector or "")
        if isinstance(resolved, EvaluationRecord):
            return resolved
        node = resolved
        if node.attr("disabled") is not None:
            return failure(
                f"element {action.selector!r} is disabled",
                page_summary=await self._page_summary(),
            )
        box = await self._box_for(node.node_id)
        if box is None:
            return failure(
                f"element {action.selector!r} is not visible",
                page_summary=await self._page_summary(),
            )

        if kind is ActionKind.CLICK:
            return await self._do_click(action.selector or "")
        if kind is ActionKind.FILL:
            result = await self._page_op(
                {"op": "set_value", "selector": action.selector, "value": args["value"]}
            )
            if not result.get("ok"):
                return failure(f"fill failed: {result.get('reason', 'unknown')}")
            return success(
                f"filled {action.selector} with {args['value']!r}",
                page_summary=await self._page_summary(),
            )
        if kind is ActionKind.SELECT_OPTION:
            result = await self._page_op(
                {"op": "select_option", "selector": action.selector, "value": args.get("value", "")}
            )
            if not result.get("ok"):
                return failure(f"select_option failed: {result.get('reason', 'unknown')}")
            return success(
                f"selected {args.get('value', '')!r} in {action.selector}",
                page_summary=await self._page_summary(),
            )
        if kind is ActionKind.UPLOAD_FILE:
            path = args.get("path", "")
            await self.target.send(
                "DOM.setFileInputFiles", {"files": [path], "nodeId": node.node_id}
            )
            return success(
                f"attached {path!r} to {action.selector}",
                page_summary=await self._page_summary(),
            )
        return failure(f"unsupported action kind: {kind.value}")

    async def _resolve_unique(self, index: DomIndex, selector: str) -> DomNode | EvaluationRecord:
        if not selector:
            return failure("unresolved target: empty selector")
        try:
            result = await self.target.send(
                "DOM.querySelectorAll", {"nodeId": index.root_id, "selector": selector}
            )
        except CdpCommandError as exc:
            return failure(f"unresolved target: {selector!r} ({exc.message})")
        node_ids = result.get("nodeIds", [])
        if len(node_ids) != 1:
            return failure(
                f"unresolved target: selector {selector!r} matched {len(node_ids)} elements"
            )
        node = index.by_id.get(node_ids[0])
        if node is None:
            return failure(f"unresolved target: {selector!r} resolved outside the snapshot")
        return node

    async def _do_click(self, selector: str) -> EvaluationRecord:
        waiter = self._arm_load_waiter()
        try:
            result = await self._page_op({"op": "click", "selector": selector})
        except CdpCommandError as exc:
            # Real pages can tear down the script context when a click
            # triggers instant navigation; that is a successful click.
            if "destroyed" in exc.message.lower():
                result = {"ok": True, "navigated": True}
            else:
                waiter.cancel()
                raise
        if not result.get("ok"):
            waiter.cancel()
            return failure(f"click failed: {result.get('reason', 'unknown')}")
        grace = self.config.load_timeout if result.get("navigated") else self.config.nav_grace
        try:
            await asyncio.wait_for(waiter, grace)
            navigated = True
        except asyncio.TimeoutError:
            navigated = False
        note = " (page navigated)" if navigated else ""
        return success(f"clicked {selector}{note}", page_summary=await self._page_summary())

    # -- highlighting ---------------------------------------------------------

    async def highlight(self, selector: str, note: str) -> bool:
        """Draw a pre-action note near the addressed element. Best-effort."""
        index = await self._fresh_index()
        resolved = await self._resolve_unique(index, selector)
        if isinstance(resolved, EvaluationRecord):
            logger.warning("highlight skipped: %s", resolved.message)
            return False
        box = await self._box_for(resolved.node_id)
        if box is None:
            logger.warning("highlight skipped: %r has no box", selector)
            return False
        result = await self._page_op(
            {
                "op": "note",
                "note": note,
                "x": box.x,
                "y": max(0.0, box.y - 26.0),
                "w": max(box.width, 180.0),
                "h": 22.0,
            }
        )
        return bool(result.get("ok"))

    async def clear_highlights(self) -> bool:
        result = await self._page_op({"op": "clear_overlays"})
        return bool(result.get("ok") and result.get("removed"))


async def open_session(config: BrowserEnvironmentConfig) -> DriverSession:
    """Open a browser session per config; the caller owns closing it."""
    return await DriverSession.open_session(config)
