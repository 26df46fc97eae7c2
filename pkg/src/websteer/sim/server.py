"""WebSocket server speaking the DevTools wire protocol over the sim DOM.

Implements the command subset the driver issues: target attachment in
flat session mode, navigation with lifecycle events, DOM inspection and
queries, box models, screenshots, accessibility trees, and the page-op
scripts the driver runs through Runtime.evaluate. Every frame in both
directions is kept in a transcript so tests can audit the wire traffic.
"""

from __future__ import annotations

import asyncio
import base64
import itertools
import json
import logging
import re
from dataclasses import dataclass
from urllib.parse import urljoin, urlencode, urlsplit

from websockets.asyncio.server import serve as ws_serve

from . import ax
from .cssmatch import CssParseError, query_all
from .dom import SimNode, parse_html, serialize
from .render import (
    MARK_ATTR,
    NOTE_ATTR,
    OVERLAY_CONTAINER_ATTR,
    layout_document,
    render_png,
)
from .site import StaticSite

logger = logging.getLogger(__name__)

PAGE_OP_MARKER = "/* websteer page-op */"
_ARGS_RE = re.compile(r"const args = (\{.*?\});", re.DOTALL)

BLANK_MARKUP = "<html><head><title></title></head><body></body></html>"

SUBMITTABLE_INPUT_TYPES = {
    "text",
    "password",
    "email",
    "search",
    "url",
    "tel",
    "number",
    "hidden",
}


class SimCommandError(Exception):
    def __init__(self, message: str, code: int = -32000) -> None:
        super().__init__(message)
        self.code = code


@dataclass
class HistoryEntry:
    entry_id: int
    url: str
    title: str
    markup: str


class SimTab:
    """One page target: a history stack plus the live document."""

    def __init__(self, browser: "SimBrowser", target_id: str) -> None:
        self.browser = browser
        self.target_id = target_id
        self.frame_id = f"frame-{target_id}"
        self.history: list[HistoryEntry] = []
        self.index = -1
        self.doc = parse_html(BLANK_MARKUP, url="about:blank")
        self.viewport = (1280, 720)
        self.scroll_y = 0
        self.focused: SimNode | None = None
        self.lifecycle_enabled = False
        self._node_ids: dict[int, int] = {}
        self._nodes: dict[int, SimNode] = {}
        self._id_counter = itertools.count(1)
        self._entry_counter = itertools.count(1)
        self._loader_counter = itertools.count(1)

    @property
    def url(self) -> str:
        if 0 <= self.index < len(self.history):
            return self.history[self.index].url
        return "about:blank"

    @property
    def title(self) -> str:
        return self.doc.title

    def register(self, node: SimNode) -> int:
        key = id(node)
        node_id = self._node_ids.get(key)
        if node_id is None:
            node_id = next(self._id_counter)
            self._node_ids[key] = node_id
            self._nodes[node_id] = node
        return node_id

    def node_by_id(self, node_id: int) -> SimNode:
        node = self._nodes.get(node_id)
        if node is None:
            raise SimCommandError(f"Could not find node with given id: {node_id}")
        return node

    def load(self, url: str, push: bool = True) -> str:
        parts = urlsplit(url)
        if url == "about:blank":
            markup, final_url = BLANK_MARKUP, url
        elif parts.scheme in ("http", "https") and parts.netloc:
            page = self.browser.site.load(url)
            markup, final_url = page.markup, page.url
        else:
            raise SimCommandError("Cannot navigate to invalid URL")
        self.doc = parse_html(markup, url=final_url)
        self.focused = None
        self.scroll_y = 0
        if push:
            del self.history[self.index + 1 :]
            self.history.append(
                HistoryEntry(next(self._entry_counter), final_url, self.doc.title, markup)
            )
            self.index = len(self.history) - 1
        return f"loader-{next(self._loader_counter)}"

    def activate_entry(self, entry_id: int) -> None:
        for i, entry in enumerate(self.history):
            if entry.entry_id == entry_id:
                self.index = i
                self.doc = parse_html(entry.markup, url=entry.url)
                self.focused = None
                self.scroll_y = 0
                return
        raise SimCommandError(f"No history entry with id {entry_id}")

    def layout(self):
        return layout_document(self.doc, self.viewport)


class SimBrowser:
    """Shared browser state behind one or more WebSocket connections."""

    def __init__(self, site: StaticSite) -> None:
        self.site = site
        self.tabs: dict[str, SimTab] = {}
        self.sessions: dict[str, SimTab] = {}
        self.transcript: list[dict] = []
        self._target_counter = itertools.count(1)
        self._session_counter = itertools.count(1)
        self._connections: set = set()
        self._server = None
        self.endpoint: str | None = None
        self._new_tab()  # a fresh browser always has one blank page

    def _new_tab(self) -> SimTab:
        target_id = f"target-{next(self._target_counter)}"
        tab = SimTab(self, target_id)
        self.tabs[target_id] = tab
        return tab

    def _sessions_of(self, tab: SimTab) -> list[str]:
        return [sid for sid, t in self.sessions.items() if t is tab]

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> str:
        self._server = await ws_serve(self._handler, host, port, max_size=None)
        sock = self._server.sockets[0]
        self.endpoint = f"ws://{host}:{sock.getsockname()[1]}/devtools/browser/sim"
        return self.endpoint

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    async def _handler(self, connection) -> None:
        self._connections.add(connection)
        try:
            async for raw in connection:
                await self._handle_frame(connection, raw)
        except Exception:
            logger.debug("sim connection closed", exc_info=True)
        finally:
            self._connections.discard(connection)

    async def _send(self, connection, payload: dict) -> None:
        self.transcript.append({"dir": "send", "msg": payload})
        await connection.send(json.dumps(payload))

    async def _broadcast(self, payload: dict) -> None:
        self.transcript.append({"dir": "send", "msg": payload})
        data = json.dumps(payload)
        for conn in list(self._connections):
            try:
                await conn.send(data)
            except Exception:
                self._connections.discard(conn)

    async def _handle_frame(self, connection, raw: str) -> None:
        msg = json.loads(raw)
        self.transcript.append({"dir": "recv", "msg": msg})
        cid = msg.get("id")
        method = msg.get("method", "")
        params = msg.get("params") or {}
        session_id = msg.get("sessionId")
        events: list[dict] = []
        try:
            result = self._dispatch(method, params, session_id, events)
            reply: dict = {"id": cid, "result": result}
        except SimCommandError as exc:
            reply = {"id": cid, "error": {"code": exc.code, "message": str(exc)}}
        except Exception as exc:  # defensive: never kill the read loop
            logger.exception("sim handler failure for %s", method)
            reply = {"id": cid, "error": {"code": -32603, "message": f"internal: {exc}"}}
        if session_id is not None:
            reply["sessionId"] = session_id
        await self._send(connection, reply)
        for event in events:
            await self._broadcast(event)

    # -- dispatch ---------------------------------------------------------

    def _dispatch(self, method: str, params: dict, session_id: str | None, events: list[dict]):
        browser_handlers = {
            "Browser.getVersion": self._browser_get_version,
            "Target.getTargets": self._target_get_targets,
            "Target.createTarget": self._target_create_target,
            "Target.attachToTarget": self._target_attach,
            "Target.setDiscoverTargets": lambda p, e: {},
        }
        if method in browser_handlers:
            return browser_handlers[method](params, events)

        if session_id is None:
            raise SimCommandError(f"'{method}' requires a session", code=-32001)
        tab = self.sessions.get(session_id)
        if tab is None:
            raise SimCommandError(f"unknown session {session_id}", code=-32001)

        session_handlers = {
            "Page.enable": lambda t, p, e: {},
            "DOM.enable": lambda t, p, e: {},
            "Runtime.enable": lambda t, p, e: {},
            "Accessibility.enable": lambda t, p, e: {},
            "Page.setLifecycleEventsEnabled": self._page_set_lifecycle,
            "Page.navigate": self._page_navigate,
            "Page.getNavigationHistory": self._page_get_history,
            "Page.navigateToHistoryEntry": self._page_history_entry,
            "Page.captureScreenshot": self._page_screenshot,
            "Emulation.setDeviceMetricsOverride": self._emulation_metrics,
            "DOM.getDocument": self._dom_get_document,
            "DOM.querySelector": self._dom_query_selector,
            "DOM.querySelectorAll": self._dom_query_selector_all,
            "DOM.getOuterHTML": self._dom_get_outer_html,
            "DOM.getAttributes": self._dom_get_attributes,
            "DOM.getBoxModel": self._dom_get_box_model,
            "DOM.focus": self._dom_focus,
            "DOM.setFileInputFiles": self._dom_set_files,
            "Input.insertText": self._input_insert_text,
            "Accessibility.getFullAXTree": self._ax_full_tree,
            "Runtime.evaluate": self._runtime_evaluate,
        }
        handler = session_handlers.get(method)
        if handler is None:
            raise SimCommandError(f"'{method}' wasn't found", code=-32601)
        return handler(tab, params, events)

    # -- browser scope ----------------------------------------------------

    def _browser_get_version(self, params, events):
        return {
            "protocolVersion": "1.3",
            "product": "WebsteerSim/1.0",
            "userAgent": "websteer-sim",
        }

    def _target_get_targets(self, params, events):
        infos = []
        for tab in self.tabs.values():
            infos.append(
                {
                    "targetId": tab.target_id,
                    "type": "page",
                    "title": tab.title,
                    "url": tab.url,
                    "attached": bool(self._sessions_of(tab)),
                }
            )
        return {"targetInfos": infos}

    def _target_create_target(self, params, events):
        tab = self._new_tab()
        url = params.get("url") or "about:blank"
        tab.load(url)
        return {"targetId": tab.target_id}

    def _target_attach(self, params, events):
        target_id = params.get("targetId")
        tab = self.tabs.get(target_id)
        if tab is None:
            raise SimCommandError(f"No target with given id found: {target_id}")
        if not params.get("flatten"):
            raise SimCommandError("only flat session mode is supported")
        session_id = f"session-{next(self._session_counter)}"
        self.sessions[session_id] = tab
        events.append(
            {
                "method": "Target.attachedToTarget",
                "params": {
                    "sessionId": session_id,
                    "targetInfo": {
                        "targetId": tab.target_id,
                        "type": "page",
                        "title": tab.title,
                        "url": tab.url,
                        "attached": True,
                    },
                    "waitingForDebugger": False,
                },
            }
        )
        return {"sessionId": session_id}

    # -- page scope -------------------------------------------------------

    def _lifecycle_events(self, tab: SimTab, loader_id: str, events: list[dict]) -> None:
        if not tab.lifecycle_enabled:
            return
        for sid in self._sessions_of(tab):
            for name in ("load", "networkIdle"):
                events.append(
                    {
                        "method": "Page.lifecycleEvent",
                        "params": {
                            "frameId": tab.frame_id,
                            "loaderId": loader_id,
                            "name": name,
                            "timestamp": 0,
                        },
                        "sessionId": sid,
                    }
                )

    def _page_set_lifecycle(self, tab, params, events):
        tab.lifecycle_enabled = bool(params.get("enabled"))
        return {}

    def _page_navigate(self, tab, params, events):
        url = params.get("url") or ""
        loader_id = tab.load(url)
        self._lifecycle_events(tab, loader_id, events)
        return {"frameId": tab.frame_id, "loaderId": loader_id}

    def _page_get_history(self, tab, params, events):
        entries = [
            {
                "id": entry.entry_id,
                "url": entry.url,
                "userTypedURL": entry.url,
                "title": entry.title,
                "transitionType": "typed",
            }
            for entry in tab.history
        ]
        return {"currentIndex": tab.index, "entries": entries}

    def _page_history_entry(self, tab, params, events):
        tab.activate_entry(int(params.get("entryId", -1)))
        self._lifecycle_events(tab, f"loader-history-{tab.index}", events)
        return {}

    def _page_screenshot(self, tab, params, events):
        data = render_png(tab.doc, tab.viewport, tab.scroll_y)
        return {"data": base64.b64encode(data).decode("ascii")}

    def _emulation_metrics(self, tab, params, events):
        width = int(params.get("width") or tab.viewport[0])
        height = int(params.get("height") or tab.viewport[1])
        tab.viewport = (width, height)
        return {}

    # -- dom scope --------------------------------------------------------

    def _dom_payload(self, tab: SimTab, node: SimNode) -> dict:
        node_id = tab.register(node)
        if node.is_text:
            return {
                "nodeId": node_id,
                "backendNodeId": node_id,
                "nodeType": 3,
                "nodeName": "#text",
                "localName": "",
                "nodeValue": node.text,
            }
        flat_attrs: list[str] = []
        for key, value in node.attrs.items():
            flat_attrs.extend([key, value])
        children = [
            self._dom_payload(tab, child)
            for child in node.children
            if child.is_element or child.text.strip()
        ]
        if node.tag == "#document":
            node_type, node_name, local = 9, "#document", ""
        else:
            node_type, node_name, local = 1, node.tag.upper(), node.tag
        return {
            "nodeId": node_id,
            "backendNodeId": node_id,
            "nodeType": node_type,
            "nodeName": node_name,
            "localName": local,
            "nodeValue": "",
            "attributes": flat_attrs,
            "childNodeCount": len(children),
            "children": children,
        }

    def _dom_get_document(self, tab, params, events):
        return {"root": self._dom_payload(tab, tab.doc.root)}

    def _query_root(self, tab: SimTab, params) -> SimNode:
        node = tab.node_by_id(int(params.get("nodeId", 0)))
        return node

    def _dom_query_selector(self, tab, params, events):
        root = self._query_root(tab, params)
        selector = params.get("selector") or ""
        try:
            found = query_all(root, selector)
        except CssParseError as exc:
            raise SimCommandError(f"DOM Error while querying: {exc}")
        return {"nodeId": tab.register(found[0]) if found else 0}

    def _dom_query_selector_all(self, tab, params, events):
        root = self._query_root(tab, params)
        selector = params.get("selector") or ""
        try:
            found = query_all(root, selector)
        except CssParseError as exc:
            raise SimCommandError(f"DOM Error while querying: {exc}")
        return {"nodeIds": [tab.register(n) for n in found]}

    def _dom_get_outer_html(self, tab, params, events):
        node = tab.node_by_id(int(params.get("nodeId", 0)))
        return {"outerHTML": serialize(node)}

    def _dom_get_attributes(self, tab, params, events):
        node = tab.node_by_id(int(params.get("nodeId", 0)))
        flat: list[str] = []
        for key, value in node.attrs.items():
            flat.extend([key, value])
        return {"attributes": flat}

    def _dom_get_box_model(self, tab, params, events):
        node = tab.node_by_id(int(params.get("nodeId", 0)))
        box = tab.layout().get(id(node))
        if box is None or box.area <= 0:
            raise SimCommandError("Could not compute box model.")
        x1, y1 = box.x, box.y
        x2, y2 = box.x + box.width, box.y + box.height
        quad = [x1, y1, x2, y1, x2, y2, x1, y2]
        return {
            "model": {
                "content": quad,
                "padding": quad,
                "border": quad,
                "margin": quad,
                "width": int(box.width),
                "height": int(box.height),
            }
        }

    def _dom_focus(self, tab, params, events):
        node = tab.node_by_id(int(params.get("nodeId", 0)))
        if node.tag not in ("input", "textarea", "select", "button", "a"):
            raise SimCommandError("Element is not focusable")
        tab.focused = node
        return {}

    def _dom_set_files(self, tab, params, events):
        node = tab.node_by_id(int(params.get("nodeId", 0)))
        if node.tag != "input" or (node.attr("type") or "").lower() != "file":
            raise SimCommandError("Node is not a file input element")
        files = [str(f) for f in params.get("files") or []]
        node.set_attr("data-sim-files", json.dumps(files))
        if files:
            base = files[0].replace("\\", "/").rsplit("/", 1)[-1]
            node.set_attr("value", f"C:\\fakepath\\{base}")
        return {}

    def _input_insert_text(self, tab, params, events):
        node = tab.focused
        if node is None or node.tag not in ("input", "textarea"):
            raise SimCommandError("Cannot insert text: no editable element focused")
        node.set_attr("value", (node.attr("value") or "") + str(params.get("text") or ""))
        return {}

    def _ax_full_tree(self, tab, params, events):
        return {"nodes": ax.build_ax_nodes(tab.doc, tab.register)}

    # -- page ops over Runtime.evaluate ------------------------------------

    def _runtime_evaluate(self, tab, params, events):
        expression = params.get("expression") or ""
        if PAGE_OP_MARKER not in expression:
            return {
                "result": {"type": "object", "subtype": "error", "description": "EvalError"},
                "exceptionDetails": {
                    "text": "simulator only evaluates websteer page-op scripts"
                },
            }
        match = _ARGS_RE.search(expression)
        if match is None:
            raise SimCommandError("page-op script carries no args line")
        try:
            args = json.loads(match.group(1))
        except json.JSONDecodeError as exc:
            raise SimCommandError(f"page-op args are not valid JSON: {exc}")
        op = args.get("op")
        ops = {
            "click": self._op_click,
            "set_value": self._op_set_value,
            "select_option": self._op_select_option,
            "read_value": self._op_read_value,
            "scroll": self._op_scroll,
            "som_marks": self._op_som_marks,
            "note": self._op_note,
            "clear_overlays": self._op_clear_overlays,
            "page_text": self._op_page_text,
        }
        handler = ops.get(op)
        if handler is None:
            raise SimCommandError(f"unknown page-op {op!r}")
        value = handler(tab, args, events)
        return {"result": {"type": "object", "value": value}}

    def _op_target(self, tab: SimTab, args: dict) -> SimNode | dict:
        selector = args.get("selector") or ""
        try:
            found = query_all(tab.doc.root, selector)
        except CssParseError as exc:
            return {"ok": False, "reason": f"bad selector: {exc}"}
        if len(found) != 1:
            return {"ok": False, "reason": f"selector matched {len(found)} elements"}
        return found[0]

    def _op_click(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        node = self._op_target(tab, args)
        if isinstance(node, dict):
            return node
        for el in [node, *node.ancestors()]:
            if not el.is_element:
                continue
            if el.tag == "a" and el.has_attr("href"):
                target = urljoin(tab.url, el.attr("href") or "")
                loader_id = tab.load(target)
                self._lifecycle_events(tab, loader_id, events)
                return {"ok": True, "navigated": True}
            if self._is_submit_control(el):
                form = self._enclosing_form(el)
                if form is not None:
                    target = self._submit_form(tab, form)
                    loader_id = tab.load(target)
                    self._lifecycle_events(tab, loader_id, events)
                    return {"ok": True, "navigated": True}
        if node.tag == "input" and (node.attr("type") or "").lower() in ("checkbox", "radio"):
            if node.has_attr("checked"):
                node.attrs.pop("checked", None)
            else:
                node.set_attr("checked", "checked")
        return {"ok": True, "navigated": False}

    @staticmethod
    def _is_submit_control(el: SimNode) -> bool:
        if el.tag == "button":
            return (el.attr("type") or "submit").lower() == "submit"
        if el.tag == "input":
            return (el.attr("type") or "").lower() == "submit"
        return False

    @staticmethod
    def _enclosing_form(el: SimNode) -> SimNode | None:
        for anc in [el, *el.ancestors()]:
            if anc.is_element and anc.tag == "form":
                return anc
        return None

    def _submit_form(self, tab: SimTab, form: SimNode) -> str:
        fields: list[tuple[str, str]] = []
        for el in form.iter_elements():
            name = el.attr("name")
            if not name or el.has_attr("disabled"):
                continue
            if el.tag == "input":
                kind = (el.attr("type") or "text").lower()
                if kind in SUBMITTABLE_INPUT_TYPES:
                    fields.append((name, el.attr("value") or ""))
                elif kind in ("checkbox", "radio") and el.has_attr("checked"):
                    fields.append((name, el.attr("value") or "on"))
            elif el.tag == "select":
                fields.append((name, self._select_value(el)))
            elif el.tag == "textarea":
                fields.append((name, el.attr("value") or el.own_text()))
        action = form.attr("action") or tab.url
        base = urljoin(tab.url, action)
        query = urlencode(fields)
        if query:
            separator = "&" if "?" in base else "?"
            return f"{base}{separator}{query}"
        return base

    @staticmethod
    def _select_value(select: SimNode) -> str:
        options = [el for el in select.iter_elements() if el.tag == "option"]
        chosen = next((o for o in options if o.has_attr("selected")), None)
        if chosen is None:
            chosen = options[0] if options else None
        if chosen is None:
            return ""
        value = chosen.attr("value")
        return value if value is not None else chosen.own_text()

    def _op_set_value(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        node = self._op_target(tab, args)
        if isinstance(node, dict):
            return node
        value = str(args.get("value", ""))
        if node.tag == "input":
            node.set_attr("value", value)
        elif node.tag == "textarea":
            node.set_attr("value", value)
            for child in list(node.children):
                child.detach()
            node.append(SimNode("#text", text=value))
        elif node.tag == "select":
            return self._apply_select(node, value)
        else:
            return {"ok": False, "reason": f"cannot set value on <{node.tag}>"}
        return {"ok": True}

    def _op_select_option(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        node = self._op_target(tab, args)
        if isinstance(node, dict):
            return node
        if node.tag != "select":
            return {"ok": False, "reason": f"select_option on <{node.tag}>"}
        return self._apply_select(node, str(args.get("value", "")))

    def _apply_select(self, select: SimNode, wanted: str) -> dict:
        options = [el for el in select.iter_elements() if el.tag == "option"]
        chosen = None
        for option in options:
            if option.attr("value") == wanted or option.own_text() == wanted:
                chosen = option
                break
        if chosen is None:
            return {"ok": False, "reason": f"no option matching {wanted!r}"}
        for option in options:
            option.attrs.pop("selected", None)
        chosen.set_attr("selected", "selected")
        value = chosen.attr("value")
        select.set_attr("value", value if value is not None else chosen.own_text())
        return {"ok": True}

    def _op_read_value(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        node = self._op_target(tab, args)
        if isinstance(node, dict):
            return node
        if node.tag == "select":
            return {"ok": True, "value": self._select_value(node)}
        if node.tag in ("input", "textarea"):
            return {"ok": True, "value": node.attr("value") or ""}
        return {"ok": True, "value": node.own_text()}

    def _op_scroll(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        dy = int(args.get("dy", 0))
        tab.scroll_y = max(0, tab.scroll_y + dy)
        return {"ok": True, "y": tab.scroll_y}

    def _overlay_container(self, tab: SimTab, create: bool) -> SimNode | None:
        for node in tab.doc.iter_elements():
            if node.has_attr(OVERLAY_CONTAINER_ATTR):
                return node
        if not create:
            return None
        container = SimNode("div", {OVERLAY_CONTAINER_ATTR: "1", "id": "__websteer_overlay__"})
        tab.doc.body.append(container)
        return container

    def _op_som_marks(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        container = self._overlay_container(tab, create=True)
        count = 0
        for mark in args.get("marks") or []:
            span = SimNode(
                "span",
                {
                    MARK_ATTR: str(mark.get("mark")),
                    "data-x": str(mark.get("x", 0)),
                    "data-y": str(mark.get("y", 0)),
                    "data-w": str(mark.get("w", 0)),
                    "data-h": str(mark.get("h", 0)),
                },
            )
            span.append(SimNode("#text", text=str(mark.get("mark"))))
            container.append(span)
            count += 1
        return {"ok": True, "count": count}

    def _op_note(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        container = self._overlay_container(tab, create=True)
        note = SimNode(
            "div",
            {
                NOTE_ATTR: "1",
                "data-x": str(args.get("x", 8)),
                "data-y": str(args.get("y", 8)),
                "data-w": str(args.get("w", 280)),
                "data-h": str(args.get("h", 20)),
            },
        )
        note.append(SimNode("#text", text=str(args.get("note", ""))))
        container.append(note)
        return {"ok": True}

    def _op_clear_overlays(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        container = self._overlay_container(tab, create=False)
        if container is None:
            return {"ok": True, "removed": False}
        container.detach()
        return {"ok": True, "removed": True}

    def _op_page_text(self, tab: SimTab, args: dict, events: list[dict]) -> dict:
        limit = int(args.get("max_chars", 2000))

        # overlay badges and notes are driver scaffolding, not page content
        def collect(node: SimNode, parts: list[str]) -> None:
            if node.is_text:
                parts.append(node.text)
                return
            if node.tag in ("script", "style") or node.has_attr(OVERLAY_CONTAINER_ATTR):
                return
            for child in node.children:
                collect(child, parts)

        try:
            parts: list[str] = []
            collect(tab.doc.body, parts)
            text = " ".join("".join(parts).split())[:limit]
        except ValueError:
            text = ""
        return {"ok": True, "title": tab.title, "text": text}


async def serve_sim(site: StaticSite, host: str = "127.0.0.1", port: int = 0) -> SimBrowser:
    """Start a simulator endpoint; returns the browser with .endpoint set."""
    browser = SimBrowser(site)
    await browser.start(host, port)
    return browser
