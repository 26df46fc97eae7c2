"""Chrome DevTools Protocol wire client: JSON framing over a WebSocket.

One connection carries one strictly increasing command-id stream. A reader
task demultiplexes responses (matched to exactly one outstanding id) from
events (never allowed to satisfy a command future). Target sessions share
the connection; commands for a session are serialized by its lock.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable

from websockets.asyncio.client import connect as ws_connect
from websockets.exceptions import ConnectionClosed, InvalidHandshake, InvalidURI

log = logging.getLogger(__name__)

DEFAULT_COMMAND_TIMEOUT = 30.0
HANDSHAKE_TIMEOUT = 10.0


class CdpError(Exception):
    """Base class for CDP transport and protocol failures."""


class CdpConnectError(CdpError):
    """The WebSocket endpoint could not be reached or refused the upgrade."""


class CdpConnectionLost(CdpError):
    """The connection dropped while commands were outstanding."""


class CdpProtocolError(CdpError):
    """The peer violated the framing contract (unknown or duplicate response id)."""


class CdpCommandError(CdpError):
    """The browser answered a command with an error object."""

    def __init__(self, method: str, code: int, message: str) -> None:
        super().__init__(f"{method} failed ({code}): {message}")
        self.method = method
        self.code = code
        self.message = message


@dataclass(frozen=True)
class CdpCommand:
    id: int
    method: str
    params: dict[str, Any] = field(default_factory=dict)
    session: str | None = None

    def encode(self) -> str:
        obj: dict[str, Any] = {"id": self.id, "method": self.method, "params": self.params}
        if self.session is not None:
            obj["sessionId"] = self.session
        return json.dumps(obj)


@dataclass(frozen=True)
class CdpEvent:
    method: str
    params: dict[str, Any] = field(default_factory=dict)
    session: str | None = None


class CdpConnection:
    """One WebSocket to a browser endpoint, shared by all attached sessions."""

    def __init__(self, ws: Any, url: str) -> None:
        self._ws = ws
        self.url = url
        self._ids = itertools.count(1)
        self._pending: dict[int, asyncio.Future[dict[str, Any]]] = {}
        self._event_waiters: list[tuple[Callable[[CdpEvent], bool], asyncio.Future[CdpEvent]]] = []
        self._listeners: list[Callable[[CdpEvent], None]] = []
        self._closed = False
        self.sent_commands: list[CdpCommand] = []
        self._reader = asyncio.ensure_future(self._read_loop())

    @classmethod
    async def connect(cls, ws_url: str, timeout: float = HANDSHAKE_TIMEOUT) -> "CdpConnection":
        try:
            ws = await asyncio.wait_for(ws_connect(ws_url, max_size=None), timeout)
        except asyncio.TimeoutError as exc:
            raise CdpConnectError(f"handshake with {ws_url} timed out after {timeout}s") from exc
        except (OSError, InvalidHandshake, InvalidURI, ValueError) as exc:
            raise CdpConnectError(f"cannot connect to {ws_url}: {exc}") from exc
        return cls(ws, ws_url)

    async def _read_loop(self) -> None:
        try:
            async for raw in self._ws:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    log.warning("discarding non-JSON frame from %s", self.url)
                    continue
                if "id" in msg:
                    self._dispatch_response(msg)
                else:
                    self._dispatch_event(
                        CdpEvent(msg.get("method", ""), msg.get("params", {}), msg.get("sessionId"))
                    )
        except ConnectionClosed:
            pass
        finally:
            self._fail_pending(CdpConnectionLost(f"connection to {self.url} closed"))

    def _dispatch_response(self, msg: dict[str, Any]) -> None:
        future = self._pending.pop(msg["id"], None)
        if future is None:
            # Matching a response twice (or to no command) is a framing bug.
            log.error("response for unknown command id %s from %s", msg["id"], self.url)
            return
        if not future.done():
            future.set_result(msg)

    def _dispatch_event(self, event: CdpEvent) -> None:
        for listener in list(self._listeners):
            listener(event)
        for pair in list(self._event_waiters):
            predicate, future = pair
            if not future.done() and predicate(event):
                future.set_result(event)
                self._event_waiters.remove(pair)

    def _fail_pending(self, exc: Exception) -> None:
        for future in self._pending.values():
            if not future.done():
                future.set_exception(exc)
        self._pending.clear()
        for _, future in self._event_waiters:
            if not future.done():
                future.set_exception(exc)
        self._event_waiters.clear()

    def add_listener(self, listener: Callable[[CdpEvent], None]) -> None:
        self._listeners.append(listener)

    async def send(
        self,
        method: str,
        params: dict[str, Any] | None = None,
        session: str | None = None,
        timeout: float = DEFAULT_COMMAND_TIMEOUT,
    ) -> dict[str, Any]:
        """Issue one command and await its response payload."""
        if self._closed:
            raise CdpConnectionLost("connection already closed")
        command = CdpCommand(next(self._ids), method, params or {}, session)
        self.sent_commands.append(command)
        future: asyncio.Future[dict[str, Any]] = asyncio.get_running_loop().create_future()
        self._pending[command.id] = future
        try:
            await self._ws.send(command.encode())
        except ConnectionClosed as exc:
            self._pending.pop(command.id, None)
            raise CdpConnectionLost(f"connection closed while sending {method}") from exc
        try:
            msg = await asyncio.wait_for(future, timeout)
        except asyncio.TimeoutError as exc:
            self._pending.pop(command.id, None)
            raise CdpError(f"command {method} timed out after {timeout}s") from exc
        if "error" in msg:
            err = msg["error"]
            raise CdpCommandError(method, err.get("code", -1), err.get("message", "unknown"))
        return msg.get("result", {})

    def wait_event(
        self,
        method: str,
        session: str | None = None,
        predicate: Callable[[CdpEvent], bool] | None = None,
    ) -> asyncio.Future[CdpEvent]:
        """Future resolving on the next matching event (arm before triggering)."""

        def matches(event: CdpEvent) -> bool:
            if event.method != method:
                return False
            if session is not None and event.session != session:
                return False
            return predicate(event) if predicate else True

        future: asyncio.Future[CdpEvent] = asyncio.get_running_loop().create_future()
        self._event_waiters.append((matches, future))
        return future

    async def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            await self._ws.close()
        finally:
            self._reader.cancel()
            try:
                await self._reader
            except (asyncio.CancelledError, Exception):
                pass
            self._fail_pending(CdpConnectionLost("connection closed"))


class CdpTargetSession:
    """A flat-mode target session: one logical, serialized command stream."""

    def __init__(self, connection: CdpConnection, session_id: str | None) -> None:
        self.connection = connection
        self.session_id = session_id
        self._lock = asyncio.Lock()

    async def send(
        self,
        method: str,
        params: dict[str, Any] | None = None,
        timeout: float = DEFAULT_COMMAND_TIMEOUT,
    ) -> dict[str, Any]:
        async with self._lock:
            return await self.connection.send(method, params, self.session_id, timeout)

    def wait_event(
        self, method: str, predicate: Callable[[CdpEvent], bool] | None = None
    ) -> asyncio.Future[CdpEvent]:
        return self.connection.wait_event(method, self.session_id, predicate)
