"""Uniform access to chat-completion models, with and without tool calling.

Two providers ship in the box: an HTTP provider speaking the widely adopted
chat-completions JSON shape (any endpoint speaking that shape works), and a
deterministic scripted provider for offline tests and demos. Every call,
live or scripted, appends exactly one request/response pair to the gateway's
transcript.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

import httpx

from .model import ImageHandle


class GatewayError(Exception):
    """Base class for completion-gateway failures."""


class TransportError(GatewayError):
    """The provider endpoint could not be reached."""


class ProviderStatusError(GatewayError):
    """The provider answered with an error status or malformed body."""


class EmptyCompletionError(GatewayError):
    """The provider returned no usable completion text."""


class ToolNameError(GatewayError):
    """The model invoked a tool that is not in the supplied schema set."""


class ToolArgumentError(GatewayError):
    """Tool-call arguments failed to parse or validate against the schema."""


class ScriptExhaustedError(GatewayError):
    """The scripted provider ran out of canned replies."""


class ChatRole(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"
    TOOL = "tool"


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ChatMessage:
    role: ChatRole
    content: str = ""
    tool_call: ToolCall | None = None
    tool_call_id: str | None = None
    images: tuple[ImageHandle, ...] = ()

    def __post_init__(self) -> None:
        if self.role is ChatRole.TOOL and not self.tool_call_id:
            raise ValueError("tool messages require a tool_call_id")
        if self.tool_call is not None and self.role is not ChatRole.ASSISTANT:
            raise ValueError("only assistant messages may carry a tool_call")


def system(content: str) -> ChatMessage:
    return ChatMessage(ChatRole.SYSTEM, content)


def user(content: str, images: Iterable[ImageHandle] = ()) -> ChatMessage:
    return ChatMessage(ChatRole.USER, content, images=tuple(images))


def assistant(content: str, tool_call: ToolCall | None = None) -> ChatMessage:
    return ChatMessage(ChatRole.ASSISTANT, content, tool_call=tool_call)


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str = "string"
    description: str = ""
    required: bool = False


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameters: tuple[ToolParam, ...] = ()

    def to_json_schema(self) -> dict[str, Any]:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": {
                        p.name: {"type": p.type, "description": p.description}
                        for p in self.parameters
                    },
                    "required": [p.name for p in self.parameters if p.required],
                },
            },
        }


@dataclass(frozen=True)
class ModelConfig:
    api_base: str = "http://localhost:8000/v1"
    model_name: str = "scripted"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    api_key: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


def config_from_env() -> ModelConfig:
    """Build a model config from LLM_API_BASE / LLM_API_KEY / LLM_MODEL."""
    return ModelConfig(
        api_base=os.environ.get("LLM_API_BASE", "http://localhost:8000/v1"),
        model_name=os.environ.get("LLM_MODEL", "gpt-4o"),
        api_key=os.environ.get("LLM_API_KEY", ""),
    )


@dataclass(frozen=True)
class ProviderReply:
    """Raw provider output: completion text and/or tool invocations."""

    text: str = ""
    tool_calls: tuple[ToolCall, ...] = ()


@dataclass(frozen=True)
class TranscriptEntry:
    tag: str
    prompt_text: str
    reply_text: str


class Transcript:
    """Session-scoped request/response log; one entry per gateway call."""

    def __init__(self) -> None:
        self.entries: list[TranscriptEntry] = []

    def record(self, tag: str, messages: Sequence[ChatMessage], reply: ProviderReply) -> None:
        prompt = "\n".join(f"[{m.role.value}] {m.content}" for m in messages)
        if reply.tool_calls:
            rendered = "; ".join(
                f"{c.name}({json.dumps(c.arguments, sort_keys=True)})" for c in reply.tool_calls
            )
        else:
            rendered = reply.text
        self.entries.append(TranscriptEntry(tag, prompt, rendered))

    def prompts_tagged(self, tag: str) -> list[str]:
        return [e.prompt_text for e in self.entries if e.tag == tag]


class ScriptedProvider:
    """Returns canned replies in order, independent of prompt content."""

    def __init__(self, script: Sequence[ProviderReply | str | ToolCall]) -> None:
        if not script:
            raise ValueError("scripted provider requires a non-empty script")
        self._script = [self._coerce(entry) for entry in script]
        self.call_count = 0

    @staticmethod
    def _coerce(entry: ProviderReply | str | ToolCall) -> ProviderReply:
        if isinstance(entry, ProviderReply):
            return entry
        if isinstance(entry, ToolCall):
            return ProviderReply(tool_calls=(entry,))
        return ProviderReply(text=entry)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        """Load a script from a JSON-lines file.

        Each line is an object with either a "text" field or a "tool_calls"
        list of {"name", "arguments"} objects. Blank lines are skipped.
        """
        replies: list[ProviderReply] = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            calls = tuple(
                ToolCall(c["name"], {k: str(v) for k, v in c.get("arguments", {}).items()})
                for c in obj.get("tool_calls", [])
            )
            replies.append(ProviderReply(text=obj.get("text", ""), tool_calls=calls))
        return cls(replies)

    async def chat(
        self,
        messages: Sequence[ChatMessage],
        tools: Sequence[ToolSchema] | None,
        cfg: ModelConfig,
    ) -> ProviderReply:
        if self.call_count >= len(self._script):
            raise ScriptExhaustedError(
                f"script exhausted after {len(self._script)} replies"
            )
        reply = self._script[self.call_count]
        self.call_count += 1
        return reply


class HttpChatProvider:
    """Speaks the chat-completions HTTP JSON shape (messages/tools/tool_calls)."""

    def __init__(self, client: httpx.AsyncClient | None = None) -> None:
        self._client = client

    @staticmethod
    def _message_payload(m: ChatMessage) -> dict[str, Any]:
        payload: dict[str, Any] = {"role": m.role.value}
        if m.images:
            parts: list[dict[str, Any]] = [{"type": "text", "text": m.content}]
            for img in m.images:
                data_url = f"data:{img.media_type};base64,{base64.b64encode(img.data).decode()}"
                parts.append({"type": "image_url", "image_url": {"url": data_url}})
            payload["content"] = parts
        else:
            payload["content"] = m.content
        if m.tool_call is not None:
            payload["tool_calls"] = [
                {
                    "id": m.tool_call_id or "call_0",
                    "type": "function",
                    "function": {
                        "name": m.tool_call.name,
                        "arguments": json.dumps(m.tool_call.arguments),
                    },
                }
            ]
        if m.role is ChatRole.TOOL:
            payload["tool_call_id"] = m.tool_call_id
        return payload

    async def chat(
        self,
        messages: Sequence[ChatMessage],
        tools: Sequence[ToolSchema] | None,
        cfg: ModelConfig,
    ) -> ProviderReply:
        body: dict[str, Any] = {
            "model": cfg.model_name,
            "messages": [self._message_payload(m) for m in messages],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
        }
        if tools:
            body["tools"] = [t.to_json_schema() for t in tools]
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        url = cfg.api_base.rstrip("/") + "/chat/completions"
        client = self._client or httpx.AsyncClient(timeout=120.0)
        try:
            try:
                response = await client.post(url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                raise TransportError(f"completion endpoint unreachable: {exc}") from exc
        finally:
            if self._client is None:
                await client.aclose()
        if response.status_code >= 400:
            raise ProviderStatusError(
                f"provider returned {response.status_code}: {response.text[:500]}"
            )
        try:
            message = response.json()["choices"][0]["message"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderStatusError(f"malformed completion body: {exc}") from exc
        calls: list[ToolCall] = []
        for raw in message.get("tool_calls") or []:
            fn = raw.get("function", {})
            try:
                arguments = json.loads(fn.get("arguments") or "{}")
            except json.JSONDecodeError as exc:
                raise ToolArgumentError(f"tool arguments are not valid JSON: {exc}") from exc
            if not isinstance(arguments, dict):
                raise ToolArgumentError("tool arguments must be a JSON object")
            calls.append(ToolCall(fn.get("name", ""), {k: str(v) for k, v in arguments.items()}))
        return ProviderReply(text=message.get("content") or "", tool_calls=tuple(calls))


def validate_tool_call(call: ToolCall, tools: Sequence[ToolSchema]) -> ToolCall:
    """Check a tool call against the schema set; returns the normalized call."""
    schema = next((t for t in tools if t.name == call.name), None)
    if schema is None:
        known = ", ".join(t.name for t in tools)
        raise ToolNameError(f"unknown tool {call.name!r} (expected one of: {known})")
    params = {p.name: p for p in schema.parameters}
    for key in call.arguments:
        if key not in params:
            raise ToolArgumentError(f"tool {call.name!r} got unexpected argument {key!r}")
    for p in schema.parameters:
        if p.required and p.name not in call.arguments:
            raise ToolArgumentError(f"tool {call.name!r} missing required argument {p.name!r}")
    return ToolCall(call.name, {k: str(v) for k, v in call.arguments.items()})


class LlmGateway:
    """Provider wrapper that validates tool traffic and keeps the transcript."""

    def __init__(self, provider: Any, transcript: Transcript | None = None) -> None:
        self.provider = provider
        self.transcript = transcript if transcript is not None else Transcript()

    async def complete(
        self,
        messages: Sequence[ChatMessage],
        cfg: ModelConfig,
        tag: str = "untagged",
    ) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        if messages[0].role not in (ChatRole.SYSTEM, ChatRole.USER):
            raise ValueError("first message must be system or user")
        reply = await self.provider.chat(messages, None, cfg)
        self.transcript.record(tag, messages, reply)
        if not reply.text.strip():
            raise EmptyCompletionError("provider returned an empty completion")
        return reply.text

    async def complete_with_tools(
        self,
        messages: Sequence[ChatMessage],
        tools: Sequence[ToolSchema],
        cfg: ModelConfig,
        tag: str = "untagged",
    ) -> str | list[ToolCall]:
        if not tools:
            raise ValueError("tools must be non-empty")
        names = [t.name for t in tools]
        if len(set(names)) != len(names):
            raise ValueError("tool names must be unique within a request")
        reply = await self.provider.chat(messages, tools, cfg)
        self.transcript.record(tag, messages, reply)
        if not reply.tool_calls:
            if not reply.text.strip():
                raise EmptyCompletionError("provider returned neither text nor tool calls")
            return reply.text
        return [validate_tool_call(c, tools) for c in reply.tool_calls]
