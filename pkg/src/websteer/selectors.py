"""Unique CSS selector synthesis for live page elements.

Builds the shortest selector that resolves to exactly one element,
preferring stable ids, then semantic attribute qualifiers, then
positional paths. Every candidate is verified against the live document
before being returned; nothing is trusted on shape alone.
"""

from __future__ import annotations

import logging
import re
from typing import Awaitable, Callable, Protocol

logger = logging.getLogger(__name__)

# Attribute qualifiers in priority order. Semantic first, test hooks last.
QUALIFIER_ATTRS = ("name", "aria-label", "role", "type", "data-testid")

_UUID_RE = re.compile(
    r"[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}"
)
_LONG_DIGITS_RE = re.compile(r"\d{4,}")
_ALNUM_RUN_RE = re.compile(r"[A-Za-z0-9]{8,}")
_DYNAMIC_PREFIXES = ("ember-", "radix-", "react-", ":r", "ng-")
_CLEAN_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")


class SelectorSynthesisError(RuntimeError):
    """No verified unique selector could be produced for the element."""


class ElementView(Protocol):
    """What synthesis needs to know about a candidate element."""

    @property
    def ref(self) -> str: ...

    @property
    def tag(self) -> str: ...

    def attr(self, name: str) -> str | None: ...

    def same_tag_index(self) -> int: ...

    @property
    def parent(self) -> "ElementView | None": ...


# query(selector) -> refs of matching elements, document order.
QueryFn = Callable[[str], Awaitable[list[str]]]


def is_stable_identifier(value: str) -> bool:
    """Reject ids and class names that smell machine-generated.

    Long digit runs, UUIDs, framework prefixes, and mixed-case
    base64-looking runs all churn across page loads and deploys.
    """
    if not value:
        return False
    if _LONG_DIGITS_RE.search(value):
        return False
    if _UUID_RE.search(value):
        return False
    lowered = value.lower()
    for prefix in _DYNAMIC_PREFIXES:
        if lowered.startswith(prefix):
            return False
    for run in _ALNUM_RUN_RE.findall(value):
        has_lower = any(c.islower() for c in run)
        has_upper = any(c.isupper() for c in run)
        has_digit = any(c.isdigit() for c in run)
        if has_lower and has_upper and has_digit:
            return False
    return True


def _escape_attr_value(value: str) -> str:
    return value.replace("\\", "\\\\").replace('"', '\\"')


def _id_selector(dom_id: str) -> str:
    if _CLEAN_IDENT_RE.match(dom_id):
        return f"#{dom_id}"
    return f'[id="{_escape_attr_value(dom_id)}"]'


def _stable_classes(el: ElementView) -> list[str]:
    raw = el.attr("class") or ""
    return [
        cls
        for cls in raw.split()
        if is_stable_identifier(cls) and _CLEAN_IDENT_RE.match(cls)
    ]


def _positional(el: ElementView) -> str:
    return f"{el.tag}:nth-of-type({el.same_tag_index()})"


async def _verify(candidate: str, target_ref: str, query: QueryFn) -> bool:
    try:
        refs = await query(candidate)
    except Exception:
        logger.debug("candidate %r failed to query", candidate, exc_info=True)
        return False
    return len(refs) == 1 and refs[0] == target_ref


async def unique_selector(target: ElementView, query: QueryFn) -> str:
    """Synthesize a selector that the live document resolves to target alone.

    Candidate ladder, cheapest first:
      1. stable #id
      2. tag plus attribute qualifiers, added one at a time
      3. leaf :nth-of-type, then positional ancestor prefixes joined
         with the child combinator, nearest ancestor first
      4. stable class names, appended when position cannot disambiguate
      5. full positional path from a stable-id ancestor or the root
    """
    dom_id = target.attr("id")
    if dom_id and is_stable_identifier(dom_id):
        candidate = _id_selector(dom_id)
        if await _verify(candidate, target.ref, query):
            return candidate

    base = target.tag
    if await _verify(base, target.ref, query):
        return base
    for attr in QUALIFIER_ATTRS:
        value = target.attr(attr)
        if value is None or value == "":
            continue
        base += f'[{attr}="{_escape_attr_value(value)}"]'
        if await _verify(base, target.ref, query):
            return base

    leaf = f"{base}:nth-of-type({target.same_tag_index()})"
    if await _verify(leaf, target.ref, query):
        return leaf

    prefix_parts: list[str] = []
    ancestor = target.parent
    while ancestor is not None and ancestor.tag not in ("html", "#document"):
        prefix_parts.insert(0, _positional(ancestor))
        candidate = " > ".join([*prefix_parts, leaf])
        if await _verify(candidate, target.ref, query):
            return candidate
        ancestor = ancestor.parent

    classed = base + "".join(f".{cls}" for cls in _stable_classes(target))
    if classed != base and await _verify(classed, target.ref, query):
        return classed

    # Full positional path, rooted at the nearest stable-id ancestor if any.
    parts: list[str] = [leaf]
    ancestor = target.parent
    root_selector: str | None = None
    while ancestor is not None and ancestor.tag not in ("html", "#document"):
        anc_id = ancestor.attr("id")
        if anc_id and is_stable_identifier(anc_id):
            root_selector = _id_selector(anc_id)
            break
        parts.insert(0, _positional(ancestor))
        ancestor = ancestor.parent
    if root_selector is not None:
        parts.insert(0, root_selector)
    candidate = " > ".join(parts)
    if await _verify(candidate, target.ref, query):
        return candidate

    raise SelectorSynthesisError(
        f"no unique selector found for <{target.tag}> (last tried {candidate!r})"
    )
