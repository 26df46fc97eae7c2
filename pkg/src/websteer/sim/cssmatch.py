"""CSS selector matching for the simulator DOM.

Covers the subset the driver and selector synthesis emit: type and
universal selectors, #id, .class, [attr], [attr="value"], :nth-of-type(n),
descendant and child combinators, and comma-separated groups. Anything
else raises CssParseError so drivers fail loudly instead of silently
matching nothing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .dom import SimNode


class CssParseError(ValueError):
    """Selector text is outside the supported grammar."""


_IDENT = r"-?[A-Za-z_][A-Za-z0-9_-]*"

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<child>>)
  | (?P<comma>,)
  | (?P<hash>\#(?P<hash_name>{ident}))
  | (?P<class>\.(?P<class_name>{ident}))
  | (?P<attr>\[\s*(?P<attr_name>{ident})\s*(?:=\s*(?:"(?P<attr_dq>(?:[^"\\]|\\.)*)"|'(?P<attr_sq>(?:[^'\\]|\\.)*)'|(?P<attr_bare>{ident}))\s*)?\])
  | (?P<nth>:nth-of-type\(\s*(?P<nth_n>\d+)\s*\))
  | (?P<type>{ident}|\*)
    """.format(ident=_IDENT),
    re.VERBOSE,
)


@dataclass
class Compound:
    tag: str | None = None  # None means no type constraint, "*" explicit universal
    dom_id: str | None = None
    classes: list[str] = field(default_factory=list)
    attrs: list[tuple[str, str | None]] = field(default_factory=list)
    nth_of_type: int | None = None

    def is_empty(self) -> bool:
        return (
            self.tag is None
            and self.dom_id is None
            and not self.classes
            and not self.attrs
            and self.nth_of_type is None
        )


@dataclass
class Complex:
    # parts[i] pairs the compound with the combinator joining it to parts[i-1];
    # the first combinator is always None.
    parts: list[tuple[str | None, Compound]]


def parse_selector(text: str) -> list[Complex]:
    if not text or not text.strip():
        raise CssParseError("empty selector")
    groups: list[Complex] = []
    parts: list[tuple[str | None, Compound]] = []
    current: Compound | None = None
    pending: str | None = None  # combinator awaiting its right-hand compound
    saw_ws = False

    def flush_compound() -> None:
        nonlocal current, pending, saw_ws
        if current is None:
            return
        parts.append((pending if parts else None, current))
        current = None
        pending = None
        saw_ws = False

    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise CssParseError(f"unsupported selector syntax at {text[pos:]!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            saw_ws = True
            continue
        if kind == "comma":
            flush_compound()
            if not parts:
                raise CssParseError("empty selector in group")
            groups.append(Complex(parts))
            parts = []
            continue
        if kind == "child":
            flush_compound()
            if not parts:
                raise CssParseError("child combinator with no left side")
            pending = ">"
            saw_ws = False
            continue

        # A simple-selector token. Only whitespace splits compounds; a
        # pending child combinator stays attached to the one being built.
        if current is not None and saw_ws:
            flush_compound()
        if current is None:
            if parts and pending is None:
                pending = " "
            current = Compound()
        if kind == "type":
            if current.tag is not None or not current.is_empty():
                raise CssParseError(f"type selector must lead its compound in {text!r}")
            current.tag = m.group("type").lower()
        elif kind == "hash":
            current.dom_id = m.group("hash_name")
        elif kind == "class":
            current.classes.append(m.group("class_name"))
        elif kind == "attr":
            value = m.group("attr_dq")
            if value is None:
                value = m.group("attr_sq")
            if value is not None:
                value = re.sub(r"\\(.)", r"\1", value)  # CSS string escapes
            else:
                value = m.group("attr_bare")
            current.attrs.append((m.group("attr_name").lower(), value))
        elif kind == "nth":
            current.nth_of_type = int(m.group("nth_n"))
        saw_ws = False

    flush_compound()
    if parts:
        groups.append(Complex(parts))
    if not groups:
        raise CssParseError("empty selector")
    for g in groups:
        if g.parts and g.parts[0][0] is not None:
            raise CssParseError("selector begins with a combinator")
    return groups


def _compound_matches(node: SimNode, c: Compound) -> bool:
    if not node.is_element:
        return False
    if c.tag is not None and c.tag != "*" and node.tag != c.tag:
        return False
    if c.dom_id is not None and node.attrs.get("id") != c.dom_id:
        return False
    for cls in c.classes:
        if cls not in node.classes():
            return False
    for name, value in c.attrs:
        if name not in node.attrs:
            return False
        if value is not None and node.attrs[name] != value:
            return False
    if c.nth_of_type is not None and node.same_tag_index() != c.nth_of_type:
        return False
    return True


def _lhs_matches(node: SimNode, parts: list[tuple[str | None, Compound]], idx: int) -> bool:
    """node matched parts[idx]; check the chain to its left."""
    if idx == 0:
        return True
    combinator = parts[idx][0]
    target = parts[idx - 1][1]
    if combinator == ">":
        p = node.parent
        return (
            p is not None
            and p.is_element
            and _compound_matches(p, target)
            and _lhs_matches(p, parts, idx - 1)
        )
    p = node.parent
    while p is not None:
        if p.is_element and _compound_matches(p, target) and _lhs_matches(p, parts, idx - 1):
            return True
        p = p.parent
    return False


def matches(node: SimNode, selector: str | list[Complex]) -> bool:
    groups = parse_selector(selector) if isinstance(selector, str) else selector
    for g in groups:
        last = len(g.parts) - 1
        if _compound_matches(node, g.parts[last][1]) and _lhs_matches(node, g.parts, last):
            return True
    return False


def query_all(root: SimNode, selector: str) -> list[SimNode]:
    """All element descendants of root matching selector, document order."""
    groups = parse_selector(selector)
    out: list[SimNode] = []
    for node in root.iter_elements():
        if node is root:
            continue
        if matches(node, groups):
            out.append(node)
    return out
