"""Document model for the simulator.

Parses HTML with the stdlib parser into a mutable element tree that
serializes byte-stably, so tests can compare snapshots before and after
overlay injection and cleanup.
"""

from __future__ import annotations

import html as html_mod
import logging
from dataclasses import dataclass, field
from html.parser import HTMLParser

logger = logging.getLogger(__name__)

# Elements that never take a closing tag.
VOID_ELEMENTS = frozenset(
    {
        "area",
        "base",
        "br",
        "col",
        "embed",
        "hr",
        "img",
        "input",
        "link",
        "meta",
        "param",
        "source",
        "track",
        "wbr",
    }
)

TEXT_TAG = "#text"


@dataclass(eq=False)
class SimNode:
    """One node in the simulated document: an element or a text run."""

    tag: str
    attrs: dict[str, str] = field(default_factory=dict)
    children: list["SimNode"] = field(default_factory=list)
    parent: "SimNode | None" = None
    text: str = ""

    @property
    def is_text(self) -> bool:
        return self.tag == TEXT_TAG

    @property
    def is_element(self) -> bool:
        return self.tag != TEXT_TAG

    def append(self, child: "SimNode") -> None:
        child.parent = self
        self.children.append(child)

    def detach(self) -> None:
        if self.parent is not None:
            self.parent.children.remove(self)
            self.parent = None

    def attr(self, name: str) -> str | None:
        return self.attrs.get(name.lower())

    def set_attr(self, name: str, value: str) -> None:
        self.attrs[name.lower()] = value

    def has_attr(self, name: str) -> bool:
        return name.lower() in self.attrs

    def element_children(self) -> list["SimNode"]:
        return [c for c in self.children if c.is_element]

    def classes(self) -> list[str]:
        return (self.attrs.get("class") or "").split()

    def same_tag_index(self) -> int:
        """1-based position among same-tag element siblings."""
        if self.parent is None:
            return 1
        idx = 0
        for sib in self.parent.children:
            if sib.is_element and sib.tag == self.tag:
                idx += 1
                if sib is self:
                    return idx
        raise ValueError("node not found under its own parent")

    def iter_elements(self):
        """Yield this element and all element descendants in document order."""
        if self.is_element:
            yield self
        for child in self.children:
            yield from child.iter_elements()

    def ancestors(self):
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    def own_text(self, limit: int | None = None) -> str:
        """Whitespace-collapsed text content of the subtree."""
        parts: list[str] = []
        for node in self._walk_text():
            parts.append(node.text)
        collapsed = " ".join("".join(parts).split())
        if limit is not None:
            return collapsed[:limit]
        return collapsed

    def _walk_text(self):
        if self.is_text:
            yield self
            return
        if self.tag in ("script", "style"):
            return
        for child in self.children:
            yield from child._walk_text()


@dataclass
class SimDocument:
    """A parsed page plus the metadata pages carry around in the sim."""

    root: SimNode
    url: str = "about:blank"

    @property
    def body(self) -> SimNode:
        for node in self.root.iter_elements():
            if node.tag == "body":
                return node
        raise ValueError("document has no body element")

    @property
    def head(self) -> SimNode | None:
        for node in self.root.iter_elements():
            if node.tag == "head":
                return node
        return None

    @property
    def title(self) -> str:
        head = self.head
        scope = head if head is not None else self.root
        for node in scope.iter_elements():
            if node.tag == "title":
                return node.own_text()
        return ""

    def iter_elements(self):
        yield from self.root.iter_elements()

    def find_by_id(self, dom_id: str) -> SimNode | None:
        for node in self.iter_elements():
            if node.attrs.get("id") == dom_id:
                return node
        return None


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.top = SimNode("#document")
        self.stack: list[SimNode] = [self.top]

    def handle_starttag(self, tag, attrs):
        node = SimNode(tag.lower(), {k.lower(): (v or "") for k, v in attrs})
        self.stack[-1].append(node)
        if tag.lower() not in VOID_ELEMENTS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        node = SimNode(tag.lower(), {k.lower(): (v or "") for k, v in attrs})
        self.stack[-1].append(node)

    def handle_endtag(self, tag):
        tag = tag.lower()
        if tag in VOID_ELEMENTS:
            return
        # Pop to the nearest matching open tag; tolerate stray closers.
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return

    def handle_data(self, data):
        if not data:
            return
        parent = self.stack[-1]
        parent.append(SimNode(TEXT_TAG, text=data))


def parse_html(markup: str, url: str = "about:blank") -> SimDocument:
    """Parse markup into a document, wrapping fragments in html/body."""
    builder = _TreeBuilder()
    builder.feed(markup)
    builder.close()
    top = builder.top

    html_el = None
    for child in top.element_children():
        if child.tag == "html":
            html_el = child
            break

    if html_el is None:
        html_el = SimNode("html")
        body = SimNode("body")
        html_el.append(body)
        for child in list(top.children):
            child.detach()
            body.append(child)
    else:
        html_el.detach()
        if not any(c.tag == "body" for c in html_el.element_children()):
            body = SimNode("body")
            for child in list(html_el.children):
                if child.is_element and child.tag == "head":
                    continue
                child.detach()
                body.append(child)
            html_el.append(body)

    root = SimNode("#document")
    root.append(html_el)
    return SimDocument(root=root, url=url)


def _escape_text(text: str) -> str:
    return html_mod.escape(text, quote=False)


def _escape_attr(value: str) -> str:
    return value.replace("&", "&amp;").replace('"', "&quot;")


def serialize(node: SimNode) -> str:
    """Render a node back to markup. Stable: same tree, same bytes."""
    if node.is_text:
        return _escape_text(node.text)
    if node.tag == "#document":
        return "".join(serialize(c) for c in node.children)
    attrs = "".join(f' {k}="{_escape_attr(v)}"' for k, v in node.attrs.items())
    open_tag = f"<{node.tag}{attrs}>"
    if node.tag in VOID_ELEMENTS:
        return open_tag
    inner = "".join(serialize(c) for c in node.children)
    return f"{open_tag}{inner}</{node.tag}>"


def is_rendered(node: SimNode) -> bool:
    """Whether layout gives this element a box.

    Head content, hidden inputs, [hidden], and display:none subtrees are
    not rendered. Mirrors the visibility rules a real engine would apply
    to the markup patterns the fixtures use.
    """
    if not node.is_element:
        return False
    for el in [node, *node.ancestors()]:
        if not el.is_element:
            continue
        if el.tag in ("#document", "html"):
            continue
        if el.tag in ("head", "script", "style", "title", "meta", "link", "template"):
            return False
        if el.has_attr("hidden"):
            return False
        style = (el.attr("style") or "").replace(" ", "").lower()
        if "display:none" in style or "visibility:hidden" in style:
            return False
    if node.tag == "input" and (node.attr("type") or "").lower() == "hidden":
        return False
    return True
