"""Accessibility tree derivation for the simulator.

Maps markup to the role/name pairs Chromium's Accessibility domain would
report for the same elements, for the tag subset the fixtures use.
"""

from __future__ import annotations

from .dom import SimDocument, SimNode, is_rendered

_TAG_ROLES = {
    "button": "button",
    "select": "combobox",
    "textarea": "textbox",
    "form": "form",
    "nav": "navigation",
    "main": "main",
    "header": "banner",
    "footer": "contentinfo",
    "ul": "list",
    "ol": "list",
    "li": "listitem",
    "table": "table",
    "img": "image",
    "p": "paragraph",
    "label": "LabelText",
    "center": "generic",
    "div": "generic",
    "span": "generic",
    "section": "Section",
    "article": "article",
    "option": "option",
}

_INPUT_ROLES = {
    "submit": "button",
    "button": "button",
    "reset": "button",
    "checkbox": "checkbox",
    "radio": "radio",
    "file": "button",
    "range": "slider",
    "number": "spinbutton",
}


def role_of(node: SimNode) -> str:
    explicit = node.attr("role")
    if explicit:
        return explicit
    tag = node.tag
    if tag == "a":
        return "link" if node.has_attr("href") else "generic"
    if tag == "input":
        kind = (node.attr("type") or "text").lower()
        return _INPUT_ROLES.get(kind, "textbox")
    if len(tag) == 2 and tag[0] == "h" and tag[1].isdigit():
        return "heading"
    return _TAG_ROLES.get(tag, "generic")


def accessible_name(node: SimNode, doc: SimDocument) -> str:
    aria = node.attr("aria-label")
    if aria:
        return aria
    labelled_by = node.attr("aria-labelledby")
    if labelled_by:
        target = doc.find_by_id(labelled_by.split()[0])
        if target is not None:
            return target.own_text(80)
    node_id = node.attr("id")
    if node_id:
        for el in doc.iter_elements():
            if el.tag == "label" and el.attr("for") == node_id:
                return el.own_text(80)
    if node.tag == "input":
        value = node.attr("value")
        kind = (node.attr("type") or "text").lower()
        if value and kind in ("submit", "button", "reset"):
            return value
        placeholder = node.attr("placeholder")
        if placeholder:
            return placeholder
        return ""
    if node.tag == "img":
        return node.attr("alt") or ""
    if node.tag in ("select", "textarea"):
        return node.attr("placeholder") or ""
    return node.own_text(80)


def build_ax_nodes(doc: SimDocument, backend_id_of) -> list[dict]:
    """Flat node list in the shape Accessibility.getFullAXTree returns.

    backend_id_of maps a SimNode to its DOM backend node id.
    """
    nodes: list[dict] = []
    counter = [0]

    def next_id() -> str:
        counter[0] += 1
        return str(counter[0])

    def visit(node: SimNode) -> str | None:
        if not is_rendered(node):
            return None
        ax_id = next_id()
        child_ids = [c for c in (visit(ch) for ch in node.element_children()) if c]
        nodes.append(
            {
                "nodeId": ax_id,
                "ignored": False,
                "role": {"type": "role", "value": role_of(node)},
                "name": {"type": "computedString", "value": accessible_name(node, doc)},
                "backendDOMNodeId": backend_id_of(node),
                "childIds": child_ids,
            }
        )
        return ax_id

    root_id = next_id()
    try:
        body = doc.body
    except ValueError:
        body = None
    child_ids = []
    if body is not None:
        child_ids = [c for c in (visit(ch) for ch in body.element_children()) if c]
    nodes.append(
        {
            "nodeId": root_id,
            "ignored": False,
            "role": {"type": "role", "value": "RootWebArea"},
            "name": {"type": "computedString", "value": doc.title},
            "backendDOMNodeId": backend_id_of(doc.root),
            "childIds": child_ids,
        }
    )
    # Parent-before-child ordering with the root first reads better in logs.
    nodes.sort(key=lambda n: int(n["nodeId"]))
    return nodes
