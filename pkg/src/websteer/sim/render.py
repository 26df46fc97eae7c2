"""Deterministic layout and screenshot rendering.

Layout is a vertical flow: every rendered element owns one 24px row,
indented by tree depth. Real engines do far more, but box positions only
need to be stable and distinct for visibility checks, mark overlays, and
screenshot comparisons.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

from PIL import Image, ImageDraw

from .dom import SimDocument, SimNode, is_rendered

logger = logging.getLogger(__name__)

ROW_HEIGHT = 24
BOX_HEIGHT = 20
LEFT_MARGIN = 8
INDENT = 12

OVERLAY_CONTAINER_ATTR = "data-websteer-overlay"
MARK_ATTR = "data-websteer-mark"
NOTE_ATTR = "data-websteer-note"


@dataclass(frozen=True)
class LayoutBox:
    x: float
    y: float
    width: float
    height: float

    @property
    def area(self) -> float:
        return self.width * self.height


def _overlay_box(node: SimNode) -> LayoutBox | None:
    try:
        return LayoutBox(
            x=float(node.attr("data-x") or 0),
            y=float(node.attr("data-y") or 0),
            width=float(node.attr("data-w") or 0),
            height=float(node.attr("data-h") or 0),
        )
    except ValueError:
        logger.warning("overlay node with malformed geometry attrs")
        return None


def layout_document(doc: SimDocument, viewport: tuple[int, int]) -> dict[int, LayoutBox]:
    """Map id(node) -> box for every rendered element."""
    width = viewport[0]
    boxes: dict[int, LayoutBox] = {}
    y = 8

    def place(node: SimNode, depth: int) -> None:
        nonlocal y
        if node.has_attr(OVERLAY_CONTAINER_ATTR):
            for part in node.iter_elements():
                if part is node:
                    continue
                box = _overlay_box(part)
                if box is not None:
                    boxes[id(part)] = box
            return
        if not is_rendered(node):
            return
        x = LEFT_MARGIN + depth * INDENT
        boxes[id(node)] = LayoutBox(
            x=float(x),
            y=float(y),
            width=float(max(40, width - 2 * x)),
            height=float(BOX_HEIGHT),
        )
        y += ROW_HEIGHT
        for child in node.element_children():
            place(child, depth + 1)

    try:
        body = doc.body
    except ValueError:
        return boxes
    boxes[id(body)] = LayoutBox(0.0, 0.0, float(width), float(viewport[1]))
    for child in body.element_children():
        place(child, 0)
    return boxes


def render_png(doc: SimDocument, viewport: tuple[int, int], scroll_y: int = 0) -> bytes:
    """Paint the laid-out document to a PNG. Same document, same bytes."""
    width, height = viewport
    image = Image.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(image)
    boxes = layout_document(doc, viewport)

    def draw_node(node: SimNode) -> None:
        box = boxes.get(id(node))
        if box is None:
            return
        top = box.y - scroll_y
        if top > height or top + box.height < 0:
            return
        rect = (box.x, top, box.x + box.width, top + box.height)
        if node.has_attr(MARK_ATTR):
            draw.rectangle(rect, outline=(214, 92, 14), width=2)
            draw.text((box.x + 3, top + 3), node.attr(MARK_ATTR) or "", fill=(214, 92, 14))
            return
        if node.has_attr(NOTE_ATTR):
            draw.rectangle(rect, fill=(255, 244, 180), outline=(120, 104, 14))
            draw.text((box.x + 3, top + 3), node.own_text(120), fill=(40, 34, 0))
            return
        draw.rectangle(rect, outline=(200, 200, 200))
        label = f"{node.tag} {node.own_text(60)}".strip()
        draw.text((box.x + 3, top + 3), label, fill=(20, 20, 20))

    for node in doc.iter_elements():
        if node.tag in ("#document", "html", "body"):
            continue
        draw_node(node)

    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()
