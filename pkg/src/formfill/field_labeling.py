"""Headless field-name inference over serialized HTML.

Mirrors the in-page inference used by the extension so corpus tests and the
CLI need no browser: reads each text field's accessible name where one
exists, falling back to nearby visible text and finally to the element's own
attributes. Parsing is lenient; malformed markup never aborts labeling.

Name sources, in precedence order:
aria-label > aria-labelledby > label[for] > wrapping label > placeholder
> nearby visible text > element name/id attribute.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from html.parser import HTMLParser

NAME_SOURCES = (
    "aria_label",
    "aria_labelledby",
    "label_for",
    "wrapping_label",
    "placeholder",
    "nearby_text",
    "fallback_attr",
)

# input types that never take typed text
_NON_TEXT_INPUT_TYPES = {
    "button", "checkbox", "color", "file", "hidden", "image",
    "radio", "range", "reset", "submit",
}

_VOID_TAGS = {
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
}

# subtrees that never contribute visible text
_INVISIBLE_TAGS = {"script", "style", "template", "head", "title", "noscript"}

_FORM_CONTROL_TAGS = {"input", "textarea", "select", "button"}

NEARBY_ANCESTOR_LEVELS = 3
NEARBY_SCAN_BUDGET = 200  # non-whitespace characters examined before giving up


class TextNode:
    __slots__ = ("text", "parent")

    def __init__(self, text: str, parent: "Element | None"):
        self.text = text
        self.parent = parent


class Element:
    __slots__ = ("tag", "attrs", "children", "parent")

    def __init__(self, tag: str, attrs: dict[str, str], parent: "Element | None"):
        self.tag = tag
        self.attrs = attrs
        self.children: list[Element | TextNode] = []
        self.parent = parent

    def get(self, attr: str) -> str | None:
        return self.attrs.get(attr)


class _TreeBuilder(HTMLParser):
    """Builds a forgiving element tree: stray end tags are dropped and
    unclosed elements stay open until an ancestor closes."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root = Element("#document", {}, None)
        self._stack = [self.root]

    def handle_starttag(self, tag, attrs):
        attr_map: dict[str, str] = {}
        for key, value in attrs:
            attr_map.setdefault(key, value if value is not None else "")
        element = Element(tag, attr_map, self._stack[-1])
        self._stack[-1].children.append(element)
        if tag not in _VOID_TAGS:
            self._stack.append(element)

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag not in _VOID_TAGS:
            self._stack.pop()

    def handle_endtag(self, tag):
        for i in range(len(self._stack) - 1, 0, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                return
        # stray end tag: ignore

    def handle_data(self, data):
        if data:
            parent = self._stack[-1]
            parent.children.append(TextNode(data, parent))


def parse_html(html: str) -> Element:
    """Parse leniently into an element tree rooted at a synthetic document node."""
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    return builder.root


def _iter_elements(node: Element):
    for child in node.children:
        if isinstance(child, Element):
            yield child
            yield from _iter_elements(child)


def _is_invisible(element: Element) -> bool:
    if element.tag in _INVISIBLE_TAGS:
        return True
    if element.get("hidden") is not None:
        return True
    return False


def _is_text_entry(element: Element) -> bool:
    if element.tag == "input":
        input_type = (element.get("type") or "text").strip().lower()
        return input_type not in _NON_TEXT_INPUT_TYPES
    if element.tag == "textarea":
        return True
    editable = element.get("contenteditable")
    if editable is not None and editable.strip().lower() in ("", "true"):
        return True
    return False


def iter_text_fields(root: Element) -> list[Element]:
    """All text-entry elements in document order, skipping invisible subtrees."""
    fields: list[Element] = []

    def walk(node: Element) -> None:
        for child in node.children:
            if not isinstance(child, Element):
                continue
            if _is_invisible(child):
                continue
            if _is_text_entry(child):
                fields.append(child)
                if child.tag == "textarea":
                    continue  # textarea content is its value, not nested fields
            walk(child)

    walk(root)
    return fields


_WS = re.compile(r"\s+")


def _collapse(text: str) -> str:
    return _WS.sub(" ", text).strip()


def visible_text(element: Element, skip: Element | None = None) -> str:
    """Whitespace-collapsed visible text of a subtree.

    Text inside form controls and invisible subtrees does not count; ``skip``
    excludes one embedded element (the control a label wraps).
    """
    parts: list[str] = []

    def walk(node: Element) -> None:
        for child in node.children:
            if isinstance(child, TextNode):
                parts.append(child.text)
            elif child is skip or _is_invisible(child) or child.tag in _FORM_CONTROL_TAGS:
                continue
            else:
                walk(child)

    walk(element)
    return _collapse("".join(parts))


def _texts_reverse(node: Element | TextNode, visible: bool):
    """(content, visible) for every text node of a subtree, nearest first."""
    if isinstance(node, TextNode):
        yield node.text, visible
        return
    visible = visible and not _is_invisible(node) and node.tag not in _FORM_CONTROL_TAGS
    for child in reversed(node.children):
        yield from _texts_reverse(child, visible)


def nearby_text(root: Element, element: Element) -> str:
    """Nearest preceding visible text node's trimmed content.

    Scans the element's preceding siblings, then climbs up to
    ``NEARBY_ANCESTOR_LEVELS`` ancestors scanning each one's preceding
    siblings, in reverse document order. Text inside other form controls and
    invisible subtrees never qualifies but still counts against
    ``NEARBY_SCAN_BUDGET``: a label separated from the field by more than the
    budget's worth of skipped text is not nearby.
    """
    scanned = 0
    node: Element = element
    for _ in range(NEARBY_ANCESTOR_LEVELS + 1):
        parent = node.parent
        if parent is None:
            break
        idx = parent.children.index(node)
        for sibling in reversed(parent.children[:idx]):
            for raw, visible in _texts_reverse(sibling, True):
                if scanned >= NEARBY_SCAN_BUDGET:
                    return ""
                content = _collapse(raw)
                scanned += len(content)
                if visible and content:
                    return content
        node = parent
    return ""


def _element_index(root: Element) -> dict[str, Element]:
    by_id: dict[str, Element] = {}
    for el in _iter_elements(root):
        el_id = el.get("id")
        if el_id and el_id not in by_id:
            by_id[el_id] = el
    return by_id


def _wrapping_label(element: Element) -> Element | None:
    node = element.parent
    while node is not None:
        if node.tag == "label":
            return node
        node = node.parent
    return None


def _child_path(element: Element) -> str:
    """Path-like fallback id: child indexes from the document root."""
    indexes: list[int] = []
    node: Element = element
    while node.parent is not None:
        indexes.append(node.parent.children.index(node))
        node = node.parent
    return "@" + ".".join(str(i) for i in reversed(indexes))


@dataclass(frozen=True)
class LabeledField:
    field_id: str
    name: str
    source: str  # one of NAME_SOURCES
    value: str = ""  # initial value carried along for headless form capture


def _field_value(element: Element) -> str:
    if element.tag == "input":
        return element.get("value") or ""
    if element.tag == "textarea":
        return "".join(
            c.text for c in element.children if isinstance(c, TextNode)
        ).strip()
    return visible_text(element)


def _infer_name(
    root: Element,
    element: Element,
    by_id: dict[str, Element],
    labels_by_for: dict[str, Element],
) -> tuple[str, str]:
    aria = element.get("aria-label")
    if aria and aria.strip():
        return _collapse(aria), "aria_label"

    labelledby = element.get("aria-labelledby")
    if labelledby:
        parts = []
        for ref in labelledby.split():
            target = by_id.get(ref)
            if target is not None:
                text = visible_text(target)
                if text:
                    parts.append(text)
        if parts:
            return " ".join(parts), "aria_labelledby"

    el_id = element.get("id")
    if el_id and by_id.get(el_id) is element:  # label[for] binds the id's first owner
        label = labels_by_for.get(el_id)
        if label is not None:
            text = visible_text(label, skip=element)
            if text:
                return text, "label_for"

    wrapper = _wrapping_label(element)
    if wrapper is not None:
        text = visible_text(wrapper, skip=element)
        if text:
            return text, "wrapping_label"

    placeholder = element.get("placeholder")
    if placeholder and placeholder.strip():
        return _collapse(placeholder), "placeholder"

    nearby = nearby_text(root, element)
    if nearby:
        return nearby, "nearby_text"

    return element.get("name") or element.get("id") or "", "fallback_attr"


def label_fields(html: str) -> list[LabeledField]:
    """One LabeledField per text-entry element, in document order."""
    root = parse_html(html)
    by_id = _element_index(root)
    labels_by_for: dict[str, Element] = {}
    for el in _iter_elements(root):
        if el.tag == "label":
            target = el.get("for")
            if target and target not in labels_by_for:
                labels_by_for[target] = el

    fields: list[LabeledField] = []
    used_ids: set[str] = set()
    for element in iter_text_fields(root):
        name, source = _infer_name(root, element, by_id, labels_by_for)
        el_id = element.get("id")
        field_id = el_id if el_id and el_id not in used_ids else _child_path(element)
        used_ids.add(field_id)
        fields.append(
            LabeledField(
                field_id=field_id,
                name=name,
                source=source,
                value=_field_value(element),
            )
        )
    return fields
