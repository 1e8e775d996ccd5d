"""Prompt templates: a conversation slot, literal text and one mask slot."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import ConversationRecord, LabelCatalog

MASK_TOKEN = "<MASK>"

CONVERSATION_SLOT = "conversation"
MASK_SLOT = "mask"

_PLACEHOLDER = re.compile(r"\{(\w+)\}")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Template:
    """Parsed template: ordered segments, exactly one conversation and one mask slot.

    Each segment is ("literal", text), ("conversation", "") or ("mask", "").
    Literal segments are never empty.
    """

    id: str
    segments: tuple[tuple[str, str], ...]

    def spec(self) -> str:
        """Reconstruct the source string (inverse of parse_template)."""
        parts = []
        for kind, text in self.segments:
            if kind == "literal":
                parts.append(text)
            else:
                parts.append("{%s}" % kind)
        return "".join(parts)

    def fixed_length(self) -> int:
        """Rendered length with an empty conversation (literals + mask marker)."""
        return sum(
            len(text) if kind == "literal" else (len(MASK_TOKEN) if kind == "mask" else 0)
            for kind, text in self.segments
        )


@dataclass(frozen=True)
class FilledPrompt:
    text: str
    template_id: str
    record_id: str
    truncated: bool


def parse_template(template_id: str, spec: str) -> Template:
    """Parse a template string with {conversation} and {mask} placeholders."""
    if not template_id:
        raise TemplateError("template id must be non-empty")
    segments: list[tuple[str, str]] = []
    pieces = _PLACEHOLDER.split(spec)
    # re.split alternates literal, name, literal, name, ... literal
    for i, piece in enumerate(pieces):
        if i % 2 == 0:
            if piece:
                segments.append(("literal", piece))
        elif piece == CONVERSATION_SLOT:
            segments.append((CONVERSATION_SLOT, ""))
        elif piece == MASK_SLOT:
            segments.append((MASK_SLOT, ""))
        else:
            raise TemplateError(f"template {template_id!r}: unknown placeholder {{{piece}}}")
    kinds = [k for k, _ in segments]
    if kinds.count(CONVERSATION_SLOT) != 1:
        raise TemplateError(
            f"template {template_id!r}: exactly one {{conversation}} slot required, "
            f"found {kinds.count(CONVERSATION_SLOT)}"
        )
    if kinds.count(MASK_SLOT) != 1:
        raise TemplateError(
            f"template {template_id!r}: exactly one {{mask}} slot required, "
            f"found {kinds.count(MASK_SLOT)}"
        )
    return Template(template_id, tuple(segments))


def render_prompt(
    template: Template, record: ConversationRecord, max_chars: int | None = None
) -> FilledPrompt:
    """Fill the template with the record's conversation text.

    When max_chars is set the conversation is trimmed from the front so the
    most recent part survives; literals and the mask marker are never cut.
    """
    conversation = record.text
    truncated = False
    if max_chars is not None:
        budget = max_chars - template.fixed_length()
        if budget <= 0:
            raise TemplateError(
                f"template {template.id!r}: max_chars {max_chars} leaves no room for "
                f"the conversation (fixed part is {template.fixed_length()} chars)"
            )
        if len(conversation) > budget:
            conversation = conversation[-budget:]
            truncated = True
    parts = []
    for kind, text in template.segments:
        if kind == "literal":
            parts.append(text)
        elif kind == CONVERSATION_SLOT:
            parts.append(conversation)
        else:
            parts.append(MASK_TOKEN)
    rendered = "".join(parts)
    if rendered.count(MASK_TOKEN) != 1:
        raise TemplateError(
            f"record {record.id!r} produces {rendered.count(MASK_TOKEN)} {MASK_TOKEN} "
            f"occurrences; conversations must not contain the mask marker"
        )
    return FilledPrompt(rendered, template.id, record.id, truncated)


def load_templates(path) -> dict[str, Template]:
    """Read templates from a JSON array of {id, spec}. Ids must be unique."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise TemplateError(f"{path}: template file must hold a JSON array")
    templates: dict[str, Template] = {}
    for item in raw:
        if not isinstance(item, dict) or "id" not in item or "spec" not in item:
            raise TemplateError(f"{path}: template entries need id and spec fields")
        tid = str(item["id"])
        if tid in templates:
            raise TemplateError(f"{path}: duplicate template id {tid!r}")
        templates[tid] = parse_template(tid, str(item["spec"]))
    return templates


def build_description_template(catalog: LabelCatalog, template_id: str = "5") -> Template:
    """Zero-shot template that spells out every class before the mask.

    Class lines come from the catalog: "Name: description;" (name alone when
    the description is empty).
    """
    n = len(catalog)
    lines = [f"{{conversation}}\nGiven this conversation, we have {n} classes:\n"]
    for entry in catalog:
        if entry.description:
            lines.append(f"{entry.name}: {entry.description};\n")
        else:
            lines.append(f"{entry.name};\n")
    lines.append(
        f"Please classify this conversation into one class out of these {n} classes: {{mask}}"
    )
    return parse_template(template_id, "".join(lines))
