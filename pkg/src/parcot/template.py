"""Structured output template: named fields with fixed prefixes and fixed-capacity slots.

A template is an ordered list of fields. Each field renders as one line
``prefix + content`` (prefix defaults to ``"<name>: "``). Prefix tokens are
fixed, known before generation starts; only slot content is generated, up to
``max_len`` tokens per field, ending early on the field's terminator token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from typing import Mapping, Sequence


class TemplateError(ValueError):
    """Raised on invalid template configuration; collects every problem found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ByteTokenizer:
    """Byte-level tokenizer: one token id per byte, vocab 256.

    Uses surrogateescape so encode/decode are mutual inverses on arbitrary
    byte strings, not just valid UTF-8.
    """

    vocab_size = 256

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8", errors="surrogateescape"))

    def decode(self, token_ids: Sequence[int]) -> str:
        return bytes(token_ids).decode("utf-8", errors="surrogateescape")


@dataclass(frozen=True)
class FieldSpec:
    """One template field: a fixed prefix followed by a generated slot.

    max_len counts generated tokens only; prefix tokens are prefilled, never
    generated. The terminator token ends the slot early when emitted.
    """

    name: str
    prefix_text: str
    max_len: int
    terminator: int
    prefix_tokens: tuple[int, ...] = dataclass_field(default=())

    def __post_init__(self):
        if not self.name:
            raise TemplateError(["field name must be non-empty"])
        if self.max_len < 1:
            raise TemplateError([f"field {self.name!r}: max_len must be >= 1, got {self.max_len}"])


@dataclass(frozen=True)
class TemplateSpec:
    """Immutable template: prompt tokens plus ordered fields.

    Safe to share across threads; all derived structures (layout, graphs)
    treat field order here as canonical.
    """

    prompt_tokens: tuple[int, ...]
    fields: tuple[FieldSpec, ...]
    vocab_size: int

    def __post_init__(self):
        errors = []
        seen = set()
        for f in self.fields:
            if f.name in seen:
                errors.append(f"duplicate field name {f.name!r}")
            seen.add(f.name)
            if not (0 <= f.terminator < self.vocab_size):
                errors.append(
                    f"field {f.name!r}: terminator {f.terminator} outside vocab [0, {self.vocab_size})"
                )
            for tok in f.prefix_tokens:
                if not (0 <= tok < self.vocab_size):
                    errors.append(f"field {f.name!r}: prefix token {tok} outside vocab")
                    break
        for tok in self.prompt_tokens:
            if not (0 <= tok < self.vocab_size):
                errors.append(f"prompt token {tok} outside vocab [0, {self.vocab_size})")
                break
        if self.vocab_size < 1:
            errors.append(f"vocab_size must be positive, got {self.vocab_size}")
        if errors:
            raise TemplateError(errors)

    @property
    def num_fields(self) -> int:
        return len(self.fields)

    def field_index(self, name: str) -> int:
        for i, f in enumerate(self.fields):
            if f.name == name:
                return i
        raise KeyError(name)

    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]


def load_template(document: str | bytes | Mapping) -> TemplateSpec:
    """Parse and validate a template config document.

    Accepts a JSON string/bytes or an already-parsed mapping:
    {"vocab_size": int, "prompt": str, "terminator": int,
     "fields": [{"name": str, "prefix": str?, "max_len": int, "terminator": int?}]}

    Field order in the document is template order. All validation errors are
    collected into one TemplateError, each naming the offending field.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise TemplateError([f"malformed document: {exc}"]) from exc
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise TemplateError(["malformed document: top level must be an object"])

    errors: list[str] = []
    vocab_size = doc.get("vocab_size")
    if not isinstance(vocab_size, int) or vocab_size < 1:
        errors.append(f"vocab_size must be a positive integer, got {vocab_size!r}")
        vocab_size = 1
    default_terminator = doc.get("terminator")
    if not isinstance(default_terminator, int):
        errors.append(f"terminator must be an integer token id, got {default_terminator!r}")
        default_terminator = 0
    prompt = doc.get("prompt", "")
    if not isinstance(prompt, str):
        errors.append("prompt must be a string")
        prompt = ""
    raw_fields = doc.get("fields")
    if not isinstance(raw_fields, list) or not raw_fields:
        errors.append("fields must be a non-empty array")
        raw_fields = []

    tokenizer = ByteTokenizer()
    fields: list[FieldSpec] = []
    seen_names: set[str] = set()
    for i, raw in enumerate(raw_fields):
        if not isinstance(raw, Mapping):
            errors.append(f"fields[{i}] must be an object")
            continue
        name = raw.get("name")
        if not isinstance(name, str) or not name:
            errors.append(f"fields[{i}]: name must be a non-empty string")
            continue
        if name in seen_names:
            errors.append(f"duplicate field name {name!r}")
        seen_names.add(name)
        max_len = raw.get("max_len")
        if not isinstance(max_len, int) or max_len < 1:
            errors.append(f"field {name!r}: max_len must be an integer >= 1, got {max_len!r}")
            max_len = 1
        prefix_text = raw.get("prefix", f"{name}: ")
        if not isinstance(prefix_text, str):
            errors.append(f"field {name!r}: prefix must be a string")
            prefix_text = f"{name}: "
        terminator = raw.get("terminator", default_terminator)
        if not isinstance(terminator, int):
            errors.append(f"field {name!r}: terminator must be an integer, got {terminator!r}")
            terminator = default_terminator
        prefix_tokens = tuple(tokenizer.encode(prefix_text))
        for tok in prefix_tokens:
            if tok >= vocab_size:
                errors.append(f"field {name!r}: prefix token {tok} outside vocab [0, {vocab_size})")
                break
        if not (0 <= terminator < vocab_size):
            errors.append(f"field {name!r}: terminator {terminator} outside vocab [0, {vocab_size})")
        fields.append(
            FieldSpec(
                name=name,
                prefix_text=prefix_text,
                max_len=max_len,
                terminator=min(max(terminator, 0), vocab_size - 1),
                prefix_tokens=prefix_tokens,
            )
        )

    prompt_tokens = tuple(tokenizer.encode(prompt))
    for tok in prompt_tokens:
        if tok >= vocab_size:
            errors.append(f"prompt token {tok} outside vocab [0, {vocab_size})")
            break

    if errors:
        raise TemplateError(errors)
    return TemplateSpec(prompt_tokens=prompt_tokens, fields=tuple(fields), vocab_size=vocab_size)


def render_cot(
    template: TemplateSpec,
    contents: Mapping[str, Sequence[int]],
    tokenizer: ByteTokenizer | None = None,
) -> str:
    """Render completed field contents as text, one line per field.

    Lines follow template field order regardless of the order contents were
    generated in. Every field must have an entry.
    """
    tokenizer = tokenizer or ByteTokenizer()
    missing = [f.name for f in template.fields if f.name not in contents]
    if missing:
        raise KeyError(f"missing content for fields: {missing}")
    lines = [f.prefix_text + tokenizer.decode(contents[f.name]) for f in template.fields]
    return "\n".join(lines)
