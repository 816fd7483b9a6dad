"""Packed single-sequence layout and attention visibility.

Every token of a decode session lives at a fixed position in one packed
sequence: prompt first, then each field's prefix and slot in template order.
Position ids are layout positions, so they never depend on decode order or
on how long other fields actually ran.

Visibility rules, applied per (query, key) pair:
  - unwritten positions (padding of short fields, unused prompt space) are
    invisible to everything;
  - prompt and prefix tokens are fixed and visible to every query;
  - within a field, token t sees tokens <= t of the same field;
  - across fields, a key is visible iff its field is a strict ancestor of
    the query's field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import DependencyGraph
from .template import TemplateSpec

PROMPT = -1  # field id used in position tables for prompt tokens


class LayoutError(ValueError):
    pass


class MaskContractError(AssertionError):
    """Internal contract violation: the ready set is not mutually independent."""


@dataclass(frozen=True)
class Span:
    start: int
    stop: int

    @property
    def length(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class TokenRef:
    """Identifies one layout position: a fixed prompt/prefix token or (field, step)."""

    position: int
    kind: str  # "prompt" | "prefix" | "slot"
    field: int | None = None
    step: int | None = None

    @property
    def is_fixed(self) -> bool:
        return self.kind != "slot"


class PackedLayout:
    """Fixed placement of prompt, prefixes, and slots in one sequence."""

    def __init__(self, template: TemplateSpec):
        self.template = template
        p = len(template.prompt_tokens)
        self.prompt_span = Span(0, p)
        self.prefix_spans: list[Span] = []
        self.slot_spans: list[Span] = []
        pos = p
        for f in template.fields:
            self.prefix_spans.append(Span(pos, pos + len(f.prefix_tokens)))
            pos += len(f.prefix_tokens)
            self.slot_spans.append(Span(pos, pos + f.max_len))
            pos += f.max_len
        self.total_len = pos

        # Per-position lookup tables for vectorized mask construction.
        self.pos_fixed = np.zeros(self.total_len, dtype=bool)
        self.pos_field = np.full(self.total_len, PROMPT, dtype=np.int64)
        self.pos_step = np.full(self.total_len, -1, dtype=np.int64)
        self.pos_fixed[:p] = True
        for i, (pre, slot) in enumerate(zip(self.prefix_spans, self.slot_spans)):
            self.pos_fixed[pre.start : pre.stop] = True
            self.pos_field[pre.start : pre.stop] = i
            self.pos_field[slot.start : slot.stop] = i
            self.pos_step[slot.start : slot.stop] = np.arange(slot.length)

    def slot_position(self, field: int, step: int) -> int:
        span = self.slot_spans[field]
        if not 0 <= step < span.length:
            raise LayoutError(f"step {step} out of slot for field {field}")
        return span.start + step

    def describe(self, position: int) -> TokenRef:
        if not 0 <= position < self.total_len:
            raise LayoutError(f"position {position} outside layout [0, {self.total_len})")
        if position < self.prompt_span.stop:
            return TokenRef(position, "prompt")
        field = int(self.pos_field[position])
        if self.pos_fixed[position]:
            return TokenRef(position, "prefix", field=field)
        return TokenRef(position, "slot", field=field, step=int(self.pos_step[position]))


def build_layout(template: TemplateSpec) -> PackedLayout:
    return PackedLayout(template)


def visible(
    layout: PackedLayout,
    graph: DependencyGraph,
    query: TokenRef,
    key: TokenRef,
    key_written: bool = True,
) -> bool:
    """Reference visibility predicate for a single (query, key) pair."""
    if not key_written:
        return False
    if key.is_fixed:
        return True
    if query.is_fixed:
        return False
    if key.field == query.field:
        return key.step <= query.step
    return graph.is_ancestor(key.field, query.field)


def visibility_row(
    layout: PackedLayout,
    graph: DependencyGraph,
    query_field: int,
    query_step: int,
    key_positions: np.ndarray,
) -> np.ndarray:
    """Vectorized visible() over written key positions for one slot query."""
    fixed = layout.pos_fixed[key_positions]
    fields = layout.pos_field[key_positions]
    steps = layout.pos_step[key_positions]
    same = (fields == query_field) & (steps <= query_step)
    anc = np.zeros(len(key_positions), dtype=bool)
    slot_keys = ~fixed
    if slot_keys.any():
        anc[slot_keys] = graph.ancestor_matrix[fields[slot_keys], query_field]
    return fixed | same | anc


def pass_mask(
    layout: PackedLayout,
    graph: DependencyGraph,
    ready: Sequence[int],
    cursors: Sequence[int],
    written_positions: np.ndarray,
) -> np.ndarray:
    """Attention mask for one decode pass.

    Row q covers ready field q's next token: visibility against every written
    cache position (columns 0..W-1, ascending position) followed by the pass's
    own queries (columns W.., diagonal true, off-diagonal false -- concurrent
    fields are mutually independent by construction).
    """
    for i, a in enumerate(ready):
        for b in ready[i + 1 :]:
            if graph.is_ancestor(a, b) or graph.is_ancestor(b, a):
                raise MaskContractError(
                    f"ready set {list(ready)} contains dependent pair ({a}, {b})"
                )
    written = np.asarray(written_positions, dtype=np.int64)
    n_ready = len(ready)
    mask = np.zeros((n_ready, len(written) + n_ready), dtype=bool)
    for row, f in enumerate(ready):
        mask[row, : len(written)] = visibility_row(layout, graph, f, cursors[f], written)
        mask[row, len(written) + row] = True
    return mask


def render_mask(
    layout: PackedLayout,
    mask: np.ndarray,
    written_positions: Sequence[int],
    query_positions: Sequence[int],
) -> str:
    """Debug dump: 0/1 grid with field:step labels for rows and columns."""

    def label(pos: int) -> str:
        ref = layout.describe(pos)
        if ref.kind == "prompt":
            return f"prompt[{pos}]"
        name = layout.template.fields[ref.field].name
        if ref.kind == "prefix":
            return f"{name}:pre{pos - layout.prefix_spans[ref.field].start}"
        return f"{name}:{ref.step}"

    col_labels = [label(p) for p in written_positions] + [
        "Q " + label(p) for p in query_positions
    ]
    row_labels = [label(p) for p in query_positions]
    width = max((len(l) for l in row_labels), default=0)
    lines = ["columns: " + " | ".join(col_labels)]
    for r, row_label in enumerate(row_labels):
        bits = "".join("1" if v else "0" for v in mask[r])
        lines.append(f"{row_label:>{width}} {bits}")
    return "\n".join(lines)
