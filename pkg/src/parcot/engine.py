"""Decode orchestration: parallel, autoregressive baseline, and oracle.

All three decoders share the packed layout, the prefill pass, the KV cache
discipline, and the terminator/max_len completion rules; they differ only in
scheduling and visibility:

  - decode_parallel: one token per ready field per pass (the method).
  - decode_oracle: same ancestry visibility, but strictly one token per pass
    in topological field order; the equivalence reference.
  - decode_autoregressive: template-order fields, one token per pass, each
    field seeing all previously completed fields (standard sequential CoT).

Pass 0 prefills the prompt and every field prefix in a single pass (fixed
tokens are known up front); it is excluded from pass_count so pass counts
compare directly against critical-path token counts.

The query for field i's token t is fed the field's previous token (its last
prefix token at t=0) at the new token's layout position; the pass writes that
position's key/value, so a dependent released next pass can attend to the
whole realized slot of its prerequisite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import DependencyGraph
from .layout import PackedLayout, build_layout, pass_mask
from .model import KvCache, greedy_next
from .scheduler import DecodeScheduler
from .template import ByteTokenizer, TemplateSpec, render_cot


class EngineError(ValueError):
    pass


@dataclass
class DecodeResult:
    """Outcome of one decode session."""

    mode: str
    contents: dict[str, tuple[int, ...]]  # terminator stripped
    realized_lengths: dict[str, int]  # generated tokens incl. terminator
    pass_count: int
    total_generated: int
    trace: list[dict]
    wall_ns: dict[str, int]
    template_spec: TemplateSpec

    @property
    def average_parallel_degree(self) -> float:
        return self.total_generated / self.pass_count if self.pass_count else 0.0

    def render_text(self, tokenizer: ByteTokenizer | None = None) -> str:
        return render_cot(self.template_spec, self.contents, tokenizer)

    def to_json(self, include_timing: bool = True) -> dict:
        tokenizer = ByteTokenizer()
        doc = {
            "fields": {
                name: tokenizer.decode(toks) for name, toks in self.contents.items()
            },
            "pass_count": self.pass_count,
            "total_generated": self.total_generated,
            "parallel_degree": self.average_parallel_degree,
            "trace": self.trace,
        }
        if include_timing:
            doc["wall_time_ns"] = dict(self.wall_ns)
        return doc


class _Session:
    """Shared state for one decode run over a packed layout."""

    def __init__(
        self,
        template: TemplateSpec,
        model,
        prompt_tokens: Sequence[int] | None,
    ):
        if model.vocab_size != template.vocab_size:
            raise EngineError(
                f"model vocab {model.vocab_size} != template vocab {template.vocab_size}"
            )
        self.template = template
        self.layout = build_layout(template)
        prompt = tuple(template.prompt_tokens if prompt_tokens is None else prompt_tokens)
        if len(prompt) > self.layout.prompt_span.length:
            raise EngineError(
                f"prompt of {len(prompt)} tokens exceeds prompt span "
                f"{self.layout.prompt_span.length}"
            )
        for tok in prompt:
            if not 0 <= tok < template.vocab_size:
                raise EngineError(f"prompt token {tok} outside vocab")
        self.prompt = prompt
        self.model = model
        self.cache = KvCache(self.layout.total_len)
        self.slot_tokens: list[list[int]] = [[] for _ in template.fields]

    def prefill(self) -> None:
        """Pass 0: write prompt and every field prefix; no sampling."""
        tokens: list[int] = list(self.prompt)
        positions: list[int] = list(range(len(self.prompt)))
        for span, field in zip(self.layout.prefix_spans, self.template.fields):
            tokens.extend(field.prefix_tokens)
            positions.extend(range(span.start, span.stop))
        if not tokens:
            return
        n = len(tokens)
        mask = np.ones((n, n), dtype=bool)  # fixed tokens are mutually visible
        self.model.forward(tokens, positions, mask, self.cache, write=True)
        for tok, pos in zip(tokens, positions):
            self.cache.set_token(pos, tok)

    def input_token(self, field_idx: int, step: int) -> int:
        """Token fed for field i's step-t query: the field's previous token."""
        if step > 0:
            return self.slot_tokens[field_idx][step - 1]
        prefix = self.template.fields[field_idx].prefix_tokens
        if prefix:
            return prefix[-1]
        if self.prompt:
            return self.prompt[-1]
        return 0

    def emit(self, field_idx: int, step: int, token: int) -> None:
        if len(self.slot_tokens[field_idx]) != step:
            raise EngineError(
                f"field {field_idx} emitted step {step} but has "
                f"{len(self.slot_tokens[field_idx])} tokens"
            )
        self.slot_tokens[field_idx].append(token)
        self.cache.set_token(self.layout.slot_position(field_idx, step), token)

    def result(self, mode: str, pass_count: int, trace: list[dict], wall: dict) -> DecodeResult:
        contents: dict[str, tuple[int, ...]] = {}
        realized: dict[str, int] = {}
        total = 0
        for i, field in enumerate(self.template.fields):
            toks = self.slot_tokens[i]
            realized[field.name] = len(toks)
            total += len(toks)
            if toks and toks[-1] == field.terminator:
                toks = toks[:-1]
            contents[field.name] = tuple(toks)
        return DecodeResult(
            mode=mode,
            contents=contents,
            realized_lengths=realized,
            pass_count=pass_count,
            total_generated=total,
            trace=trace,
            wall_ns=wall,
            template_spec=self.template,
        )


def _timed(fn):
    start = time.perf_counter_ns()
    fn()
    return time.perf_counter_ns() - start


def decode_parallel(
    template: TemplateSpec,
    graph: DependencyGraph,
    model,
    prompt_tokens: Sequence[int] | None = None,
    session_out: list | None = None,
) -> DecodeResult:
    """Decode every dependency-satisfied field concurrently, one token per
    ready field per forward pass.

    session_out, if given, receives the internal session for post-run cache
    inspection (test instrumentation).
    """
    session = _Session(template, model, prompt_tokens)
    if session_out is not None:
        session_out.append(session)
    scheduler = DecodeScheduler(graph, template)
    names = template.field_names()
    trace: list[dict] = []

    prefill_ns = _timed(session.prefill)
    t_decode = time.perf_counter_ns()
    while not scheduler.is_done():
        ready = scheduler.ready_fields()
        cursors = scheduler.cursor
        tokens = [session.input_token(f, cursors[f]) for f in ready]
        positions = [session.layout.slot_position(f, cursors[f]) for f in ready]
        written = session.cache.written_positions()
        mask = pass_mask(session.layout, graph, ready, cursors, written)
        logits = session.model.forward(tokens, positions, mask, session.cache, write=True)
        emitted = []
        for row, f in enumerate(ready):
            token = greedy_next(logits[row])
            session.emit(f, cursors[f], token)
            emitted.append((f, token))
        completed = scheduler.commit_pass(emitted)
        trace.append(
            {
                "pass": scheduler.pass_count,
                "fields": [names[f] for f in ready],
                "completed": [names[f] for f in completed],
            }
        )
    decode_ns = time.perf_counter_ns() - t_decode
    wall = {
        "prefill_ns": prefill_ns,
        "decode_ns": decode_ns,
        "total_ns": prefill_ns + decode_ns,
    }
    return session.result("parallel", scheduler.pass_count, trace, wall)


def _decode_one_at_a_time(
    template: TemplateSpec,
    graph: DependencyGraph,
    model,
    prompt_tokens: Sequence[int] | None,
    field_order: Sequence[int],
    mode: str,
    ancestry_visibility: bool,
    session_out: list | None = None,
) -> DecodeResult:
    """One token per pass, fields in the given order; shared mechanics for the
    oracle (ancestry visibility) and the autoregressive baseline (full-prefix
    visibility over completed fields)."""
    session = _Session(template, model, prompt_tokens)
    if session_out is not None:
        session_out.append(session)
    names = template.field_names()
    trace: list[dict] = []
    pass_count = 0

    prefill_ns = _timed(session.prefill)
    t_decode = time.perf_counter_ns()
    for f in field_order:
        spec = template.fields[f]
        step = 0
        while True:
            token_in = session.input_token(f, step)
            position = session.layout.slot_position(f, step)
            written = session.cache.written_positions()
            if ancestry_visibility:
                cursors = [0] * template.num_fields
                cursors[f] = step
                mask = pass_mask(session.layout, graph, [f], cursors, written)
            else:
                row = _autoregressive_row(session.layout, f, step, written)
                mask = np.concatenate([row, [True]])[np.newaxis, :]
            logits = session.model.forward(
                [token_in], [position], mask, session.cache, write=True
            )
            token = greedy_next(logits[0])
            session.emit(f, step, token)
            pass_count += 1
            step += 1
            done = token == spec.terminator or step >= spec.max_len
            trace.append(
                {
                    "pass": pass_count,
                    "fields": [names[f]],
                    "completed": [names[f]] if done else [],
                }
            )
            if done:
                break
    decode_ns = time.perf_counter_ns() - t_decode
    wall = {
        "prefill_ns": prefill_ns,
        "decode_ns": decode_ns,
        "total_ns": prefill_ns + decode_ns,
    }
    return session.result(mode, pass_count, trace, wall)


def _autoregressive_row(
    layout: PackedLayout, field_idx: int, step: int, written: np.ndarray
) -> np.ndarray:
    """Full-chain visibility: fixed tokens, every earlier field's written
    content, and the field's own earlier tokens. Padding stays invisible
    because unwritten positions never appear in the written set."""
    fixed = layout.pos_fixed[written]
    fields = layout.pos_field[written]
    steps = layout.pos_step[written]
    earlier = ~fixed & (fields < field_idx)
    own = ~fixed & (fields == field_idx) & (steps <= step)
    return fixed | earlier | own


def decode_oracle(
    template: TemplateSpec,
    graph: DependencyGraph,
    model,
    prompt_tokens: Sequence[int] | None = None,
    session_out: list | None = None,
) -> DecodeResult:
    """Sequential reference: one token per pass in topological field order,
    under the same ancestry visibility as decode_parallel. Parallel decoding
    must reproduce this token-for-token."""
    return _decode_one_at_a_time(
        template,
        graph,
        model,
        prompt_tokens,
        graph.topological_order(),
        "oracle",
        ancestry_visibility=True,
        session_out=session_out,
    )


def decode_autoregressive(
    template: TemplateSpec,
    graph: DependencyGraph,
    model,
    prompt_tokens: Sequence[int] | None = None,
    session_out: list | None = None,
) -> DecodeResult:
    """Baseline: fields strictly in template order, one token per pass, each
    token seeing the full realized prefix of the sequence."""
    return _decode_one_at_a_time(
        template,
        graph,
        model,
        prompt_tokens,
        list(range(template.num_fields)),
        "autoregressive",
        ancestry_visibility=False,
        session_out=session_out,
    )
