"""Dynamic ready-set schedule: one token per ready field per forward pass.

A field is ready once every ancestor is done. Each committed pass advances
every ready field by one token; a field completes when it emits its
terminator or fills its slot. Completions release dependents starting from
the next pass, so a dependent's first token can attend to the prerequisite's
final token already sitting in the cache.

One scheduler instance drives one decode session; instances are independent.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

from .graph import DependencyGraph, sources
from .template import TemplateSpec


class FieldStatus(Enum):
    BLOCKED = "blocked"
    READY = "ready"
    DONE = "done"


class ScheduleError(ValueError):
    pass


class DecodeScheduler:
    """Mutable per-session state for the ready-set decode loop."""

    def __init__(self, graph: DependencyGraph, template: TemplateSpec):
        if graph.node_count != template.num_fields:
            raise ScheduleError(
                f"graph has {graph.node_count} nodes but template has {template.num_fields} fields"
            )
        self.graph = graph
        self.template = template
        self.remaining_in_degree = list(graph.in_degree)
        self.cursor = [0] * graph.node_count
        self.status = [
            FieldStatus.READY if d == 0 else FieldStatus.BLOCKED for d in graph.in_degree
        ]
        self._ready = set(sources(graph))
        self.pass_count = 0
        self.total_generated = 0

    def ready_fields(self) -> list[int]:
        """Current ready set in ascending field order (fixes packing order)."""
        return sorted(self._ready)

    def is_done(self) -> bool:
        return all(s is FieldStatus.DONE for s in self.status)

    def commit_pass(self, emitted: Sequence[tuple[int, int]]) -> list[int]:
        """Record one decoded token per ready field; returns fields completed.

        emitted must cover exactly the current ready set. Newly released
        dependents enter the ready set for the next pass.
        """
        emitted_fields = [f for f, _ in emitted]
        if set(emitted_fields) != self._ready or len(emitted_fields) != len(self._ready):
            raise ScheduleError(
                f"emitted fields {sorted(emitted_fields)} != ready set {sorted(self._ready)}"
            )
        self.pass_count += 1
        completed: list[int] = []
        for field_idx, token in emitted:
            if self.status[field_idx] is FieldStatus.DONE:
                raise ScheduleError(f"token emitted for done field {field_idx}")
            spec = self.template.fields[field_idx]
            self.cursor[field_idx] += 1
            self.total_generated += 1
            if token == spec.terminator or self.cursor[field_idx] >= spec.max_len:
                completed.append(field_idx)
        for field_idx in completed:
            self.status[field_idx] = FieldStatus.DONE
            self._ready.discard(field_idx)
            for dep in self.graph.successors[field_idx]:
                self.remaining_in_degree[dep] -= 1
                if self.remaining_in_degree[dep] == 0:
                    # Prerequisite safety: every ancestor must already be done.
                    assert all(
                        self.status[a] is FieldStatus.DONE for a in self.graph.ancestors(dep)
                    ), f"field {dep} released with unfinished ancestors"
                    self.status[dep] = FieldStatus.READY
                    self._ready.add(dep)
        return completed

    @property
    def average_parallel_degree(self) -> float:
        return self.total_generated / self.pass_count if self.pass_count else 0.0


def new_schedule(graph: DependencyGraph, template: TemplateSpec) -> DecodeScheduler:
    """Fresh scheduler: ready set seeded with the graph's source fields."""
    return DecodeScheduler(graph, template)


def simulate_schedule(
    graph: DependencyGraph, template: TemplateSpec, lengths: Sequence[int]
) -> list[dict]:
    """Dry-run the schedule for known realized lengths (no model involved).

    Each field is assumed to emit its terminator at token index lengths[i]-1
    (or to truncate at max_len if lengths[i] >= max_len). Returns the per-pass
    trace: [{"pass": n, "fields": [names], "completed": [names]}, ...].
    """
    if len(lengths) != template.num_fields:
        raise ScheduleError(f"{len(lengths)} lengths for {template.num_fields} fields")
    sched = new_schedule(graph, template)
    names = template.field_names()
    trace = []
    while not sched.is_done():
        ready = sched.ready_fields()
        emitted = []
        for f in ready:
            spec = template.fields[f]
            finishing = sched.cursor[f] + 1 >= min(lengths[f], spec.max_len)
            token = spec.terminator if finishing else (spec.terminator + 1) % template.vocab_size
            emitted.append((f, token))
        completed = sched.commit_pass(emitted)
        trace.append(
            {
                "pass": sched.pass_count,
                "fields": [names[f] for f in ready],
                "completed": [names[f] for f in completed],
            }
        )
    return trace
