"""Dependency graph over template fields.

An edge A -> B means B's slot cannot start generating until A's slot is
complete. The graph is validated acyclic at construction and precomputes the
transitive-closure ancestry relation, which drives both scheduling and
attention visibility. Immutable after build; safe for concurrent readers.
"""

from __future__ import annotations

import heapq
import json
from typing import Iterable, Mapping, Sequence

import numpy as np

from .template import TemplateSpec


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    """Raised when the edge set contains a directed cycle.

    cycle holds one offending node sequence [v0, v1, ..., v0].
    """

    def __init__(self, cycle: Sequence[int]):
        self.cycle = list(cycle)
        super().__init__("dependency cycle: " + " -> ".join(str(v) for v in self.cycle))


class DependencyGraph:
    """Validated DAG with precomputed ancestry, in-degrees, and adjacency."""

    def __init__(self, node_count: int, edges: Iterable[tuple[int, int]]):
        self.node_count = node_count
        edge_set: set[tuple[int, int]] = set()
        for a, b in edges:
            if not (0 <= a < node_count and 0 <= b < node_count):
                raise GraphError(f"edge ({a}, {b}) out of range for {node_count} nodes")
            if a == b:
                raise GraphError(f"self-loop on node {a}")
            edge_set.add((a, b))
        self.edges = frozenset(edge_set)

        self.successors: list[list[int]] = [[] for _ in range(node_count)]
        self.predecessors: list[list[int]] = [[] for _ in range(node_count)]
        self.in_degree = [0] * node_count
        for a, b in sorted(edge_set):
            self.successors[a].append(b)
            self.predecessors[b].append(a)
            self.in_degree[b] += 1

        self._topo = self._topological_order_or_raise()

        # Ancestry as per-node bitsets: bit a of ancestor_bits[b] is set iff
        # a is a strict ancestor of b. Also kept as a dense bool matrix for
        # vectorized mask construction.
        self.ancestor_bits = [0] * node_count
        for v in self._topo:
            acc = 0
            for u in self.predecessors[v]:
                acc |= self.ancestor_bits[u] | (1 << u)
            self.ancestor_bits[v] = acc
        self.ancestor_matrix = np.zeros((max(node_count, 1), max(node_count, 1)), dtype=bool)
        for b in range(node_count):
            bits = self.ancestor_bits[b]
            for a in range(node_count):
                if bits >> a & 1:
                    self.ancestor_matrix[a, b] = True

    def _topological_order_or_raise(self) -> list[int]:
        # Kahn's algorithm with ascending-index tie-break for determinism.
        degree = list(self.in_degree)
        heap = [v for v in range(self.node_count) if degree[v] == 0]
        heapq.heapify(heap)
        order: list[int] = []
        while heap:
            v = heapq.heappop(heap)
            order.append(v)
            for u in self.successors[v]:
                degree[u] -= 1
                if degree[u] == 0:
                    heapq.heappush(heap, u)
        if len(order) < self.node_count:
            raise CycleError(self._find_cycle())
        return order

    def _find_cycle(self) -> list[int]:
        # Iterative DFS over the full graph; returns one cycle as v0..v0.
        color = [0] * self.node_count  # 0 unseen, 1 on stack, 2 done
        parent = [-1] * self.node_count
        for start in range(self.node_count):
            if color[start] != 0:
                continue
            stack = [(start, iter(self.successors[start]))]
            color[start] = 1
            while stack:
                v, it = stack[-1]
                advanced = False
                for u in it:
                    if color[u] == 0:
                        color[u] = 1
                        parent[u] = v
                        stack.append((u, iter(self.successors[u])))
                        advanced = True
                        break
                    if color[u] == 1:
                        cycle = [u]
                        w = v
                        while w != u:
                            cycle.append(w)
                            w = parent[w]
                        cycle.append(u)
                        cycle.reverse()
                        return cycle
                if not advanced:
                    color[v] = 2
                    stack.pop()
        raise AssertionError("cycle reported but none found")

    def is_ancestor(self, a: int, b: int) -> bool:
        """True iff a directed path a -> ... -> b exists (strict: a != b)."""
        return bool(self.ancestor_bits[b] >> a & 1)

    def ancestors(self, v: int) -> set[int]:
        bits = self.ancestor_bits[v]
        return {a for a in range(self.node_count) if bits >> a & 1}

    def topological_order(self) -> list[int]:
        return list(self._topo)


def build_graph(node_count: int, edges: Iterable[tuple[int, int]]) -> DependencyGraph:
    """Validate and build a dependency graph from index pairs."""
    return DependencyGraph(node_count, edges)


def sources(graph: DependencyGraph) -> list[int]:
    """All nodes with in-degree 0, ascending. Non-empty for any valid DAG."""
    return [v for v in range(graph.node_count) if graph.in_degree[v] == 0]


def critical_path(
    graph: DependencyGraph, token_counts: Sequence[int | float]
) -> tuple[int | float, list[int]]:
    """Longest weighted path: max cumulative token count along any chain.

    Returns (length, path); among all maximum paths the lexicographically
    smallest node-index sequence is returned. Counts must be >= 0.
    """
    counts = list(token_counts)
    if len(counts) != graph.node_count:
        raise GraphError(
            f"token_counts has {len(counts)} entries for {graph.node_count} nodes"
        )
    for i, c in enumerate(counts):
        if c < 0:
            raise GraphError(f"token_counts[{i}] = {c} is negative")
    if graph.node_count == 0:
        return 0, []

    # best_from[v]: max total over paths starting at v (DP in reverse topo order).
    best_from: list = [0] * graph.node_count
    for v in reversed(graph.topological_order()):
        tail = max((best_from[s] for s in graph.successors[v]), default=0)
        best_from[v] = counts[v] + tail
    length = max(best_from)

    # Lexicographically smallest maximum path: smallest feasible node at each
    # step, stopping as soon as the optimal tail is empty (a prefix sequence
    # is lexicographically smaller than any extension). All comparisons are
    # between stored DP values, so reconstruction is exact even for floats.
    v = min(u for u in range(graph.node_count) if best_from[u] == length)
    path = [v]
    while best_from[v] != counts[v]:
        tail = max(best_from[s] for s in graph.successors[v])
        v = min(s for s in graph.successors[v] if best_from[s] == tail)
        path.append(v)
    return length, path


def load_graph(document: str | bytes | Mapping, template: TemplateSpec) -> DependencyGraph:
    """Parse a graph config and resolve field names against a template.

    Format: {"edges": [["from_name", "to_name"], ...]}. Name-based so configs
    survive field reordering edits.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise GraphError(f"malformed document: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise GraphError("malformed document: top level must be an object")
    raw_edges = doc.get("edges")
    if not isinstance(raw_edges, list):
        raise GraphError("edges must be an array of [from_name, to_name] pairs")

    name_to_index = {f.name: i for i, f in enumerate(template.fields)}
    edges: list[tuple[int, int]] = []
    errors: list[str] = []
    for i, pair in enumerate(raw_edges):
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            errors.append(f"edges[{i}] must be a [from_name, to_name] pair")
            continue
        a_name, b_name = pair
        if a_name not in name_to_index:
            errors.append(f"edges[{i}]: unknown field {a_name!r}")
            continue
        if b_name not in name_to_index:
            errors.append(f"edges[{i}]: unknown field {b_name!r}")
            continue
        edges.append((name_to_index[a_name], name_to_index[b_name]))
    if errors:
        raise GraphError("; ".join(errors))
    return build_graph(template.num_fields, edges)
