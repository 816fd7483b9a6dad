"""Shared fixtures and independent oracles used across the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from parcot import FieldSpec, TemplateSpec, build_graph, load_graph, load_template
from parcot.configs import av_graph_path, av_template_path


@pytest.fixture(scope="session")
def av_template():
    return load_template(av_template_path().read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def av_graph(av_template):
    return load_graph(av_graph_path().read_text(encoding="utf-8"), av_template)


def make_template(
    max_lens,
    vocab_size=256,
    terminator=0,
    prompt_tokens=(),
    prefix_lens=None,
    names=None,
):
    """Small synthetic template with single-byte prefixes of chosen lengths."""
    fields = []
    for i, max_len in enumerate(max_lens):
        name = names[i] if names else f"f{i}"
        n_prefix = 2 if prefix_lens is None else prefix_lens[i]
        prefix_tokens = tuple((65 + i + j) % 128 for j in range(n_prefix))
        fields.append(
            FieldSpec(
                name=name,
                prefix_text=f"{name}: ",
                max_len=max_len,
                terminator=terminator,
                prefix_tokens=prefix_tokens,
            )
        )
    return TemplateSpec(
        prompt_tokens=tuple(prompt_tokens), fields=tuple(fields), vocab_size=vocab_size
    )


def random_dag(rng: np.random.Generator, n_nodes: int, edge_prob: float = 0.35):
    """Random DAG: edges only from lower to higher index, then built normally."""
    edges = [
        (a, b)
        for a in range(n_nodes)
        for b in range(a + 1, n_nodes)
        if rng.random() < edge_prob
    ]
    return build_graph(n_nodes, edges)


def enumerate_all_paths(n_nodes: int, edges) -> list[list[int]]:
    """Brute force: every directed path (any start node) in the DAG."""
    succ = {v: [] for v in range(n_nodes)}
    for a, b in edges:
        succ[a].append(b)
    paths = []

    def extend(path):
        paths.append(list(path))
        for s in succ[path[-1]]:
            path.append(s)
            extend(path)
            path.pop()

    for v in range(n_nodes):
        extend([v])
    return paths


def brute_force_critical_path(n_nodes: int, edges, counts):
    """Exhaustive-path oracle for the longest weighted chain."""
    best_len = None
    best_path = None
    for path in enumerate_all_paths(n_nodes, edges):
        total = sum(counts[v] for v in path)
        if best_len is None or total > best_len or (total == best_len and path < best_path):
            best_len = total
            best_path = path
    if best_len is None:
        return 0, []
    return best_len, best_path


def brute_force_reachable(n_nodes: int, edges, start: int) -> set[int]:
    """DFS reachability, independent of the graph module's closure."""
    succ = {v: [] for v in range(n_nodes)}
    for a, b in edges:
        succ[a].append(b)
    seen = set()
    stack = [start]
    while stack:
        v = stack.pop()
        for s in succ[v]:
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return seen
