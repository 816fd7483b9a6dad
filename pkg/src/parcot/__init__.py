"""parcot: parallel decoding of template-structured output.

A structured chain-of-thought is split into named fields with fixed-capacity
slots, packed into one sequence with a shared KV cache. A dependency graph
over the fields drives both the decode schedule (every dependency-satisfied
field advances one token per forward pass, which is pass-count optimal: the
schedule finishes in exactly the critical-path token count) and the attention
mask (a token attends to fixed tokens, its own field's earlier tokens, and
strict-ancestor fields; padding is invisible to everything).

Typical use:

    >>> import parcot
    >>> template = parcot.load_template(open(path).read())
    >>> graph = parcot.load_graph(open(gpath).read(), template)
    >>> model = parcot.ReferenceTransformer(vocab_size=template.vocab_size, seed=7)
    >>> result = parcot.decode_parallel(template, graph, model)
    >>> result.pass_count, result.average_parallel_degree
"""

from .analysis import (
    LinearFit,
    RunRecord,
    collect_runs,
    fit_latency,
    plan_expected,
    plan_monte_carlo,
    summarize,
    write_csv,
)
from .engine import DecodeResult, decode_autoregressive, decode_oracle, decode_parallel
from .graph import (
    CycleError,
    DependencyGraph,
    GraphError,
    build_graph,
    critical_path,
    load_graph,
    sources,
)
from .layout import PackedLayout, TokenRef, build_layout, pass_mask, render_mask, visible
from .model import (
    KvCache,
    MockHashModel,
    ReferenceTransformer,
    greedy_next,
    sample_next,
    sinusoidal_encoding,
)
from .scheduler import DecodeScheduler, FieldStatus, new_schedule, simulate_schedule
from .template import (
    ByteTokenizer,
    FieldSpec,
    TemplateError,
    TemplateSpec,
    load_template,
    render_cot,
)

__version__ = "0.1.0"

__all__ = [
    "ByteTokenizer",
    "CycleError",
    "DecodeResult",
    "DecodeScheduler",
    "DependencyGraph",
    "FieldSpec",
    "FieldStatus",
    "GraphError",
    "KvCache",
    "LinearFit",
    "MockHashModel",
    "PackedLayout",
    "ReferenceTransformer",
    "RunRecord",
    "TemplateError",
    "TemplateSpec",
    "TokenRef",
    "build_graph",
    "build_layout",
    "collect_runs",
    "critical_path",
    "decode_autoregressive",
    "decode_oracle",
    "decode_parallel",
    "fit_latency",
    "greedy_next",
    "load_graph",
    "load_template",
    "new_schedule",
    "pass_mask",
    "plan_expected",
    "plan_monte_carlo",
    "render_cot",
    "render_mask",
    "sample_next",
    "simulate_schedule",
    "sinusoidal_encoding",
    "sources",
    "summarize",
    "visible",
    "write_csv",
]
