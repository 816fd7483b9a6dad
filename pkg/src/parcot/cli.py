"""Command-line front end: validate configs, plan schedules, decode, benchmark.

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation failure.
All commands are deterministic given --seed; --no-timing strips wall-clock
numbers so outputs are byte-reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .engine import decode_autoregressive, decode_oracle, decode_parallel
from .graph import DependencyGraph, GraphError, critical_path, load_graph, sources
from .layout import build_layout
from .model import MockHashModel, ReferenceTransformer
from .scheduler import simulate_schedule
from .template import TemplateError, TemplateSpec, load_template

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigFailure(Exception):
    """Carries every configuration problem found before any compute starts."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _load_configs(args) -> tuple[TemplateSpec, DependencyGraph | None]:
    errors = []
    template = None
    graph = None
    template_path = Path(args.template)
    if not template_path.is_file():
        errors.append(f"template file not found: {template_path}")
    else:
        try:
            template = load_template(template_path.read_text(encoding="utf-8"))
        except TemplateError as exc:
            errors.extend(f"template: {e}" for e in exc.errors)
    graph_path = getattr(args, "graph", None)
    if graph_path is not None:
        graph_path = Path(graph_path)
        if not graph_path.is_file():
            errors.append(f"graph file not found: {graph_path}")
        elif template is not None:
            try:
                graph = load_graph(graph_path.read_text(encoding="utf-8"), template)
            except GraphError as exc:
                errors.append(f"graph: {exc}")
    weights = getattr(args, "weights", None)
    if weights is not None:
        if not Path(weights).is_file():
            errors.append(f"weights file not found: {weights}")
        elif not Path(str(weights) + ".json").is_file():
            errors.append(f"weights manifest not found: {weights}.json")
    if errors:
        raise ConfigFailure(errors)
    return template, graph


def _build_model(args, template: TemplateSpec):
    if getattr(args, "weights", None):
        model = ReferenceTransformer.load_weights(args.weights)
    elif args.model == "reference":
        model = ReferenceTransformer(vocab_size=template.vocab_size, seed=args.seed)
    else:
        model = MockHashModel(
            vocab_size=template.vocab_size, seed=args.seed, layout=build_layout(template)
        )
    if model.vocab_size != template.vocab_size:
        raise ConfigFailure(
            [f"model vocab {model.vocab_size} != template vocab {template.vocab_size}"]
        )
    return model


def _parse_lengths(args, template: TemplateSpec) -> list[int] | None:
    if getattr(args, "lengths", None):
        try:
            vec = [int(x) for x in args.lengths.split(",")]
        except ValueError as exc:
            raise ConfigFailure([f"bad --lengths value: {exc}"]) from exc
        if len(vec) != template.num_fields:
            raise ConfigFailure(
                [f"--lengths has {len(vec)} entries for {template.num_fields} fields"]
            )
        if any(v < 1 for v in vec):
            raise ConfigFailure(["--lengths entries must be >= 1"])
        return vec
    if getattr(args, "lengths_file", None):
        path = Path(args.lengths_file)
        if not path.is_file():
            raise ConfigFailure([f"lengths file not found: {path}"])
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigFailure([f"lengths file malformed: {exc}"]) from exc
        missing = [f.name for f in template.fields if f.name not in doc]
        if missing:
            raise ConfigFailure([f"lengths file missing fields: {missing}"])
        return [int(doc[f.name]) for f in template.fields]
    return None


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------
def cmd_validate(args) -> int:
    template, graph = _load_configs(args)
    print(f"template OK: {template.num_fields} fields")
    if graph is not None:
        print(
            f"graph OK: {len(graph.edges)} edges, {len(sources(graph))} sources, has-cycle=no"
        )
    return EXIT_OK


def cmd_plan(args) -> int:
    template, graph = _load_configs(args)
    if graph is None:
        raise ConfigFailure(["plan requires --graph"])
    lengths = _parse_lengths(args, template)
    vec = lengths if lengths is not None else [f.max_len for f in template.fields]
    cp_len, path = critical_path(graph, vec)
    _, degree = analysis.plan_expected(template, graph, vec)
    names = template.field_names()
    print(f"critical path {cp_len} ({'->'.join(names[i] for i in path)})")
    print(f"expected passes {cp_len}")
    print(f"expected parallel degree {degree:.2f}")
    if args.trace:
        trace = simulate_schedule(graph, template, vec)
        with open(args.trace, "w", encoding="utf-8") as fh:
            for record in trace:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return EXIT_OK


_DECODERS = {
    "parallel": decode_parallel,
    "autoregressive": decode_autoregressive,
    "oracle": decode_oracle,
}


def cmd_decode(args) -> int:
    template, graph = _load_configs(args)
    if graph is None:
        raise ConfigFailure(["decode requires --graph"])
    model = _build_model(args, template)
    result = _DECODERS[args.mode](template, graph, model)
    doc = result.to_json(include_timing=not args.no_timing)
    text = result.render_text()
    payload = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    print(f"pass_count {result.pass_count}")
    print(f"parallel_degree {result.average_parallel_degree:.6f}")
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        Path(str(args.out) + ".txt").write_text(
            text + "\n", encoding="utf-8", errors="surrogateescape"
        )
    else:
        sys.stdout.write(payload)
        # undecodable bytes in generated content are escaped for terminal safety
        sys.stdout.write(text.encode("utf-8", "backslashreplace").decode("utf-8") + "\n")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for record in result.trace:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    template, graph = _load_configs(args)
    if graph is None:
        raise ConfigFailure(["bench requires --graph"])
    if args.prompts < 1:
        raise ConfigFailure(["--prompts must be >= 1"])
    model = _build_model(args, template)
    layout = build_layout(template)
    rng = np.random.default_rng(args.seed)
    prompt_cap = layout.prompt_span.length
    prompts = []
    for _ in range(args.prompts):
        n = int(rng.integers(1, prompt_cap + 1)) if prompt_cap else 0
        prompts.append([int(t) for t in rng.integers(0, template.vocab_size, size=n)])
    for _ in range(args.warmup):
        decode_parallel(template, graph, model, prompts[0])
    records = analysis.collect_runs(template, graph, model, prompts)
    include_timing = not args.no_timing
    summary = analysis.summarize(records, include_timing)
    if args.out:
        analysis.write_csv(records, args.out, include_timing)
        analysis.write_summary(records, str(args.out) + ".summary.json", include_timing)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parcot",
        description="Parallel decoding of template-structured output over a dependency graph.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, graph_required=True):
        p.add_argument("--template", required=True, help="template config JSON")
        p.add_argument(
            "--graph", required=graph_required, help="dependency graph config JSON"
        )

    p = sub.add_parser("validate", help="validate template and graph configs")
    common(p, graph_required=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="critical path and expected schedule")
    common(p)
    p.add_argument("--lengths", help="comma-separated per-field token counts")
    p.add_argument("--lengths-file", help="JSON file mapping field name to token count")
    p.add_argument("--trace", help="write per-pass schedule trace (JSON lines)")
    p.set_defaults(func=cmd_plan)

    def model_flags(p):
        p.add_argument(
            "--model", choices=["reference", "mock"], default="reference"
        )
        p.add_argument("--weights", help="reference model weights file")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("decode", help="run one decode session")
    common(p)
    model_flags(p)
    p.add_argument(
        "--mode",
        choices=["parallel", "autoregressive", "oracle"],
        default="parallel",
    )
    p.add_argument("--out", help="write result JSON here (rendered text at OUT.txt)")
    p.add_argument("--trace", help="write per-pass trace (JSON lines)")
    p.add_argument("--no-timing", action="store_true", help="omit wall times from output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="benchmark over synthetic prompts")
    common(p)
    model_flags(p)
    p.add_argument("--prompts", type=int, default=10, help="number of synthetic prompts")
    p.add_argument("--warmup", type=int, default=10, help="warm-up decodes to discard")
    p.add_argument("--out", help="write benchmark CSV here (summary at OUT.summary.json)")
    p.add_argument("--no-timing", action="store_true", help="zero wall times in outputs")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigFailure as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (TemplateError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures from decode/model internals
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
