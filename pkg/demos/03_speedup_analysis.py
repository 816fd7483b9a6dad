"""Walkthrough: benchmark records, the speedup identity, and latency linearity.

Runs the three decoders over a handful of synthetic prompts and inspects the
two relationships that make pass counts the portable latency proxy:

  - pass-count speedup over the autoregressive schedule equals the average
    parallel degree exactly (a rational identity on shared realized lengths);
  - wall time grows linearly with the number of sequential passes, so the
    critical path, not the token total, is what latency tracks.

Run:  python3 demos/03_speedup_analysis.py
"""

import numpy as np

import parcot
from parcot.analysis import CSV_HEADER
from parcot.configs import av_graph_path, av_template_path

template = parcot.load_template(av_template_path().read_text(encoding="utf-8"))
graph = parcot.load_graph(av_graph_path().read_text(encoding="utf-8"), template)
model = parcot.ReferenceTransformer(vocab_size=template.vocab_size, seed=0)

# --- a small benchmark over seeded synthetic prompts ---------------------------
rng = np.random.default_rng(42)
layout = parcot.build_layout(template)
cap = layout.prompt_span.length
prompts = [
    [int(t) for t in rng.integers(0, template.vocab_size, size=int(rng.integers(1, cap + 1)))]
    for _ in range(5)
]
records = parcot.collect_runs(template, graph, model, prompts)

print(",".join(CSV_HEADER))
for r in records:
    print(
        f"{r.pass_count},{r.total_generated},{r.critical_path_tokens},"
        f"{r.parallel_degree:.6f},{r.speedup:.6f},"
        f"{r.wall_time_parallel_ns},{r.wall_time_ar_ns}"
    )

mean_speedup = sum(r.speedup for r in records) / len(records)
print(f"\nmean pass-count speedup: {mean_speedup:.2f}x")
print("speedup == parallel degree on every record:",
      all(r.speedup == r.parallel_degree for r in records))
print("pass count == critical path on every record:",
      all(r.pass_count == r.critical_path_tokens for r in records))

# --- latency vs critical path ---------------------------------------------------
# Cap the slot capacities to produce templates with shorter critical paths,
# then time real decodes at each size: wall time should fall on a line in the
# pass count. (Numbers are machine-dependent; the slope is the per-pass cost.)
from dataclasses import replace

from parcot import TemplateSpec
from parcot.analysis import RunRecord, fit_latency

measured = []
for frac in (0.25, 0.5, 0.75, 1.0):
    capped = TemplateSpec(
        prompt_tokens=template.prompt_tokens,
        fields=tuple(replace(f, max_len=max(1, int(f.max_len * frac))) for f in template.fields),
        vocab_size=template.vocab_size,
    )
    result = parcot.decode_parallel(capped, graph, model)
    measured.append(
        RunRecord(
            prompt_index=len(measured),
            critical_path_tokens=result.pass_count,
            pass_count=result.pass_count,
            total_generated=result.total_generated,
            autoregressive_passes=result.total_generated,
            wall_time_parallel_ns=result.wall_ns["total_ns"],
            wall_time_ar_ns=0,
            wall_time_oracle_ns=0,
        )
    )
    print(f"slots x{frac:.2f}: {result.pass_count:3d} passes, "
          f"{result.wall_ns['total_ns'] / 1e6:7.1f} ms")

fit = fit_latency(measured)
print(f"\nlinear fit: {fit.slope / 1e6:.2f} ms per pass, "
      f"intercept {fit.intercept / 1e6:.1f} ms, R^2 = {fit.r_squared:.3f}")
