"""Walkthrough: the structured template, its dependency graph, and schedule planning.

Loads the shipped driving-scene configs, shows how fields and dependencies are
declared, and plans the decode schedule before touching any model: the pass
count of the eventual decode is exactly the critical path of the per-field
token counts, so a template design can be evaluated before any model runs.

Run:  python3 demos/01_template_and_schedule.py
"""

import parcot
from parcot.configs import av_graph_path, av_template_path

# --- load the shipped configs ------------------------------------------------
template = parcot.load_template(av_template_path().read_text(encoding="utf-8"))
graph = parcot.load_graph(av_graph_path().read_text(encoding="utf-8"), template)

print(f"template: {template.num_fields} fields, vocab {template.vocab_size}")
print(f"graph: {len(graph.edges)} edges, {len(parcot.sources(graph))} source fields\n")

print("fields (prefix tokens are fixed; slots hold generated tokens):")
for i, field in enumerate(template.fields):
    deps = [template.fields[a].name for a in sorted(graph.ancestors(i)) if (a, i) in graph.edges]
    dep_note = f"  <- {', '.join(deps)}" if deps else ""
    print(f"  {field.name:32s} slot {field.max_len:3d}{dep_note}")

# --- critical path: the lower bound on forward passes ------------------------
max_lens = [f.max_len for f in template.fields]
cp_len, cp_path = parcot.critical_path(graph, max_lens)
names = template.field_names()
print(f"\ncritical path at full slots: {cp_len} tokens")
print("  " + " -> ".join(names[i] for i in cp_path))

total = sum(max_lens)
cp_expected, degree = parcot.plan_expected(template, graph)
print(f"total generated tokens: {total}")
print(f"expected passes: {cp_expected}, expected parallel degree {degree:.2f}")
print(f"(an autoregressive decode would need {total} passes)\n")

# --- what-if planning: shorter realized lengths -------------------------------
half = {f.name: max(1, f.max_len // 2) for f in template.fields}
cp_half, degree_half = parcot.plan_expected(template, graph, half)
print(f"with half-full slots: passes {cp_half}, degree {degree_half:.2f}")
mc_cp, mc_degree = parcot.plan_monte_carlo(template, graph, samples=500, seed=0)
print(f"Monte Carlo over uniform lengths: mean passes {mc_cp:.1f}, mean degree {mc_degree:.2f}\n")

# --- dry-run the schedule (no model): per-pass ready sets --------------------
lengths = [max(1, f.max_len // 2) for f in template.fields]
trace = parcot.simulate_schedule(graph, template, lengths)
print(f"schedule dry-run at half lengths: {len(trace)} passes")
for record in trace[:6]:
    done = f"  completed: {', '.join(record['completed'])}" if record["completed"] else ""
    print(f"  pass {record['pass']:3d}: {len(record['fields']):2d} fields in flight{done}")
print("  ...")
for record in trace[-2:]:
    done = f"  completed: {', '.join(record['completed'])}" if record["completed"] else ""
    print(f"  pass {record['pass']:3d}: {len(record['fields']):2d} fields in flight{done}")
