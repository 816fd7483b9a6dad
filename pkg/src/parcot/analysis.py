"""Run-level analysis: pass counts vs critical path, speedup vs parallelism,
and a linear latency fit.

Pass-count quantities are exact and gating; wall-clock numbers are measured
on whatever machine runs the suite and are reported, not asserted.

autoregressive_passes is the pass count a one-token-per-pass schedule needs
for the same realized content (= total_generated), so per record the
pass-count speedup equals the average parallel degree as an exact rational
identity. The free-running autoregressive decoder is still executed for its
wall time; its own realized lengths can differ since it sees more context.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .engine import decode_autoregressive, decode_oracle, decode_parallel
from .graph import DependencyGraph, critical_path
from .template import TemplateSpec


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    """Per-prompt measurements across the three decoders."""

    prompt_index: int
    critical_path_tokens: int
    pass_count: int
    total_generated: int
    autoregressive_passes: int
    wall_time_parallel_ns: int
    wall_time_ar_ns: int
    wall_time_oracle_ns: int

    @property
    def parallel_degree(self) -> float:
        return self.total_generated / self.pass_count

    @property
    def speedup(self) -> float:
        return self.autoregressive_passes / self.pass_count


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def collect_runs(
    template: TemplateSpec,
    graph: DependencyGraph,
    model,
    prompts: Sequence[Sequence[int]],
) -> list[RunRecord]:
    """Decode every prompt with all three decoders and record one row each.

    Prompts are independent; records come back ordered by prompt index.
    """
    if not prompts:
        raise AnalysisError("need at least one prompt")
    records: list[RunRecord] = []
    for i, prompt in enumerate(prompts):
        try:
            par = decode_parallel(template, graph, model, prompt)
            ar = decode_autoregressive(template, graph, model, prompt)
            orc = decode_oracle(template, graph, model, prompt)
        except Exception as exc:
            raise AnalysisError(f"prompt {i}: {exc}") from exc
        realized = [par.realized_lengths[f.name] for f in template.fields]
        cp_len, _ = critical_path(graph, realized)
        records.append(
            RunRecord(
                prompt_index=i,
                critical_path_tokens=int(cp_len),
                pass_count=par.pass_count,
                total_generated=par.total_generated,
                autoregressive_passes=par.total_generated,
                wall_time_parallel_ns=par.wall_ns["total_ns"],
                wall_time_ar_ns=ar.wall_ns["total_ns"],
                wall_time_oracle_ns=orc.wall_ns["total_ns"],
            )
        )
    return records


def fit_latency(
    records: Sequence[RunRecord],
    y_attr: str = "wall_time_parallel_ns",
) -> LinearFit:
    """Ordinary least squares of wall time against pass count."""
    if len(records) < 2:
        raise AnalysisError(f"need at least 2 records to fit, got {len(records)}")
    x = np.array([r.pass_count for r in records], dtype=np.float64)
    y = np.array([getattr(r, y_attr) for r in records], dtype=np.float64)
    if np.all(x == x[0]):
        raise AnalysisError("degenerate design: all pass counts equal")
    xc = x - x.mean()
    yc = y - y.mean()
    slope = float((xc * yc).sum() / (xc * xc).sum())
    intercept = float(y.mean() - slope * x.mean())
    ss_res = float(((y - (slope * x + intercept)) ** 2).sum())
    ss_tot = float((yc * yc).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return LinearFit(slope=slope, intercept=intercept, r_squared=min(max(r2, 0.0), 1.0))


def _length_vector(
    template: TemplateSpec, lengths: Mapping[str, float] | Sequence[float] | None
) -> list[float]:
    if lengths is None:
        return [f.max_len for f in template.fields]
    if isinstance(lengths, Mapping):
        missing = [f.name for f in template.fields if f.name not in lengths]
        if missing:
            raise AnalysisError(f"missing lengths for fields: {missing}")
        return [lengths[f.name] for f in template.fields]
    if len(lengths) != template.num_fields:
        raise AnalysisError(
            f"{len(lengths)} lengths for {template.num_fields} fields"
        )
    return list(lengths)


def plan_expected(
    template: TemplateSpec,
    graph: DependencyGraph,
    lengths: Mapping[str, float] | Sequence[float] | None = None,
) -> tuple[float, float]:
    """Design-time what-if: critical path and parallel degree at the given
    per-field expected token counts (default: every slot filled to max_len).

    This evaluates the schedule at the expectation point; it is not the
    expectation of the critical path over a length distribution. Use
    plan_monte_carlo for a sampled estimate.
    """
    vec = _length_vector(template, lengths)
    cp_len, _ = critical_path(graph, vec)
    total = sum(vec)
    degree = total / cp_len if cp_len else 0.0
    return cp_len, degree


def plan_monte_carlo(
    template: TemplateSpec,
    graph: DependencyGraph,
    mean_lengths: Mapping[str, float] | Sequence[float] | None = None,
    samples: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """Sampled (mean critical path, mean parallel degree) under per-field
    lengths drawn uniformly from [1, min(max_len, 2*mean - 1)]."""
    means = _length_vector(template, mean_lengths)
    rng = np.random.default_rng(seed)
    highs = [
        max(1, min(f.max_len, int(round(2 * m)) - 1))
        for f, m in zip(template.fields, means)
    ]
    cp_sum = 0.0
    degree_sum = 0.0
    for _ in range(samples):
        draw = [int(rng.integers(1, h + 1)) for h in highs]
        cp_len, _ = critical_path(graph, draw)
        cp_sum += cp_len
        degree_sum += sum(draw) / cp_len
    return cp_sum / samples, degree_sum / samples


CSV_HEADER = [
    "pass_count",
    "total_generated",
    "critical_path",
    "parallel_degree",
    "speedup",
    "wall_time_parallel_ns",
    "wall_time_ar_ns",
]


def write_csv(records: Sequence[RunRecord], path: str | Path, include_timing: bool = True) -> None:
    """One row per prompt with the fixed benchmark header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.pass_count,
                    r.total_generated,
                    r.critical_path_tokens,
                    f"{r.parallel_degree:.6f}",
                    f"{r.speedup:.6f}",
                    r.wall_time_parallel_ns if include_timing else 0,
                    r.wall_time_ar_ns if include_timing else 0,
                ]
            )


def summarize(records: Sequence[RunRecord], include_timing: bool = True) -> dict:
    """Means and min/max over the benchmark columns, JSON-ready."""
    cols: dict[str, list[float]] = {
        "pass_count": [r.pass_count for r in records],
        "total_generated": [r.total_generated for r in records],
        "critical_path": [r.critical_path_tokens for r in records],
        "parallel_degree": [r.parallel_degree for r in records],
        "speedup": [r.speedup for r in records],
    }
    if include_timing:
        cols["wall_time_parallel_ns"] = [r.wall_time_parallel_ns for r in records]
        cols["wall_time_ar_ns"] = [r.wall_time_ar_ns for r in records]
    return {
        "records": len(records),
        "mean": {k: sum(v) / len(v) for k, v in cols.items()},
        "min": {k: min(v) for k, v in cols.items()},
        "max": {k: max(v) for k, v in cols.items()},
    }


def write_summary(records: Sequence[RunRecord], path: str | Path, include_timing: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summarize(records, include_timing), fh, indent=2, sort_keys=True)
        fh.write("\n")
