#!/usr/bin/python3
"""
Benchmarks for the LAR formulations and the spacing-test p-value routes.

This script supports two benchmarking modes:

1) Path benchmarks:
   - Times the standard, projected and recursive formulations on the same
     generated instances and checks that they agree.

2) P-value benchmarks:
   - Times gst_pvalue per route (closed form, Beta shortcut, QMC) and the
     studentized QMC route, for several lattice sizes.

Results are written as CSV files to the chosen output directory.
"""

from __future__ import annotations

import argparse
import statistics
import time
from pathlib import Path
from typing import Any

import numpy as np

from conditional_law import frozen_geometry
from dataio import write_csv
from harness import draw_design, replicate_rng
from inference import VarianceSplit, gst_pvalue, gtst_pvalue
from lar_engine import FORMULATIONS, paths_agree
from model_core import DesignMatrix, ResponseVector, build_correlation_state
from quadrature import DEFAULT_SHIFTS, LatticeRule


def percentile(values: list[float], pct: float) -> float:
    """Compute a simple percentile value from a list.

    Args:
        values: List of numeric values.
        pct: Percentile to compute (0-100).

    Returns:
        The percentile value, or 0.0 for an empty input list.
    """
    if not values:
        return 0.0
    values_sorted = sorted(values)
    k = int(round((pct / 100.0) * (len(values_sorted) - 1)))
    k = max(0, min(k, len(values_sorted) - 1))
    return float(values_sorted[k])


def now_ts() -> str:
    """Return a human-readable timestamp."""
    return time.strftime("%Y-%m-%d %H:%M:%S")


def _instance(model: str, n: int, p: int, seed: int, index: int):
    rng = replicate_rng(seed, index)
    design = draw_design(model, n, p, rng)
    response = ResponseVector(rng.standard_normal(n))
    return design, response


def _timing_row(durations_ms: list[float]) -> dict[str, Any]:
    return {
        "avg_ms": statistics.mean(durations_ms),
        "p50_ms": percentile(durations_ms, 50),
        "p95_ms": percentile(durations_ms, 95),
        "min_ms": min(durations_ms),
        "max_ms": max(durations_ms),
    }


def benchmark_paths(
    model: str, n: int, p: int, steps: int, instances: int, seed: int
) -> list[dict[str, Any]]:
    """Time every formulation on the same instances.

    Returns:
        One row per formulation, with the number of instances on which all
        formulations agreed.
    """
    durations: dict[str, list[float]] = {name: [] for name in FORMULATIONS}
    agreed = 0
    for i in range(instances):
        design, response = _instance(model, n, p, seed, i)
        state = build_correlation_state(design, response)
        paths = []
        for name, fn in FORMULATIONS.items():
            t0 = time.perf_counter()
            paths.append(fn(state, steps))
            durations[name].append((time.perf_counter() - t0) * 1000.0)
        agreed += paths_agree(paths)

    return [
        {
            "ts": now_ts(),
            "formulation": name,
            "design_model": model,
            "n": n,
            "p": p,
            "steps": steps,
            "instances": instances,
            "agreed": agreed,
            **_timing_row(durations[name]),
        }
        for name in FORMULATIONS
    ]


def benchmark_pvalues(
    n_points: int, triples: list[tuple[int, int, int]], repeats: int, seed: int
) -> list[dict[str, Any]]:
    """Time gst_pvalue and gtst_pvalue on a sphere-columns null instance."""
    n, p, K = 100, 150, max(c for _, _, c in triples) - 1
    design, response = _instance("sphere-columns", n, p, seed, 0)
    state = build_correlation_state(design, response)
    path = FORMULATIONS["recursive"](state, K + 1)
    geometry = frozen_geometry(state, path, 1.0)
    split = VarianceSplit(sigma_select=1.0, sigma_test=1.0, n1=50, n2=49)
    rule = LatticeRule.korobov(1, n_points=n_points, n_shifts=DEFAULT_SHIFTS, seed=seed)

    ortho = DesignMatrix(np.eye(n))
    ortho_state = build_correlation_state(ortho, response)
    ortho_path = FORMULATIONS["recursive"](ortho_state, K + 1)
    ortho_geometry = frozen_geometry(ortho_state, ortho_path, 1.0)

    rows = []
    cases = [
        ("gst", path, lambda t: gst_pvalue(path, geometry, 1.0, *t, rule)),
        (
            "gst-orthogonal",
            ortho_path,
            lambda t: gst_pvalue(ortho_path, ortho_geometry, 1.0, *t, rule),
        ),
        ("gtst", path, lambda t: gtst_pvalue(path, geometry, split, *t, rule)),
    ]
    for label, case_path, fn in cases:
        if len(case_path) < K + 1 or case_path.irrepresentable_upto < K:
            continue
        for t in triples:
            durations_ms = []
            report = None
            for _ in range(repeats):
                t0 = time.perf_counter()
                report = fn(t)
                durations_ms.append((time.perf_counter() - t0) * 1000.0)
            rows.append(
                {
                    "ts": now_ts(),
                    "test": label,
                    "triple": "-".join(str(v) for v in t),
                    "method": report.method,
                    "n_points": n_points,
                    "p_value": report.p_value,
                    "std_error": report.qmc.std_error if report.qmc else 0.0,
                    **_timing_row(durations_ms),
                }
            )
    return rows


def parse_args() -> argparse.Namespace:
    """Parse CLI arguments for benchmarking.

    Returns:
        Parsed command-line arguments.
    """
    p = argparse.ArgumentParser(
        description="Benchmark LAR formulations and p-value routes."
    )
    p.add_argument(
        "--outdir",
        default="benchmarks/results",
        help="Output directory for CSV results.",
    )
    p.add_argument("--mode", choices=["path", "pvalue", "both"], default="both")
    p.add_argument(
        "--sizes",
        default="50x80,100x150,100x1000",
        help="Comma-separated n x p shapes for path benchmarks.",
    )
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument(
        "--points",
        default="1021,4093,16381",
        help="Comma-separated lattice sizes for p-value benchmarks.",
    )
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--verbose",
        action="store_true",
        help="Print progress updates.",
    )
    return p.parse_args()


def main() -> None:
    """Run benchmarks and write CSV outputs."""
    args = parse_args()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    path_rows: list[dict[str, Any]] = []
    pvalue_rows: list[dict[str, Any]] = []

    if args.mode in {"path", "both"}:
        for shape in args.sizes.split(","):
            n, p = (int(v) for v in shape.strip().split("x"))
            if args.verbose:
                print(f"path: n={n} p={p}", flush=True)
            path_rows.extend(
                benchmark_paths(
                    "sphere-columns", n, p, args.steps, args.instances, args.seed
                )
            )

    if args.mode in {"pvalue", "both"}:
        triples = [(0, 1, 2), (1, 2, 3), (0, 2, 3), (0, 1, 4), (1, 2, 5)]
        for n_points in (int(v) for v in args.points.split(",") if v.strip()):
            if args.verbose:
                print(f"pvalue: n_points={n_points}", flush=True)
            pvalue_rows.extend(
                benchmark_pvalues(n_points, triples, args.repeats, args.seed)
            )

    write_csv(outdir / "results_path.csv", path_rows)
    write_csv(outdir / "results_pvalue.csv", pvalue_rows)
    print(f"Wrote results to: {outdir}", flush=True)


if __name__ == "__main__":
    main()
