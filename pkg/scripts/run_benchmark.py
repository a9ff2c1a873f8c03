#!/usr/bin/env python3
"""Retrieval and navigation benchmark on the decoy suite.

Prints a table and writes CSV/JSON results plus the suite to --out-dir.
"""
import argparse
from pathlib import Path

from navmem.bench import (
    DEFAULT_RETRIEVERS, BenchParams, MemoryCache, PlannerConfig, export_results,
    generate_benchmark, harness_neutral, run_navigation_bench, run_retrieval_bench,
    write_suite,
)


def fmt(v, spec):
    return "-" if v is None else format(v, spec)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--cases", type=int, default=14)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--lams", type=float, nargs="+", default=[0.0, 1.0, 5.0])
    ap.add_argument("--out-dir", default="results/benchmark")
    a = ap.parse_args()

    suite = generate_benchmark(BenchParams(n_cases=a.cases), a.seed)
    mem = MemoryCache()
    records = run_retrieval_bench(suite, DEFAULT_RETRIEVERS, a.repeats, memories=mem)
    records += run_navigation_bench(suite, [PlannerConfig(f"lam{l:g}", l) for l in a.lams],
                                    "full", memories=mem)
    records += run_navigation_bench(suite, [PlannerConfig()], "oracle", memories=mem)

    print(f"{'config':<16}{'top1':>7}{'ms':>9}{'visited':>9}{'SR':>7}{'dist m':>9}{'pen':>7}")
    for r in records:
        print(f"{r.config:<16}{fmt(r.top1_accuracy, '.3f'):>7}{fmt(r.retrieval_time_ms, '.3f'):>9}"
              f"{fmt(r.nodes_visited, '.1f'):>9}{fmt(r.success_rate, '.3f'):>7}"
              f"{fmt(r.travel_distance_m, '.2f'):>9}{fmt(r.semantic_penalty, '.2f'):>7}")
    print("harness neutral:", harness_neutral(suite, mem))

    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_suite(suite, out / "suite.jsonl")
    export_results(records, out / "benchmark.csv")
    export_results(records, out / "benchmark.json")
    print(f"wrote {out}/benchmark.csv, benchmark.json, suite.jsonl")


if __name__ == "__main__":
    main()
