#!/usr/bin/env python3
"""Ablation table: full pipeline against variants with one component removed."""
import argparse
from pathlib import Path

from navmem.bench import (
    ABLATIONS, BenchParams, MemoryCache, export_results, generate_benchmark, run_ablations,
    run_retrieval_bench,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[42])
    ap.add_argument("--cases", type=int, default=14)
    ap.add_argument("--out-dir", default="results/ablations")
    a = ap.parse_args()

    all_records = []
    print(f"{'seed':>5} {'variant':<12}{'top1':>7}{'SR':>7}{'dist m':>9}{'visited':>9}")
    for seed in a.seeds:
        suite = generate_benchmark(BenchParams(n_cases=a.cases), seed)
        mem = MemoryCache()
        nav = run_ablations(suite, memories=mem, suite_name=f"decoy-{seed}")
        top1 = {r.config: r.top1_accuracy
                for r in run_retrieval_bench(suite, ABLATIONS, repeats=1, memories=mem)}
        for r in nav:
            dist = "-" if r.travel_distance_m is None else f"{r.travel_distance_m:.2f}"
            print(f"{seed:>5} {r.config:<12}{top1[r.config]:>7.3f}{r.success_rate:>7.3f}"
                  f"{dist:>9}{r.nodes_visited:>9.1f}")
        all_records += nav

    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_results(all_records, out / "ablations.csv")
    print(f"wrote {out}/ablations.csv")


if __name__ == "__main__":
    main()
