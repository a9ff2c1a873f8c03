#!/usr/bin/env python3
"""Forest pruning on large clustered memories: visited fraction and Top-1 agreement vs beam width."""
import argparse
import random
import time

import numpy as np

from navmem.bench import clustered_memory
from navmem.retrieval import Query, flat_search, forest_search


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=5000)
    ap.add_argument("--clusters", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--queries", type=int, default=200)
    ap.add_argument("--beams", type=int, nargs="+", default=[1, 2, 4, 8])
    a = ap.parse_args()

    t0 = time.perf_counter()
    mem = clustered_memory(a.nodes, a.clusters, a.seed)
    f = mem.forest
    print(f"built {len(mem.map)} nodes, {len(f.nodes)} forest nodes, {len(f.roots)} roots, "
          f"depth {f.depth()}, max branching {f.max_branching()} "
          f"in {time.perf_counter() - t0:.1f}s")

    nodes = random.Random(a.seed).sample(mem.map.nodes, a.queries)
    print(f"{'beam':>5}{'visited frac':>14}{'top1 agree':>12}{'ms/query':>10}")
    for beam in a.beams:
        frac, agree, elapsed = [], 0, 0.0
        for node in nodes:
            q = Query(node.description, K=1, beam_width=beam)
            flat = flat_search(q, mem)
            t = time.perf_counter()
            got = forest_search(q, mem)
            elapsed += time.perf_counter() - t
            frac.append(got.visited / flat.visited)
            agree += got.top1() == flat.top1()
        print(f"{beam:>5}{np.mean(frac):>14.3f}{agree / len(nodes):>12.3f}"
              f"{1000 * elapsed / len(nodes):>10.3f}")


if __name__ == "__main__":
    main()
