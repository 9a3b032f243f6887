#!/usr/bin/env python3
"""Allocate a multi-head workload onto quad64x64 with the genetic algorithm.

Prints the per-generation best fitness, the final layer-to-core map and the
resulting per-core memory peaks, for eyeballing how head placement evolves.
"""

import argparse

from attnsched.allocator import GAConfig, genetic_search
from attnsched.depgraph import fine_grained_graph, uniform_split_plan
from attnsched.hwmodel import load_builtin
from attnsched.scheduler import schedule_template
from attnsched.workload import build_mhsa


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-M", type=int, default=64)
    ap.add_argument("-N", type=int, default=64)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--population", type=int, default=64)
    ap.add_argument("--generations", type=int, default=100)
    ap.add_argument("--objective", default="weighted",
                    choices=("latency", "energy", "peak_memory", "weighted"))
    args = ap.parse_args()

    hw = load_builtin("quad64x64")
    g = build_mhsa(args.M, args.N, args.heads)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=8))
    cfg = GAConfig(
        population=args.population,
        generations=args.generations,
        seed=args.seed,
        objective=args.objective,
    )
    out = genetic_search(ng, hw, cfg)

    log = out.best_per_generation
    marks = [0, len(log) // 4, len(log) // 2, 3 * len(log) // 4, len(log) - 1]
    print("best fitness:", " -> ".join(f"g{i}:{log[i]:.4g}" for i in marks))
    print(f"evaluations: {out.evaluations}")
    mk, energy, peak = out.metrics
    print(f"makespan {mk:g} cycles, energy {energy:.0f}, worst core peak {peak} words")
    for h in range(args.heads):
        lids = [l.id for l in g.layers if l.id.startswith(f"h{h}.")]
        print(f"  h{h}: " + " ".join(f"{lid.split('.')[1]}={out.allocation[lid]}" for lid in lids))

    run = schedule_template(g, hw, "lbl_memory_optimal", alloc=out.allocation)
    print("per-core LBL peaks:", dict(sorted(run.trace.per_core_peak.items())))


if __name__ == "__main__":
    main()
