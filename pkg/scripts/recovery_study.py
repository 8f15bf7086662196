#!/usr/bin/env python3
"""Family-recovery study over many seeds.

For each seed, generates planted-family vectors for several simulated runs,
pushes them through distance matrices, aggregation, classical MDS, and
k-means, and scores the recovered partition against the planted one. Prints
the fraction of seeds with perfect recovery plus runtime statistics.
"""

import argparse
import statistics
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from langgeo.clustering import adjusted_rand_index, kmeans
from langgeo.mds import torgerson
from langgeo.metricspace import aggregate, distance_matrix
from langgeo.synth import SyntheticSpec, synth_generate


def one_seed(seed, args):
    spec = SyntheticSpec(
        families=args.families,
        members_per_family=args.members,
        n_bits=args.bits,
        p_proto=args.p_proto,
        p_member=args.p_member,
        seed=seed,
    )
    matrices = []
    truth = None
    for run in range(args.runs):
        vectors, truth = synth_generate(
            spec, model_tag=f"m{run}", corpus_tag="c", run=run
        )
        matrices.append(distance_matrix(vectors))
    combined = aggregate(matrices, sorted(truth.assignment))
    emb = torgerson(combined)
    predicted = kmeans(emb, args.families, seed=seed, restarts=args.restarts)
    return adjusted_rand_index(predicted, truth)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--families", type=int, default=4)
    parser.add_argument("--members", type=int, default=8)
    parser.add_argument("--bits", type=int, default=65536)
    parser.add_argument("--p-proto", type=float, default=0.25)
    parser.add_argument("--p-member", type=float, default=0.02)
    parser.add_argument("--runs", type=int, default=3)
    parser.add_argument("--restarts", type=int, default=10)
    parser.add_argument("--seeds", type=int, default=100)
    args = parser.parse_args()

    aris = []
    times = []
    for seed in range(args.seeds):
        started = time.time()
        aris.append(one_seed(seed, args))
        times.append(time.time() - started)

    perfect = sum(1 for a in aris if a == 1.0)
    print(f"perfect recovery: {perfect}/{args.seeds} seeds")
    print(f"ARI: min {min(aris):.4f}  mean {statistics.mean(aris):.4f}")
    print(
        f"runtime per seed: median {statistics.median(times):.3f}s  "
        f"max {max(times):.3f}s"
    )


if __name__ == "__main__":
    main()
