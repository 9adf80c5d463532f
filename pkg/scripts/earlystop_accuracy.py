"""Interval coverage and early-stop pruning/accuracy on synthetic workloads."""
import argparse

import numpy as np

from rdfinsight.bench import ci_coverage
from rdfinsight.config import RunConfig
from rdfinsight.oracle import SyntheticConfig, generate_synthetic
from rdfinsight.pipeline import Pipeline
from rdfinsight.scoring import accuracy, topk

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--trials", type=int, default=10_000)
ap.add_argument("--seeds", type=int, default=20)
ap.add_argument("--h", default="variance")
args = ap.parse_args()

print("coverage (h, kind, G)")
for h in ("variance", "skewness", "kurtosis"):
    for kind in ("mean", "sum"):
        rates = [ci_coverage(G, h, kind, trials=args.trials, seed=G) for G in (3, 10, 50)]
        print(f"  {h:9s} {kind:4s}", " ".join(f"{r:.4f}" for r in rates))

print("pruning (k, pruned fraction, accuracy)")
res = {k: ([], []) for k in (3, 5, 10)}
for seed in range(args.seeds):
    store = generate_synthetic(SyntheticConfig(3000, (20, 10, 5), 5, 0.6, seed=seed))
    full = Pipeline(store, RunConfig(h=args.h, early_stop=False, threads=1)).run()
    for k, (pr, ac) in res.items():
        es = Pipeline(store, RunConfig(k=k, h=args.h, threads=1, seed=seed)).run()
        pr.append(len(es.pruning.pruned) / es.n_specs)
        ac.append(accuracy(topk(full.scores, k), es.best))
for k, (pr, ac) in res.items():
    print(f"  k={k:2d}  {np.mean(pr):.3f}  {np.mean(ac):.3f}")
