"""Time the cube engine against per-node naive evaluation as the fact count grows."""
import argparse

import numpy as np

from rdfinsight.bench import compare_node_eval, cube_eval, synthetic_workload
from rdfinsight.oracle import SyntheticConfig

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--sizes", default="10000,50000,100000")
ap.add_argument("--extents", default="100:5:2")
ap.add_argument("--measures", type=int, default=15)
ap.add_argument("--sparsity", type=float, default=0.5)
ap.add_argument("--naive", action="store_true", help="also time naive evaluation (slow)")
args = ap.parse_args()

sizes = [int(x) for x in args.sizes.split(",")]
extents = tuple(int(x) for x in args.extents.split(":"))
times = []
print("facts  mvdcube_s  naive_s  equal")
for n in sizes:
    sc = SyntheticConfig(n, extents, args.measures, args.sparsity, seed=0)
    if args.naive:
        r = compare_node_eval(sc)
        times.append(r["mvdcube"])
        print(f"{n:6d}  {r['mvdcube']:9.3f}  {r['naive']:7.2f}  {r['equal']}")
    else:
        idx, cfs, dims, ms = synthetic_workload(sc)
        t = cube_eval(idx, cfs, dims, ms).seconds
        times.append(t)
        print(f"{n:6d}  {t:9.3f}")
if len(sizes) > 1:
    print("fitted exponent:", round(float(np.polyfit(np.log(sizes), np.log(times), 1)[0]), 3))
