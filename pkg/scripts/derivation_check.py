"""Count lattice nodes that parent derivation gets right on adversarial tables,
and check the buffer-memory cap of the spanning tree."""
import itertools

from rdfinsight.cube import build_mmst, memory_bound
from rdfinsight.oracle import adversarial_table, count_correct_nodes, simulate_parent_derivation

print("N K expected observed(count) observed(sum)")
for n in range(1, 5):
    for k in range(n + 1):
        dims, table = adversarial_table(n, k, 300, seed=n * 7 + k)
        got = []
        for fn in ("count", "sum"):
            _, rep = simulate_parent_derivation(dims, "m", fn, table)
            got.append(len(rep.correct_nodes))
        print(n, k, count_correct_nodes(n, k), *got)

worst = 0.0
for n, d, c in itertools.product(range(1, 6), range(1, 30), range(1, 20)):
    worst = max(worst, build_mmst((d,) * n, c).total_cells / memory_bound(n, d, c))
print(f"largest tree cells / bound ratio: {worst:.3f}")
