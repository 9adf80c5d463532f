"""Cube engine versus the naive evaluator: equality checks and timings."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attributes import Attribute, AttributeIndex
from .config import RunConfig
from .earlystop import interestingness, interval_arrays, z_value
from .cube import (MMST, AggregateResult, AuditReport, CellArray, EvalTrace, build_mmst,
                   encode_dimension, evaluate, onepass_audit, schedule_flushes, translate)
from .enumeration import FUNCTIONS
from .graph_store import CandidateFactSet, TripleStore, select_cfs
from .oracle import (FactTable, SyntheticConfig, adversarial_table, fact_table, generate_synthetic,
                     naive_eval, naive_eval_node, simulate_parent_derivation)
from .pipeline import Pipeline

ResultKey = tuple[tuple[str, ...], str, str]  # (node dims, measure, function)


@dataclass
class CubeRun:
    results: dict[ResultKey, dict[tuple, float]]
    tree: MMST
    array: CellArray
    trace: EvalTrace
    audit: AuditReport
    seconds: float
    timing: dict[str, float] = field(default_factory=dict)


def cube_eval(index: AttributeIndex, cfs: CandidateFactSet, dims: Sequence[Attribute],
              measures: Sequence[Attribute], functions: Optional[dict[str, Sequence[str]]] = None,
              c: int = 16, check_bitmaps: bool = False) -> CubeRun:
    """Every non-apex node of the lattice over ``dims`` for every measure."""
    t0 = time.perf_counter()
    timing = {}
    dense = {m.name: index.preagg(cfs, m).dense(index.store.num_facts) for m in measures}
    values = [index.values(d).restrict(cfs.members) for d in dims]
    encs = [encode_dimension(v) for v in values]
    t1 = time.perf_counter()
    tree = build_mmst([e.extent for e in encs], c)
    t2 = time.perf_counter()
    encs, array = translate(values, tree.c, encs)
    schedule_flushes(tree, [p[0] for p in array.partitions])
    t3 = time.perf_counter()
    names = [d.name for d in dims]
    node_specs = {}
    for node in tree.nodes:
        if not node.dims:
            continue
        nd = tuple(names[i] for i in node.dims)
        node_specs[node.dims] = [((nd, m.name, f), m.name, f) for m in measures
                                 for f in (functions or {}).get(m.name, _functions(m))]
    chunks: dict[ResultKey, list[AggregateResult]] = {}
    trace = evaluate(tree, array, node_specs, dense, lambda r: chunks.setdefault(r.spec, []).append(r),
                     encs, names, check_bitmaps=check_bitmaps)
    audit = onepass_audit(trace, tree)
    results = {}
    for key, parts in chunks.items():
        d = {}
        for r in parts:
            d.update(r.rows())
        results[key] = d
    t4 = time.perf_counter()
    timing.update(preagg=t1 - t0, mmst=t2 - t1, translate=t3 - t2, evaluate=t4 - t3)
    return CubeRun(results, tree, array, trace, audit, t4 - t0, timing)


def _functions(m: Attribute) -> Sequence[str]:
    return FUNCTIONS if m.value_kind == "numeric" else ("count",)


def naive_nodes(table: FactTable, dims: Sequence[str], specs: Sequence[tuple[str, str]]
                ) -> dict[ResultKey, dict[tuple, float]]:
    """Naive evaluation of each non-apex node separately."""
    import itertools
    out = {}
    for k in range(len(dims), 0, -1):
        for node in itertools.combinations(dims, k):
            for (m, f), res in naive_eval_node(node, specs, table).items():
                out[(node, m, f)] = res
    return out


def same_results(a: dict[tuple, float], b: dict[tuple, float], function: str, rel: float = 1e-9) -> bool:
    if set(a) != set(b):
        return False
    for g, x in a.items():
        y = b[g]
        if function == "avg":
            if not math.isclose(x, y, rel_tol=rel, abs_tol=0.0):
                return False
        elif x != y:
            return False
    return True


def synthetic_workload(sc: SyntheticConfig) -> tuple[AttributeIndex, CandidateFactSet, list[Attribute],
                                                     list[Attribute]]:
    store = generate_synthetic(sc)
    index = AttributeIndex(store)
    by_name = {a.name: a for a in index.direct_attributes()}
    dims = [by_name[f"d{i}"] for i in range(sc.n)]
    measures = [by_name[f"m{j}"] for j in range(sc.n_measures)]
    return index, select_cfs(store, "type", "Fact"), dims, measures


def compare_node_eval(sc: SyntheticConfig, c: int = 16, check: bool = True) -> dict:
    """Wall-clock of the cube engine and of per-node naive evaluation on one lattice."""
    index, cfs, dims, measures = synthetic_workload(sc)
    cube = cube_eval(index, cfs, dims, measures, c=c)
    table = fact_table(index, cfs, dims + measures)
    specs = [(m.name, f) for m in measures for f in _functions(m)]
    t0 = time.perf_counter()
    naive = naive_nodes(table, [d.name for d in dims], specs)
    t_naive = time.perf_counter() - t0
    equal = None
    if check:
        equal = set(naive) == set(cube.results) and all(
            same_results(cube.results[k], naive[k], k[2]) for k in naive)
    return {"mvdcube": cube.seconds, "naive": t_naive, "specs": len(naive), "equal": equal,
            "timing": cube.timing}


def error_report_rows(n_facts: int, n_dims: int, seed: int = 0) -> list[tuple[str, tuple, str, float]]:
    """Per-group ratio of parent-derived to correct values on an adversarial table."""
    dims, table = adversarial_table(n_dims, min(2, n_dims), n_facts, seed)
    rows = []
    for mode in ("star", "distinct"):
        for fn in ("count", "sum", "avg"):
            _, rep = simulate_parent_derivation(dims, "m", fn, table, mode)
            for node, err in rep.nodes.items():
                for r in err.ratios.values():
                    rows.append((mode, node, fn, r))
    return rows


def oracle_check(store: TripleStore, cfg: RunConfig) -> dict:
    """Evaluate every enumerated aggregate with the cube engine and the naive evaluator."""
    pipe = Pipeline(store, cfg.replace(early_stop=False))
    checked, bad = 0, []
    for cfs in pipe.select():
        plan = pipe.plan(cfs)
        table = fact_table(pipe.index, cfs, plan.attrs.values())
        for lat in plan.lattices:
            prep = pipe.prepare(plan, lat)
            got: dict[tuple, dict] = {}

            def sink(r: AggregateResult, got=got) -> None:
                got.setdefault(r.spec.key, {}).update(r.rows())

            names = [d.name for d in lat.dims]
            ns = pipe.node_specs(prep, set())
            ns = {k: v for k, v in ns.items() if k}
            dense = {m: pipe.dense(cfs, plan.attrs[m]) for specs in ns.values() for _, m, _ in specs}
            evaluate(prep.tree, prep.array, ns, dense, sink, prep.encodings, names)
            for node, specs in ns.items():
                nd = tuple(names[i] for i in node)
                for spec, m, f in specs:
                    checked += 1
                    want = naive_eval(nd, m, f, table)
                    if not same_results(got.get(spec.key, {}), want, f):
                        bad.append(spec.label)
    return {"checked_specs": checked, "mismatched_specs": len(bad), "mismatches": bad}


# ------------------------------------------------------------ confidence interval coverage

def _populations(G: int, rng: np.random.Generator, sizes: tuple[int, int] = (200, 400)) -> list[np.ndarray]:
    c = rng.integers(sizes[0], sizes[1] + 1, size=G)
    offsets = rng.uniform(0, 100, size=G)
    return [offsets[j] + rng.gamma(2.0, 10.0, size=c[j]) for j in range(G)]


def ci_coverage(G: int, h: str, kind: str = "mean", trials: int = 10_000, r: int = 60,
                alpha: float = 0.05, seed: int = 0) -> float:
    """Share of Monte-Carlo trials whose interval covers the population value.

    Each of ``G`` groups is a fixed skewed population of 200-400 values; every
    trial draws ``r`` values per group without replacement. ``kind`` is "mean"
    (avg aggregates) or "sum" (sum aggregates)."""
    rng = np.random.default_rng(seed)
    pops = _populations(G, rng)
    c = np.array([len(p) for p in pops], dtype=np.float64)
    mu = np.array([p.mean() for p in pops])
    means = np.empty((trials, G))
    var = np.empty((trials, G))
    for j, p in enumerate(pops):
        idx = np.argpartition(rng.random((trials, len(p))), r, axis=1)[:, :r]
        s = p[idx]
        means[:, j] = s.mean(axis=1)
        var[:, j] = s.var(axis=1, ddof=1)
    fpc = 1.0 - r / c
    if kind == "sum":
        y, vy, pop = c * means, c * c * var / r * fpc, c * mu
    elif kind == "mean":
        y, vy, pop = means, var / r * fpc, mu
    else:
        raise ValueError(kind)
    truth = float(interestingness(pop[None], h)[0])
    val, eps = interval_arrays(y, vy, h, z_value(alpha))
    lo, hi = val - eps, val + eps
    if h == "skewness":
        # intervals and truth on the magnitude scale used for ranking
        straddle = (lo <= 0) & (hi >= 0)
        lo, hi = (np.where(straddle, 0.0, np.minimum(abs(lo), abs(hi))),
                  np.maximum(abs(lo), abs(hi)))
        truth = abs(truth)
    return float(np.mean((lo <= truth) & (truth <= hi)))
