"""Reference evaluators, parent-derivation error simulation and synthetic data.

Everything here is deliberately plain Python: the naive evaluator is the
ground truth the cube engine is checked against.
"""
from __future__ import annotations

import itertools
import logging
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .attributes import Attribute, AttributeIndex
from .graph_store import IRI, LITERAL, RDF_TYPE, CandidateFactSet, PropertyTable, Term, TripleStore

log = logging.getLogger(__name__)

# fact id -> attribute name -> list of values: (lexical, hint) keys, or plain
# floats for hand-built tables
FactTable = dict[int, dict[str, list]]


def fact_table(index: AttributeIndex, cfs: CandidateFactSet, attrs: Iterable[Attribute]) -> FactTable:
    members = set(cfs.members.tolist())
    table: FactTable = {f: {} for f in sorted(members)}
    for a in attrs:
        v = index.values(a)
        for f, code in zip(v.facts.tolist(), v.codes.tolist()):
            if f in members:
                table[f].setdefault(a.name, []).append(v.vocab[code])
    return table


def _numbers(vals: list) -> Optional[list[float]]:
    """Measure values as floats, or None when some value is not numeric."""
    out = []
    for x in vals:
        if isinstance(x, tuple):
            lex, hint = x
            if hint not in ("integer", "decimal"):
                return None
            try:
                x = float(lex)
            except ValueError:
                return None
            if math.isnan(x):
                return None
        out.append(float(x))
    return out


def _aggregate(function: str, fact_values: list[list[float]]) -> float:
    if function == "count":
        return float(len(fact_values))
    if function == "sum":
        total = 0.0
        for vals in fact_values:
            s = 0.0
            for x in vals:
                s += x
            total += s
        return total
    if function == "avg":
        total, n = 0.0, 0
        for vals in fact_values:
            s = 0.0
            for x in vals:
                s += x
            total += s
            n += len(vals)
        return total / n
    if function == "min":
        return min(min(v) for v in fact_values)
    if function == "max":
        return max(max(v) for v in fact_values)
    raise ValueError(function)


def naive_eval(dims: Sequence[str], measure: str, function: str, table: FactTable) -> dict[tuple, float]:
    """Group every fact under each combination of its dimension values.

    Facts missing a dimension or the measure do not contribute.
    """
    groups: dict[tuple, list[list[float]]] = defaultdict(list)
    for f in sorted(table):
        row = table[f]
        vals = row.get(measure)
        if not vals:
            continue
        if function != "count":
            vals = _numbers(vals)
            if vals is None:
                continue
        per_dim = []
        for d in dims:
            dv = row.get(d)
            if not dv:
                break
            per_dim.append(sorted(set(dv), key=_k))
        else:
            for combo in itertools.product(*per_dim):
                groups[combo].append(vals if function != "count" else [1.0])
    return {g: _aggregate(function, fv) for g, fv in groups.items()}


def _k(x) -> tuple:
    return (str(type(x)), x)


def naive_eval_node(dims: Sequence[str], specs: Sequence[tuple[str, str]], table: FactTable
                    ) -> dict[tuple[str, str], dict[tuple, float]]:
    """Evaluate several (measure, function) pairs of one group-by with one grouping pass."""
    groups: dict[tuple, list[int]] = defaultdict(list)
    for f in sorted(table):
        row = table[f]
        per_dim = []
        for d in dims:
            dv = row.get(d)
            if not dv:
                break
            per_dim.append(dv)
        else:
            for combo in itertools.product(*per_dim):
                groups[combo].append(f)
    out: dict[tuple[str, str], dict[tuple, float]] = {}
    numbers: dict[str, dict[int, list[float]]] = {}
    for m, fn in specs:
        if fn == "count":
            have = {f: [1.0] for f, row in table.items() if row.get(m)}
        else:
            if m not in numbers:
                numbers[m] = {}
                for f, row in table.items():
                    v = _numbers(row.get(m) or [])
                    if v:
                        numbers[m][f] = v
            have = numbers[m]
        res = {}
        for g, facts in groups.items():
            vals = [have[f] for f in facts if f in have]
            if vals:
                res[g] = _aggregate(fn, vals if fn != "count" else [[1.0]] * len(vals))
        out[(m, fn)] = res
    return out


# ------------------------------------------------------------ parent derivation

@dataclass
class NodeError:
    dims: tuple[str, ...]
    wrong: bool
    ratios: dict[tuple, float]


@dataclass
class ErrorReport:
    function: str
    nodes: dict[tuple[str, ...], NodeError] = field(default_factory=dict)

    @property
    def correct_nodes(self) -> list[tuple[str, ...]]:
        return [d for d, n in self.nodes.items() if not n.wrong]

    def ratios(self) -> list[float]:
        return [r for n in self.nodes.values() for r in n.ratios.values()]


def root_tuples(dims: Sequence[str], measure: Optional[str], table: FactTable) -> list[tuple[tuple, float, int]]:
    """Relational-style root rows: one per fact and combination of dimension
    values, with missing dimensions as ``None``. Each carries the fact's measure
    sum and value count; fact identity is dropped afterwards."""
    rows = []
    for f in sorted(table):
        row = table[f]
        per_dim = [sorted(set(row.get(d, [])), key=_k) or [None] for d in dims]
        if all(p == [None] for p in per_dim):
            continue
        if measure is None:
            s, n = 1.0, 1
        else:
            vals = row.get(measure)
            if not vals:
                continue
            nums = _numbers(vals)
            s, n = (float(sum(nums)) if nums is not None else 1.0), len(vals)
        for combo in itertools.product(*per_dim):
            rows.append((combo, s, n))
    return rows


def simulate_parent_derivation(dims: Sequence[str], measure: Optional[str], function: str,
                               table: FactTable, mode: str = "star"
                               ) -> tuple[dict[tuple[str, ...], dict[tuple, float]], ErrorReport]:
    """Derive every lattice node from root rows that no longer know their fact.

    ``star`` re-aggregates partial results (sums of counts and sums, avg as
    summed sum over summed count). ``distinct`` recomputes each node from the
    root rows applying the function over distinct values only.
    ``measure=None`` counts root rows (one per fact and combination).
    """
    rows = root_tuples(dims, measure, table)
    report = ErrorReport(function)
    derived: dict[tuple[str, ...], dict[tuple, float]] = {}
    for k in range(len(dims), -1, -1):
        for keep in itertools.combinations(range(len(dims)), k):
            node = tuple(dims[i] for i in keep)
            acc: dict[tuple, list] = defaultdict(list)
            for combo, s, n in rows:
                g = tuple(combo[i] for i in keep)
                if any(x is None for x in g):
                    continue
                acc[g].append((s, n))
            res = {}
            for g, items in acc.items():
                if mode == "star":
                    res[g] = _star(function, items)
                elif mode == "distinct":
                    res[g] = _distinct(function, items)
                else:
                    raise ValueError(mode)
            derived[node] = res
            if measure is None:
                truth = naive_eval(node, "__unit__", "count", _unit_table(table))
            else:
                truth = naive_eval(node, measure, function, table)
            ratios = {}
            wrong = set(res) != set(truth)
            for g, m in truth.items():
                p = res.get(g, math.nan)
                ratios[g] = p / m if m else (1.0 if p == m else math.inf)
                if p != m and not math.isclose(p, m, rel_tol=1e-12):
                    wrong = True
            report.nodes[node] = NodeError(node, wrong, ratios)
    return derived, report


def _unit_table(table: FactTable) -> FactTable:
    return {f: {**r, "__unit__": [1.0]} for f, r in table.items()}


def _star(function: str, items: list[tuple[float, int]]) -> float:
    if function == "count":
        return float(len(items))
    if function == "sum":
        return float(sum(s for s, _ in items))
    if function == "avg":
        return sum(s for s, _ in items) / sum(n for _, n in items)
    raise ValueError(f"{function} cannot be re-aggregated from partial results")


def _distinct(function: str, items: list[tuple[float, int]]) -> float:
    vals = sorted({s for s, _ in items})
    if function == "count":
        return float(len(vals))
    if function == "sum":
        return float(sum(vals))
    if function == "avg":
        return sum(vals) / len(vals)
    raise ValueError(function)


def count_correct_nodes(n: int, k: int) -> int:
    """Lattice nodes keeping every multi-valued dimension."""
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    return 2 ** (n - k)


def multi_valued_dims(dims: Sequence[str], table: FactTable) -> list[str]:
    return [d for d in dims if any(len(set(r.get(d, []))) >= 2 for r in table.values())]


def adversarial_table(n: int, k: int, n_facts: int, seed: int, extent: int = 4) -> tuple[list[str], FactTable]:
    """Facts holding all dimensions; the first ``k`` carry exactly two values each."""
    rng = random.Random(seed)
    dims = [f"d{i}" for i in range(n)]
    table: FactTable = {}
    for f in range(n_facts):
        row = {}
        for i, d in enumerate(dims):
            if i < k:
                row[d] = [(f"v{x}", "string") for x in sorted(rng.sample(range(extent), 2))]
            else:
                row[d] = [(f"v{rng.randrange(extent)}", "string")]
        row["m"] = [float(rng.randint(0, 1000))]
        table[f] = row
    return dims, table


# ------------------------------------------------------------ synthetic graphs

@dataclass
class SyntheticConfig:
    n_facts: int = 1000
    extents: tuple[int, ...] = (10, 10, 10)
    n_measures: int = 3
    sparsity: float = 1.0
    values_per_dim: int = 1
    seed: int = 0
    missing_rate: float = 0.0
    base: str = "http://example.org/syn/"
    values_per_measure: int = 1

    def __post_init__(self) -> None:
        if any(e < 1 or e > 100 for e in self.extents):
            raise ValueError("extents must lie in 1..100")
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in [0, 1]")
        if self.values_per_dim < 1 or self.values_per_measure < 1:
            raise ValueError("values_per_dim and values_per_measure must be >= 1")

    @property
    def n(self) -> int:
        return len(self.extents)


def synthetic_coordinates(cfg: SyntheticConfig) -> np.ndarray:
    """Per-fact cell coordinates (n_facts x N) drawn from the target cells."""
    rng = np.random.default_rng(cfg.seed)
    total = math.prod(cfg.extents)
    n_target = max(1, math.ceil(cfg.sparsity * total))
    if n_target > cfg.n_facts:
        log.warning("sparsity %.3f needs %d cells but only %d facts; occupancy capped",
                    cfg.sparsity, n_target, cfg.n_facts)
    targets = rng.choice(total, size=n_target, replace=False)
    picks = targets[rng.integers(0, n_target, size=cfg.n_facts)]
    coords = np.empty((cfg.n_facts, cfg.n), dtype=np.int64)
    rem = picks
    for i in range(cfg.n - 1, -1, -1):
        coords[:, i] = rem % cfg.extents[i]
        rem = rem // cfg.extents[i]
    return coords


def generate_synthetic(cfg: SyntheticConfig) -> TripleStore:
    coords = synthetic_coordinates(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    n = cfg.n_facts
    base = cfg.base
    nodes = [Term(IRI, f"{base}f{i}") for i in range(n)]
    terms: list[Term] = [Term(IRI, base + "Fact")]
    tables: dict[str, PropertyTable] = {
        RDF_TYPE: PropertyTable(np.arange(n, dtype=np.int64), np.zeros(n, dtype=np.int64))}
    for d, ext in enumerate(cfg.extents):
        first = len(terms)
        terms.extend(Term(LITERAL, f"d{d}v{j:03d}", "string") for j in range(ext))
        subj = [np.arange(n, dtype=np.int64)]
        obj = [coords[:, d] + first]
        for _ in range(cfg.values_per_dim - 1):
            subj.append(np.arange(n, dtype=np.int64))
            obj.append(rng.integers(0, ext, size=n) + first)
        s, o = np.concatenate(subj), np.concatenate(obj)
        if cfg.missing_rate > 0:
            keep = rng.random(len(s)) >= cfg.missing_rate
            s, o = s[keep], o[keep]
        pairs = np.unique(np.stack([s, o], axis=1), axis=0)
        tables[f"{base}d{d}"] = PropertyTable(pairs[:, 0].copy(), pairs[:, 1].copy())
    first = len(terms)
    terms.extend(Term(LITERAL, str(v), "integer") for v in range(1001))
    for m in range(cfg.n_measures):
        s = np.tile(np.arange(n, dtype=np.int64), cfg.values_per_measure)
        o = rng.integers(0, 1001, size=len(s)) + first
        if cfg.missing_rate > 0:
            keep = np.tile(rng.random(n) >= cfg.missing_rate, cfg.values_per_measure)
            s, o = s[keep], o[keep]
        pairs = np.unique(np.stack([s, o], axis=1), axis=0)
        tables[f"{base}m{m}"] = PropertyTable(pairs[:, 0].copy(), pairs[:, 1].copy())
    return TripleStore(nodes, terms, tables)


def random_instance(seed: int, max_facts: int = 1000, max_dims: int = 4) -> SyntheticConfig:
    """A small randomized configuration with multi-valued dimensions and
    measures and missing values."""
    rng = random.Random(seed)
    n = rng.randint(1, max_dims)
    return SyntheticConfig(
        n_facts=rng.randint(5, max_facts),
        extents=tuple(rng.randint(1, 8) for _ in range(n)),
        n_measures=rng.randint(1, 2),
        sparsity=rng.choice([0.2, 0.5, 1.0]),
        values_per_dim=rng.randint(1, 3),
        seed=seed,
        missing_rate=rng.choice([0.0, 0.1, 0.3]),
        values_per_measure=rng.randint(1, 2),
    )
