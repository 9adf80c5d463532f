"""Choose dimensions and measures, mine lattice roots, and emit aggregate plans."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .attributes import Attribute, AttributeStats

log = logging.getLogger(__name__)

FUNCTIONS = ("count", "sum", "avg", "min", "max")
NUMERIC_FUNCTIONS = ("sum", "avg", "min", "max")


@dataclass
class EnumerationConfig:
    min_support: float = 0.5
    distinct_cap: int = 100
    distinct_ratio: float = 0.2
    n_max: int = 4
    max_lattices: int = 1000


@dataclass(frozen=True)
class AggregateSpec:
    cfs_id: str
    dims: tuple[str, ...]
    measure: str
    function: str

    @property
    def key(self) -> tuple:
        return (self.cfs_id, tuple(sorted(self.dims)), self.measure, self.function)

    @property
    def label(self) -> str:
        return f"{self.cfs_id}|{','.join(sorted(self.dims))}|{self.function}({self.measure})"


@dataclass
class LatticeSpec:
    cfs_id: str
    dims: tuple[Attribute, ...]
    measures: tuple[Attribute, ...]
    functions: dict[str, tuple[str, ...]]
    index: int = 0
    # node (sorted dim-name tuple) -> specs first emitted by this lattice
    owned: dict[tuple[str, ...], list[AggregateSpec]] = field(default_factory=dict)
    # node -> specs already owned by an earlier lattice
    shared: dict[tuple[str, ...], list[AggregateSpec]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.dims:
            raise ValueError("a lattice needs at least one dimension")
        names = {d.name for d in self.dims}
        for m in self.measures:
            if m.name in names:
                raise ValueError(f"{m.name} is both dimension and measure")
            if any(m.related(d) for d in self.dims):
                raise ValueError(f"measure {m.name} is derived from a dimension")

    @property
    def n(self) -> int:
        return len(self.dims)

    def node_names(self) -> list[tuple[str, ...]]:
        names = [d.name for d in self.dims]
        out = []
        for k in range(len(names), -1, -1):
            for combo in itertools.combinations(names, k):
                out.append(tuple(sorted(combo)))
        return out

    def all_specs(self) -> list[AggregateSpec]:
        return [s for specs in self.owned.values() for s in specs]


def filter_dimensions(stats: Sequence[AttributeStats], cfs_size: int,
                      config: Optional[EnumerationConfig] = None) -> list[str]:
    cfg = config or EnumerationConfig()
    cap = max(cfg.distinct_cap, cfg.distinct_ratio * cfs_size)
    kept = []
    for st in stats:
        if cfs_size == 0 or st.support == 0:
            continue
        if st.support / cfs_size >= cfg.min_support and st.distinct <= cap:
            kept.append(st.name)
    return kept


def filter_measures(stats: Sequence[AttributeStats], cfs_size: int,
                    config: Optional[EnumerationConfig] = None) -> list[str]:
    cfg = config or EnumerationConfig()
    return [st.name for st in stats
            if cfs_size and st.support and st.support / cfs_size >= cfg.min_support]


# ------------------------------------------------------------ itemset mining

def _popcount(x: int) -> int:
    return bin(x).count("1")


def maximal_frequent_sets(tidsets: dict[str, int], min_count: int) -> list[frozenset[str]]:
    """Depth-first maximal frequent itemset search over bitset tidsets.

    ``tidsets`` maps an item to an int whose bit ``j`` marks transaction ``j``.
    """
    items = sorted((i for i in tidsets if _popcount(tidsets[i]) >= min_count),
                   key=lambda i: (_popcount(tidsets[i]), i))
    found: list[frozenset[str]] = []

    def frequent_superset_exists(s: frozenset[str]) -> bool:
        return any(s <= m for m in found)

    def dfs(head: list[str], head_tids: int, tail: list[str]) -> None:
        # head-union-tail shortcut: if all of it is frequent, it is the only
        # maximal candidate in this subtree
        if tail:
            all_tids = head_tids
            for it in tail:
                all_tids &= tidsets[it]
            if _popcount(all_tids) >= min_count:
                cand = frozenset(head + tail)
                if not frequent_superset_exists(cand):
                    found.append(cand)
                return
        extended = False
        for i, it in enumerate(tail):
            t = head_tids & tidsets[it]
            if _popcount(t) >= min_count:
                extended = True
                dfs(head + [it], t, [x for x in tail[i + 1:] if _popcount(t & tidsets[x]) >= min_count])
        if not extended and head:
            cand = frozenset(head)
            if not frequent_superset_exists(cand):
                found.append(cand)

    universe = (1 << max((t.bit_length() for t in tidsets.values()), default=0)) - 1
    dfs([], universe, items)
    out = []
    for s in found:
        tids = universe
        for it in s:
            tids &= tidsets[it]
        maximal = all(_popcount(tids & tidsets[x]) < min_count for x in items if x not in s)
        if maximal and s not in out:
            out.append(s)
    return sorted(out, key=lambda s: (-len(s), sorted(s)))


def split_related(sets: Iterable[frozenset[str]], attrs: dict[str, Attribute]) -> list[frozenset[str]]:
    """Break sets holding an attribute together with one derived from it."""
    result: set[frozenset[str]] = set()
    stack = list(sets)
    while stack:
        s = stack.pop()
        pair = next(((a, b) for a, b in itertools.combinations(sorted(s), 2)
                     if attrs[a].related(attrs[b])), None)
        if pair is None:
            result.add(s)
        else:
            stack.append(s - {pair[0]})
            stack.append(s - {pair[1]})
    maximal = [s for s in result if s and not any(s < t for t in result)]
    return sorted(maximal, key=lambda s: (-len(s), sorted(s)))


def mine_mfs(fact_items: Sequence[Iterable[str]], candidates: Sequence[str], min_support: float,
             attrs: Optional[dict[str, Attribute]] = None, n_max: int = 4,
             max_roots: Optional[int] = None) -> list[frozenset[str]]:
    """Maximal frequent dimension sets, split on derivation pairs, truncated to ``n_max``."""
    cand = set(candidates)
    tidsets = {c: 0 for c in candidates}
    for j, items in enumerate(fact_items):
        for it in items:
            if it in cand:
                tidsets[it] |= 1 << j
    n = len(fact_items)
    min_count = max(1, math.ceil(min_support * n - 1e-9))
    sets = maximal_frequent_sets(tidsets, min_count)
    if attrs is not None:
        sets = split_related(sets, attrs)
    roots: list[frozenset[str]] = []
    seen = set()
    for s in sets:
        subsets = [s] if len(s) <= n_max else [frozenset(c) for c in itertools.combinations(sorted(s), n_max)]
        for sub in subsets:
            if sub not in seen:
                seen.add(sub)
                roots.append(sub)
    if max_roots is not None and len(roots) > max_roots:
        log.warning("%d lattice roots, keeping the first %d", len(roots), max_roots)
        roots = roots[:max_roots]
    return roots


# ------------------------------------------------------------ lattices

def functions_for(attr: Attribute) -> tuple[str, ...]:
    if attr.value_kind == "numeric" and not attr.is_type:
        return FUNCTIONS
    return ("count",)


def order_dimensions(names: Iterable[str], stats: dict[str, AttributeStats]) -> list[str]:
    return sorted(names, key=lambda n: (-stats[n].distinct, n))


def build_lattices(cfs_id: str, roots: Sequence[frozenset[str]], measure_pool: Sequence[str],
                   attrs: dict[str, Attribute], stats: dict[str, AttributeStats]) -> list[LatticeSpec]:
    registry: dict[tuple, AggregateSpec] = {}
    lattices = []
    for idx, root in enumerate(roots):
        dims = tuple(attrs[n] for n in order_dimensions(root, stats))
        measures = tuple(attrs[m] for m in measure_pool
                         if m not in root and not any(attrs[m].related(d) for d in dims))
        funcs = {m.name: functions_for(m) for m in measures}
        lat = LatticeSpec(cfs_id, dims, measures, funcs, index=idx)
        for node in lat.node_names():
            for m in measures:
                for f in funcs[m.name]:
                    spec = AggregateSpec(cfs_id, node, m.name, f)
                    if spec.key in registry:
                        lat.shared.setdefault(node, []).append(registry[spec.key])
                    else:
                        registry[spec.key] = spec
                        lat.owned.setdefault(node, []).append(spec)
        lattices.append(lat)
    return lattices


def explain(lattices: Sequence[LatticeSpec]) -> list[dict]:
    out = []
    for lat in lattices:
        out.append({
            "cfs": lat.cfs_id,
            "lattice": lat.index,
            "dimensions": [d.name for d in lat.dims],
            "measures": {m.name: list(lat.functions[m.name]) for m in lat.measures},
            "nodes": [{"dims": list(node),
                       "owned": len(lat.owned.get(node, [])),
                       "shared": [s.label for s in lat.shared.get(node, [])]}
                      for node in lat.node_names()],
        })
    return out
