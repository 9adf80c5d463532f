"""One-pass lattice evaluation over a partitioned cell array.

Facts are translated into cells of an N-dimensional array whose every
dimension reserves index 0 for "no value". Cells hold compressed fact-id sets.
A spanning tree over the lattice (chosen to minimise buffer cells) carries
partitions from the root down; each node unions the bitmaps it receives and,
once its part of the array is exhausted, computes its measures from the
per-fact pre-aggregated tables. Because cells carry fact ids rather than
partial aggregates, a fact is counted once per group however many parent
cells it occupied.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .attributes import AttrValues, DenseMeasure
from .bitmap import RoaringBitmap

log = logging.getLogger(__name__)


# ------------------------------------------------------------ encoding

def _value_sort_key(key: tuple[str, Optional[str]]) -> tuple:
    lex, hint = key
    if hint in ("integer", "decimal"):
        try:
            return (0, float(lex), lex)
        except ValueError:
            pass
    return (1, 0.0, lex)


@dataclass
class DimensionEncoding:
    name: str
    values: list[tuple[str, Optional[str]]]
    code_index: np.ndarray  # attribute value code -> array index (0 = unused)

    @property
    def extent(self) -> int:
        return len(self.values) + 1

    def decode(self, idx: int) -> Optional[tuple[str, Optional[str]]]:
        return None if idx == 0 else self.values[idx - 1]


def encode_dimension(values: AttrValues) -> DimensionEncoding:
    used = np.unique(values.codes).tolist()
    ordered = sorted(used, key=lambda c: _value_sort_key(values.vocab[c]))
    code_index = np.zeros(len(values.vocab), dtype=np.int64)
    for i, c in enumerate(ordered, start=1):
        code_index[c] = i
    return DimensionEncoding(values.attr.name, [values.vocab[c] for c in ordered], code_index)


def c_strides(extents: Sequence[int]) -> tuple[int, ...]:
    """Row-major strides: the last dimension varies fastest."""
    out = []
    acc = 1
    for e in reversed(extents):
        out.append(acc)
        acc *= e
    return tuple(reversed(out))


# ------------------------------------------------------------ cell array

@dataclass
class CellArray:
    extents: tuple[int, ...]
    c: int
    cells: np.ndarray       # pair cell index, ordered by (partition, cell, fact)
    facts: np.ndarray       # pair fact id
    partitions: list[tuple[tuple[int, ...], int, int]]  # (chunk coords, start, end)

    @property
    def strides(self) -> tuple[int, ...]:
        return c_strides(self.extents)

    @property
    def chunk_grid(self) -> tuple[int, ...]:
        return tuple(-(-e // self.c) for e in self.extents)

    def coords(self, cells: np.ndarray) -> np.ndarray:
        return np.stack([(cells // s) % e for s, e in zip(self.strides, self.extents)], axis=1)


def cross_pairs(fact_ids: np.ndarray, dim_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                extents: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """All (fact, cell) pairs: the cross product of each fact's per-dimension indices.

    ``dim_pairs[i]`` holds (facts, indices) sorted by fact for dimension i.
    Facts absent from a dimension take index 0 there.
    """
    strides = c_strides(extents)
    cur_f = fact_ids.copy()
    cur_c = np.zeros(len(fact_ids), dtype=np.int64)
    for (df, di), stride in zip(dim_pairs, strides):
        present = np.isin(fact_ids, df)
        nf = np.concatenate([df, fact_ids[~present]])
        ni = np.concatenate([di, np.zeros(int((~present).sum()), dtype=np.int64)])
        order = np.argsort(nf, kind="stable")
        nf, ni = nf[order], ni[order]
        # per fact: where its values start and how many there are
        starts = np.searchsorted(nf, cur_f, side="left")
        counts = np.searchsorted(nf, cur_f, side="right") - starts
        rep_f = np.repeat(cur_f, counts)
        rep_c = np.repeat(cur_c, counts)
        offs = np.arange(len(rep_f)) - np.repeat(np.cumsum(counts) - counts, counts)
        idx = ni[np.repeat(starts, counts) + offs]
        cur_f, cur_c = rep_f, rep_c + idx * stride
    return cur_f, cur_c


def translate(dims: Sequence[AttrValues], c: int,
              encodings: Optional[Sequence[DimensionEncoding]] = None
              ) -> tuple[list[DimensionEncoding], CellArray]:
    """Map facts having at least one dimension value to their cells."""
    encs = list(encodings) if encodings is not None else [encode_dimension(v) for v in dims]
    extents = tuple(e.extent for e in encs)
    if dims:
        facts = np.unique(np.concatenate([v.facts for v in dims]))
    else:
        facts = np.empty(0, dtype=np.int64)
    dim_pairs = [(v.facts, enc.code_index[v.codes]) for v, enc in zip(dims, encs)]
    pf, pc = cross_pairs(facts, dim_pairs, extents)
    return encs, partition_pairs(pf, pc, extents, c)


def partition_pairs(pf: np.ndarray, pc: np.ndarray, extents: Sequence[int], c: int) -> CellArray:
    extents = tuple(int(e) for e in extents)
    strides = c_strides(extents)
    grid = tuple(-(-e // c) for e in extents)
    gstrides = c_strides(grid)
    pid = np.zeros(len(pc), dtype=np.int64)
    for s, e, g in zip(strides, extents, gstrides):
        pid += ((pc // s) % e // c) * g
    order = np.lexsort((pf, pc, pid))
    pf, pc, pid = pf[order], pc[order], pid[order]
    parts = []
    if len(pid):
        cuts = np.flatnonzero(np.diff(pid)) + 1
        starts = np.concatenate(([0], cuts)).tolist()
        ends = np.concatenate((cuts, [len(pid)])).tolist()
        for s, e in zip(starts, ends):
            p = int(pid[s])
            chunk = tuple((p // g) % n for g, n in zip(gstrides, grid))
            parts.append((chunk, s, e))
    return CellArray(extents, c, pc, pf, parts)


# ------------------------------------------------------------ spanning tree

@dataclass
class MMSTNode:
    dims: tuple[int, ...]
    parent: Optional[int]
    dropped: Optional[int]
    cost: int
    children: list[int] = field(default_factory=list)
    flush_after: list[int] = field(default_factory=list)
    peak_cells: int = 0


@dataclass
class MMST:
    extents: tuple[int, ...]
    c: int
    nodes: list[MMSTNode]
    index: dict[tuple[int, ...], int]

    @property
    def root(self) -> MMSTNode:
        return self.nodes[0]

    @property
    def total_cells(self) -> int:
        return sum(n.cost for n in self.nodes)

    def order(self) -> list[int]:
        """Node ids, parents before children."""
        out, stack = [], [0]
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(reversed(self.nodes[i].children))
        return out


def node_cost(dims: Sequence[int], dropped: int, extents: Sequence[int], c: int) -> int:
    """Buffer cells for a node fed by the parent that adds dimension ``dropped``.

    With row-major partitions, dimensions after ``dropped`` cycle through all
    their chunks before the node's part of the array is exhausted, so they need
    their full extent; the others need one chunk.
    """
    out = 1
    for i in dims:
        out *= extents[i] if i > dropped else min(c, extents[i])
    return out


def build_mmst(extents: Sequence[int], c: int = 16, memory_budget: Optional[int] = None) -> MMST:
    extents = tuple(int(e) for e in extents)
    n = len(extents)
    while True:
        nodes = [MMSTNode(tuple(range(n)), None, None, math.prod(min(c, e) for e in extents))]
        index = {nodes[0].dims: 0}
        for k in range(n - 1, -1, -1):
            for dims in itertools.combinations(range(n), k):
                best = None
                for d in range(n):
                    if d in dims:
                        continue
                    cost = node_cost(dims, d, extents, c)
                    # ties go to the later dimension
                    if best is None or cost < best[0] or (cost == best[0] and d > best[1]):
                        best = (cost, d)
                parent = index[tuple(sorted(dims + (best[1],)))]
                index[dims] = len(nodes)
                nodes.append(MMSTNode(dims, parent, best[1], best[0]))
                nodes[parent].children.append(len(nodes) - 1)
        tree = MMST(extents, c, nodes, index)
        if memory_budget is None or tree.total_cells <= memory_budget:
            return tree
        if c == 1:
            raise MemoryError(f"lattice needs {tree.total_cells} cells, budget {memory_budget}")
        log.info("memory budget exceeded at c=%d, halving", c)
        c = max(1, c // 2)


def memory_bound(n: int, d: int, c: int) -> int:
    """Closed-form cap on the buffer cells of a lattice with equal extents ``d``."""
    return c ** n + (d + 1 + c) ** (n - 1)


def schedule_flushes(tree: MMST, chunks: Sequence[tuple[int, ...]]) -> None:
    """Plan, for each node, after which root partition it flushes its buffer.

    A node flushes right after its parent delivers data if every part of the
    array it currently buffers will receive no further partition.
    """
    P = len(chunks)
    tree.root.flush_after = list(range(P))
    tree.root.peak_cells = max((_chunk_cells(ch, tree.root.dims, tree) for ch in chunks), default=0)
    for i in tree.order()[1:]:
        node = tree.nodes[i]
        keys = [tuple(ch[d] for d in node.dims) for ch in chunks]
        last = {}
        for t, k in enumerate(keys):
            last[k] = t
        flushes, window, peak, start = [], set(), 0, 0
        for t in tree.nodes[node.parent].flush_after:
            for s in range(start, t + 1):
                window.add(keys[s])
            start = t + 1
            cells = sum(_key_cells(k, node.dims, tree) for k in window)
            peak = max(peak, cells)
            if all(last[k] <= t for k in window):
                flushes.append(t)
                window = set()
        node.flush_after = flushes
        node.peak_cells = peak


def _key_cells(key: tuple[int, ...], dims: Sequence[int], tree: MMST) -> int:
    out = 1
    for k, d in zip(key, dims):
        out *= min(tree.c, tree.extents[d] - k * tree.c)
    return out


def _chunk_cells(chunk: tuple[int, ...], dims: Sequence[int], tree: MMST) -> int:
    return _key_cells(tuple(chunk[d] for d in dims), dims, tree)


# ------------------------------------------------------------ evaluation

@dataclass
class AggregateResult:
    """Rows of one aggregate: encoded coordinates, values and null flags."""

    spec: Any
    dims: tuple[str, ...]
    coords: np.ndarray
    values: np.ndarray
    null: np.ndarray
    decoders: tuple[DimensionEncoding, ...] = ()

    def rows(self, include_null: bool = False) -> list[tuple[tuple, float]]:
        out = []
        for co, v, nl in zip(self.coords.tolist(), self.values.tolist(), self.null.tolist()):
            if nl and not include_null:
                continue
            out.append((tuple(enc.decode(i) for enc, i in zip(self.decoders, co)), v))
        return out

    def as_dict(self) -> dict[tuple, float]:
        return dict(self.rows())

    def scorable_values(self) -> np.ndarray:
        return self.values[~self.null]


@dataclass
class EvalTrace:
    root_loads: list[int] = field(default_factory=list)
    flushes: Counter = field(default_factory=Counter)
    scans: Counter = field(default_factory=Counter)
    peak_buffer_cells: dict[int, int] = field(default_factory=dict)
    max_bitmap_bytes_over_bound: int = 0
    bitmaps_checked: int = 0


class AuditError(AssertionError):
    pass


@dataclass
class AuditReport:
    partitions: int
    root_loads: int
    flushes: dict[int, int]
    ok: bool


def onepass_audit(trace: EvalTrace, tree: MMST) -> AuditReport:
    P = len(tree.root.flush_after)
    loads = Counter(trace.root_loads)
    if sorted(loads) != list(range(P)) or any(v != 1 for v in loads.values()):
        extra = [p for p, v in loads.items() if v != 1]
        raise AuditError(f"root loads {len(trace.root_loads)} for {P} partitions (repeated: {extra})")
    for i, node in enumerate(tree.nodes):
        if trace.flushes[i] != len(node.flush_after):
            raise AuditError(f"node {node.dims} flushed {trace.flushes[i]} times, "
                             f"planned {len(node.flush_after)}")
    for (node, flush, measure), n in trace.scans.items():
        if n > 1:
            raise AuditError(f"node {tree.nodes[node].dims} scanned {measure} {n} times in flush {flush}")
    return AuditReport(P, len(trace.root_loads), dict(trace.flushes), True)


# specs per node: list of (spec, measure name, function)
NodeSpecs = dict[tuple[int, ...], list[tuple[Any, str, str]]]
Sink = Callable[[AggregateResult], None]


def compute_measures(cells: np.ndarray, bitmaps: Sequence[RoaringBitmap],
                     specs: Sequence[tuple[Any, str, str]], measures: dict[str, DenseMeasure]
                     ) -> list[tuple[Any, np.ndarray, np.ndarray]]:
    """Fold per-fact pre-aggregates over each cell's fact set.

    Returns (spec, cell indices with a value, values) per spec.
    """
    arrays = [b.to_array() for b in bitmaps]
    lens = np.array([len(a) for a in arrays], dtype=np.int64)
    facts = np.concatenate(arrays) if arrays else np.empty(0, dtype=np.int64)
    labels = np.repeat(np.arange(len(arrays)), lens)
    out = []
    by_measure: dict[str, list[tuple[Any, str]]] = {}
    for spec, m, f in specs:
        by_measure.setdefault(m, []).append((spec, f))
    for m, fs in by_measure.items():
        dm = measures[m]
        has = dm.has[facts]
        counts = np.bincount(labels, weights=has, minlength=len(arrays))
        present = counts > 0
        need = {f for _, f in fs}
        res: dict[str, np.ndarray] = {"count": counts}
        if need & {"sum", "avg"}:
            res["sum"] = np.bincount(labels, weights=dm.sum[facts], minlength=len(arrays))
        if "avg" in need:
            nvals = np.bincount(labels, weights=dm.count[facts], minlength=len(arrays))
            with np.errstate(invalid="ignore", divide="ignore"):
                res["avg"] = res["sum"] / nvals
        if need & {"min", "max"}:
            sel_l = labels[has]
            sel_f = facts[has]
            if len(sel_l):
                bounds = np.flatnonzero(np.r_[True, np.diff(sel_l) != 0])
                grp = sel_l[bounds]
                for fn, arr, red in (("min", dm.min, np.minimum), ("max", dm.max, np.maximum)):
                    if fn in need:
                        full = np.zeros(len(arrays))
                        full[grp] = red.reduceat(arr[sel_f], bounds)
                        res[fn] = full
            else:
                res["min"] = res["max"] = np.zeros(len(arrays))
        for spec, f in fs:
            out.append((spec, cells[present], res[f][present]))
    return out


def evaluate(tree: MMST, array: CellArray, node_specs: NodeSpecs, measures: dict[str, DenseMeasure],
             sink: Sink, encodings: Sequence[DimensionEncoding], dim_names: Sequence[str],
             trace: Optional[EvalTrace] = None, check_bitmaps: bool = False,
             _double_load: bool = False) -> EvalTrace:
    """Evaluate every node's aggregates with one pass over the partitions."""
    trace = trace if trace is not None else EvalTrace()
    ext = tree.extents
    if not tree.root.flush_after and array.partitions:
        schedule_flushes(tree, [p[0] for p in array.partitions])
    flush_sets = [set(n.flush_after) for n in tree.nodes]
    strides = [c_strides([ext[d] for d in n.dims]) for n in tree.nodes]
    buffers: list[dict[int, RoaringBitmap]] = [dict() for _ in tree.nodes]
    flush_no = Counter()
    universe = int(array.facts.max()) + 1 if len(array.facts) else 1

    def emit(i: int) -> None:
        node = tree.nodes[i]
        buf = buffers[i]
        specs = node_specs.get(node.dims, [])
        if buf:
            keys = np.fromiter(sorted(buf), dtype=np.int64, count=len(buf))
            bms = [buf[k] for k in keys.tolist()]
            trace.peak_buffer_cells[i] = max(trace.peak_buffer_cells.get(i, 0), len(buf))
            if check_bitmaps:
                from .bitmap import size_bound
                for b in bms:
                    trace.bitmaps_checked += 1
                    over = b.serialized_size() - size_bound(len(b), universe)
                    trace.max_bitmap_bytes_over_bound = max(trace.max_bitmap_bytes_over_bound, over)
            # propagate to children
            for j in node.children:
                child = tree.nodes[j]
                pos = [node.dims.index(d) for d in child.dims]
                ck = np.zeros(len(keys), dtype=np.int64)
                for p, cs in zip(pos, strides[j]):
                    ck += ((keys // strides[i][p]) % ext[node.dims[p]]) * cs
                order = np.argsort(ck, kind="stable")
                ck_sorted = ck[order]
                cuts = np.flatnonzero(np.diff(ck_sorted)) + 1
                cbuf = buffers[j]
                for grp in np.split(order, cuts):
                    key = int(ck[grp[0]])
                    parts = [bms[g] for g in grp.tolist()]
                    if key in cbuf:
                        parts.append(cbuf[key])
                    cbuf[key] = RoaringBitmap.union_many(parts)
            # measures
            if specs:
                for m in {m for _, m, _ in specs}:
                    trace.scans[(i, flush_no[i], m)] += 1
                for spec, rc, rv in compute_measures(keys, bms, specs, measures):
                    co = np.stack([(rc // s) % ext[d] for s, d in zip(strides[i], node.dims)], axis=1) \
                        if node.dims else np.zeros((len(rc), 0), dtype=np.int64)
                    null = (co == 0).any(axis=1) if node.dims else np.zeros(len(rc), dtype=bool)
                    sink(AggregateResult(spec, tuple(dim_names[d] for d in node.dims), co, rv, null,
                                         tuple(encodings[d] for d in node.dims)))
        buffers[i] = {}
        trace.flushes[i] += 1
        flush_no[i] += 1

    def update_subtree(i: int, t: int) -> None:
        if t in flush_sets[i]:
            emit(i)
            for j in tree.nodes[i].children:
                update_subtree(j, t)

    loads = list(enumerate(array.partitions))
    if _double_load and loads:
        loads.insert(1, loads[0])
    for t, (_chunk, s, e) in loads:
        trace.root_loads.append(t)
        cells, facts = array.cells[s:e], array.facts[s:e]
        cuts = np.flatnonzero(np.diff(cells)) + 1
        buf = buffers[0]
        for cs, fs in zip(np.split(cells, cuts), np.split(facts, cuts)):
            key = int(cs[0])
            bm = RoaringBitmap.from_sorted(fs)
            buf[key] = bm if key not in buf else RoaringBitmap.union_many([buf[key], bm])
        update_subtree(0, t)
    return trace
