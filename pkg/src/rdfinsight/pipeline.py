"""End-to-end search for the k most interesting aggregates of a graph."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .attributes import Attribute, AttributeConfig, AttributeIndex, AttributeStats, DenseMeasure
from .config import RunConfig
from .cube import (MMST, AuditReport, CellArray, DimensionEncoding,
                   build_mmst, encode_dimension, evaluate, onepass_audit, schedule_flushes, translate)
from .earlystop import (NodeSampler, PruneResult, ReservoirSet, SpecEstimator, build_reservoirs,
                        prune_loop, sampled_estimator)
from .enumeration import (AggregateSpec, EnumerationConfig, LatticeSpec, build_lattices,
                          filter_dimensions, filter_measures, mine_mfs)
from .graph_store import CandidateFactSet, EmptyCFSError, TripleStore, select_cfs
from .scoring import InterestingnessScore, ResultManager, topk

log = logging.getLogger(__name__)

STEPS = ("cfs_selection", "attribute_analysis", "enumeration", "translation", "earlystop",
         "evaluation", "scoring")


@dataclass
class CFSPlan:
    cfs: CandidateFactSet
    attrs: dict[str, Attribute]
    stats: dict[str, AttributeStats]
    dimensions: list[str]
    measures: list[str]
    roots: list[frozenset[str]]
    lattices: list[LatticeSpec]

    @property
    def specs(self) -> list[AggregateSpec]:
        return [s for lat in self.lattices for s in lat.all_specs()]


@dataclass
class PreparedLattice:
    plan: CFSPlan
    lattice: LatticeSpec
    encodings: list[DimensionEncoding]
    array: CellArray
    tree: MMST
    reservoirs: Optional[ReservoirSet] = None


@dataclass
class RunOutput:
    config: RunConfig
    plans: list[CFSPlan]
    manager: ResultManager
    scores: list[InterestingnessScore]
    best: list[InterestingnessScore]
    pruning: Optional[PruneResult]
    audits: list[AuditReport]
    timing: dict[str, float] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    @property
    def n_specs(self) -> int:
        return sum(len(p.specs) for p in self.plans)


class Timer:
    def __init__(self) -> None:
        self.totals = {s: 0.0 for s in STEPS}

    @contextmanager
    def step(self, name: str) -> Iterator[None]:
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] = self.totals.get(name, 0.0) + time.perf_counter() - t0


class Pipeline:
    def __init__(self, store: TripleStore, config: Optional[RunConfig] = None):
        self.store = store
        self.config = config or RunConfig()
        cfg = self.config
        self.index = AttributeIndex(store, AttributeConfig(
            keyword_min_avg_length=cfg.keyword_min_avg_length, path_length=cfg.path_length,
            derivations=cfg.derivations))
        self.enum_config = EnumerationConfig(cfg.min_support, cfg.distinct_cap, cfg.distinct_ratio,
                                             cfg.n_max, cfg.max_lattices)
        self._dense: dict[tuple[str, str], DenseMeasure] = {}
        self.timer = Timer()
        self.skipped: list[str] = []

    # step 1 ------------------------------------------------------------------
    def select(self) -> list[CandidateFactSet]:
        cfg = self.config
        out = []
        if cfg.cfs_mode == "type":
            keys = cfg.cfs_keys or sorted(self.store.types)
            for key in keys:
                try:
                    cfs = select_cfs(self.store, "type", key)
                except EmptyCFSError as exc:
                    self.skipped.append(str(exc))
                    continue
                if len(cfs) >= cfg.min_cfs_size or cfg.cfs_keys:
                    out.append(cfs)
        else:
            for key in cfg.cfs_keys:
                try:
                    out.append(select_cfs(self.store, "property", key.split("+")))
                except EmptyCFSError as exc:
                    self.skipped.append(str(exc))
        return out

    # steps 2-3 -----------------------------------------------------------------
    def analyze(self, cfs: CandidateFactSet) -> tuple[dict[str, Attribute], dict[str, AttributeStats]]:
        attrs = {a.name: a for a in self.index.enumerate(cfs)}
        stats = {n: self.index.analyze(cfs, a) for n, a in attrs.items()}
        return attrs, stats

    def plan(self, cfs: CandidateFactSet) -> CFSPlan:
        with self.timer.step("attribute_analysis"):
            attrs, stats = self.analyze(cfs)
        with self.timer.step("enumeration"):
            return self.enumerate(cfs, attrs, stats)

    def enumerate(self, cfs: CandidateFactSet, attrs: dict[str, Attribute],
                  stats: dict[str, AttributeStats]) -> CFSPlan:
        cfg = self.enum_config
        candidates = [s for s in stats.values() if not attrs[s.name].is_type]
        dims = filter_dimensions(candidates, len(cfs), cfg)
        measures = filter_measures(list(stats.values()), len(cfs), cfg)
        pos = {int(f): i for i, f in enumerate(cfs.members.tolist())}
        items: list[set[str]] = [set() for _ in range(len(cfs))]
        for d in dims:
            v = self.index.values(attrs[d]).restrict(cfs.members)
            for f in np.unique(v.facts).tolist():
                items[pos[f]].add(d)
        roots = mine_mfs(items, dims, cfg.min_support, attrs, cfg.n_max, cfg.max_lattices)
        lattices = build_lattices(cfs.id, roots, measures, attrs, stats)
        return CFSPlan(cfs, attrs, stats, dims, measures, roots, lattices)

    def dense(self, cfs: CandidateFactSet, attr: Attribute) -> DenseMeasure:
        key = (cfs.id, attr.name)
        dm = self._dense.get(key)
        if dm is None:
            dm = self.index.preagg(cfs, attr).dense(self.store.num_facts)
            self._dense[key] = dm
        return dm

    # step 4 ------------------------------------------------------------------
    def prepare(self, plan: CFSPlan, lattice: LatticeSpec) -> PreparedLattice:
        cfg = self.config
        values = [self.index.values(d).restrict(plan.cfs.members) for d in lattice.dims]
        encs = [encode_dimension(v) for v in values]
        tree = build_mmst([e.extent for e in encs], cfg.partition_extent, cfg.memory_budget)
        encs, array = translate(values, tree.c, encs)
        schedule_flushes(tree, [p[0] for p in array.partitions])
        res = None
        if cfg.early_stop:
            res = build_reservoirs(array, cfg.sample_size, cfg.seed * 1_000_003 + lattice.index)
        return PreparedLattice(plan, lattice, encs, array, tree, res)

    def node_specs(self, prep: PreparedLattice, pruned: set) -> dict:
        names = [d.name for d in prep.lattice.dims]
        out = {}
        for node in prep.tree.nodes:
            key = tuple(sorted(names[i] for i in node.dims))
            specs = [(s, s.measure, s.function) for s in prep.lattice.owned.get(key, [])
                     if s.key not in pruned]
            if specs:
                out[node.dims] = specs
        return out

    def estimators(self, prep: PreparedLattice) -> list[SpecEstimator]:
        cfg = self.config
        names = [d.name for d in prep.lattice.dims]
        out = []
        for node in prep.tree.nodes:
            if not node.dims:
                continue
            key = tuple(sorted(names[i] for i in node.dims))
            specs = prep.lattice.owned.get(key, [])
            if not specs:
                continue
            sampler = NodeSampler(prep.reservoirs, prep.tree.extents, node.dims, cfg.batch_size)
            for s in specs:
                attr = prep.plan.attrs[s.measure]
                st = prep.plan.stats[s.measure]
                bound = st.min if s.function == "min" else st.max if s.function == "max" else None
                out.append(sampled_estimator(s.key, sampler, self.dense(prep.plan.cfs, attr),
                                             s.function, cfg.h, cfg.alpha, bound))
        return out

    def evaluate(self, prep: PreparedLattice, manager: ResultManager, pruned: set) -> AuditReport:
        ns = self.node_specs(prep, pruned)
        measures = {m: self.dense(prep.plan.cfs, prep.plan.attrs[m])
                    for specs in ns.values() for _, m, _ in specs}
        trace = evaluate(prep.tree, prep.array, ns, measures, manager.add, prep.encodings,
                         [d.name for d in prep.lattice.dims])
        return onepass_audit(trace, prep.tree)

    # all steps -------------------------------------------------------------------
    def run(self) -> RunOutput:
        cfg = self.config
        t = self.timer
        with t.step("cfs_selection"):
            cfss = self.select()
        plans = [self.plan(c) for c in cfss]
        lattices = [(p, lat) for p in plans for lat in p.lattices]
        # dense measure tables are shared; build them before the workers start
        with t.step("attribute_analysis"):
            for p in plans:
                for m in p.measures:
                    self.dense(p.cfs, p.attrs[m])
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            with t.step("translation"):
                prepared = list(pool.map(lambda pl: self.prepare(*pl), lattices))
            pruning = None
            pruned: set = set()
            if cfg.early_stop:
                with t.step("earlystop"):
                    ests = [e for prep in prepared for e in self.estimators(prep)]
                    pruning = prune_loop(ests, cfg.k, cfg.batches, cfg.max_idle_batches)
                    pruned = set(pruning.pruned)
            manager = ResultManager()
            with t.step("evaluation"):
                audits = list(pool.map(lambda prep: self.evaluate(prep, manager, pruned), prepared))
        with t.step("scoring"):
            scores = manager.scores(cfg.h)
            best = topk(scores, cfg.k) if scores else []
        return RunOutput(cfg, plans, manager, scores, best, pruning, audits, dict(t.totals),
                         list(self.skipped))


def run_pipeline(store: TripleStore, config: Optional[RunConfig] = None) -> RunOutput:
    return Pipeline(store, config).run()
