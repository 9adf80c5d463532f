"""Command-line entry point: analyze, explore, bench, oracle-check."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from typing import Optional, Sequence

from .config import RunConfig, load_config
from .graph_store import (StoreBuilder, TripleStore, load_csv, load_ntriples, with_subclass_closure)
from .pipeline import STEPS, Pipeline
from .scoring import render

log = logging.getLogger("rdfinsight")


def load_inputs(paths: Sequence[str], ontology: Optional[str] = None,
                max_error_fraction: float = 0.01) -> TripleStore:
    stores = []
    for p in paths:
        if p.lower().endswith(".csv"):
            stores.append(load_csv(p))
        else:
            stores.append(load_ntriples(p, max_error_fraction))
    if len(stores) == 1:
        store = stores[0]
    else:
        b = StoreBuilder()
        errors = []
        for s in stores:
            errors.extend(s.parse_errors)
            for t in s.triples():
                b.add(*t)
        store = b.build(errors)
    if ontology:
        store = with_subclass_closure(store, load_ntriples(ontology).triples())
    return store


def _config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "inputs": args.inputs or None, "k": args.k, "h": args.h, "n_max": args.n_max,
        "min_support": args.min_support, "distinct_cap": args.distinct_cap,
        "partition_extent": args.partition_extent, "sample_size": args.sample_size,
        "batches": args.batches, "alpha": args.alpha, "seed": args.seed, "out": args.out,
        "threads": args.threads, "ontology": args.ontology, "cfs_mode": args.cfs_mode,
        "cfs_keys": args.cfs or None,
    }
    if args.no_derivations:
        overrides["derivations"] = False
    if args.early_stop is not None:
        overrides["early_stop"] = args.early_stop == "on"
    return load_config(args.config, **overrides)


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ------------------------------------------------------------ commands

def cmd_analyze(cfg: RunConfig) -> dict:
    store = load_inputs(cfg.inputs, cfg.ontology, cfg.max_error_fraction)
    pipe = Pipeline(store, cfg)
    os.makedirs(cfg.out, exist_ok=True)
    report = {"facts": store.num_facts, "triples": len(store), "cfs": []}
    for cfs in pipe.select():
        attrs, stats = pipe.analyze(cfs)
        pre_dir = os.path.join(cfg.out, "preagg", cfs.id.replace(":", "_"))
        os.makedirs(pre_dir, exist_ok=True)
        entries = []
        for name, a in attrs.items():
            st = stats[name]
            entries.append({"name": name, "kind": a.kind, "value_kind": a.value_kind,
                            "support": st.support, "multi_count": st.multi_count,
                            "distinct": st.distinct, "min": st.min, "max": st.max})
            if st.support:
                t = pipe.index.preagg(cfs, a)
                rows = [[store.nodes[f].lexical, int(c)] + ([s, lo, hi] if t.numeric else [])
                        for f, c, s, lo, hi in zip(t.facts.tolist(), t.count.tolist(),
                                                   *(x.tolist() if x is not None else [None] * len(t.facts)
                                                     for x in (t.sum, t.min, t.max)))]
                safe = "".join(ch if ch.isalnum() else "_" for ch in name)
                _write_csv(os.path.join(pre_dir, safe + ".csv"),
                           ["fact", "count"] + (["sum", "min", "max"] if t.numeric else []), rows)
        derived = {kind: sorted(e["name"] for e in entries if e["kind"] == kind)
                   for kind in ("count", "keyword", "language", "path")}
        report["cfs"].append({"id": cfs.id, "size": len(cfs), "attributes": entries,
                              "derivations": derived})
    with open(os.path.join(cfg.out, "analysis.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return report


def cmd_explore(cfg: RunConfig, explain: bool = False, trace_earlystop: bool = False) -> dict:
    from .enumeration import explain as explain_plan
    store = load_inputs(cfg.inputs, cfg.ontology, cfg.max_error_fraction)
    out = Pipeline(store, cfg).run()
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    report = render(out.best, out.manager, cfg.out, cfg.h, cfg.k)
    out.timing["scoring"] += time.perf_counter() - t0
    report["specs"] = out.n_specs
    report["scored"] = len(out.scores)
    report["pruned"] = len(out.pruning.pruned) if out.pruning else 0
    if not out.best:
        report["reason"] = ("no candidate fact set selected" if not out.plans
                            else "no aggregate has two or more groups with distinct values")
    with open(os.path.join(cfg.out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    _write_csv(os.path.join(cfg.out, "timing.csv"), ["step", "seconds"],
               [[s, f"{out.timing.get(s, 0.0):.6f}"] for s in STEPS])
    if explain:
        with open(os.path.join(cfg.out, "plan.json"), "w") as fh:
            json.dump([lat for p in out.plans for lat in explain_plan(p.lattices)], fh, indent=1)
    if trace_earlystop and out.pruning:
        _write_csv(os.path.join(cfg.out, "earlystop_trace.csv"),
                   ["batch", "aggregate", "lower", "upper", "pruned"],
                   [[r.batch, "|".join(map(str, r.key)), r.lower, r.upper, int(r.pruned)]
                    for r in out.pruning.trace])
    return report


RATIO_BUCKETS = ((1.0, 1.0), (1.0, 1.5), (1.5, 2.0), (2.0, 5.0), (5.0, math.inf))


def _bucket(r: float) -> str:
    if r == 1.0:
        return "=1"
    if r < 1.0:
        return "<1"
    for lo, hi in RATIO_BUCKETS[1:]:
        if lo < r <= hi:
            return f"({lo},{hi}]"
    return "nan"


def cmd_bench(cfg: RunConfig, facts: int, extents: Sequence[int], measures: int, sparsity: float,
              n_sweep: Sequence[int]) -> dict:
    from .bench import compare_node_eval, error_report_rows
    from .oracle import SyntheticConfig
    os.makedirs(cfg.out, exist_ok=True)
    rows = []
    for n in n_sweep:
        ext = tuple(extents[:n]) if len(extents) >= n else tuple(extents) + (extents[-1],) * (n - len(extents))
        sc = SyntheticConfig(facts, ext, measures, sparsity, seed=cfg.seed)
        res = compare_node_eval(sc, cfg.partition_extent)
        rows.append([n, facts, ":".join(map(str, ext)), measures, sparsity,
                     f"{res['mvdcube']:.4f}", f"{res['naive']:.4f}", res["specs"], res["equal"]])
    _write_csv(os.path.join(cfg.out, "bench_timing.csv"),
               ["N", "facts", "extents", "measures", "sparsity", "mvdcube_s", "naive_s", "specs", "equal"],
               rows)
    err = error_report_rows(min(facts, 2000), min(len(extents), 4), seed=cfg.seed)
    buckets = {}
    for mode, node, fn, ratio in err:
        buckets.setdefault((mode, fn, _bucket(ratio)), 0)
        buckets[(mode, fn, _bucket(ratio))] += 1
    _write_csv(os.path.join(cfg.out, "errors.csv"), ["mode", "function", "ratio_bucket", "groups"],
               [[m, f, b, n] for (m, f, b), n in sorted(buckets.items())])
    return {"timing": rows, "error_groups": len(err)}


def cmd_oracle_check(cfg: RunConfig) -> dict:
    from .bench import oracle_check
    store = load_inputs(cfg.inputs, cfg.ontology, cfg.max_error_fraction)
    res = oracle_check(store, cfg)
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "oracle_check.json"), "w") as fh:
        json.dump(res, fh, indent=2)
    return res


# ------------------------------------------------------------ argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdfinsight",
                                description="Find the most interesting aggregates of an RDF graph.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("inputs", nargs="*", help="N-Triples (.nt) or CSV fact table (.csv) files")
        sp.add_argument("--config", help="key = value configuration file (flags override it)")
        sp.add_argument("--out")
        sp.add_argument("--ontology", help="N-Triples with rdfs:subClassOf edges")
        sp.add_argument("--cfs-mode", choices=("type", "property"))
        sp.add_argument("--cfs", action="append", help="type name, or p1+p2 in property mode")
        sp.add_argument("-k", type=int)
        sp.add_argument("--h", choices=("variance", "skewness", "kurtosis"))
        sp.add_argument("--n-max", type=int)
        sp.add_argument("--min-support", type=float)
        sp.add_argument("--distinct-cap", type=int)
        sp.add_argument("--partition-extent", type=int)
        sp.add_argument("--early-stop", choices=("on", "off"))
        sp.add_argument("--sample-size", type=int)
        sp.add_argument("--batches", type=int)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--no-derivations", action="store_true")

    a = sub.add_parser("analyze", help="attribute statistics and derivations")
    common(a)
    e = sub.add_parser("explore", help="top-k aggregates")
    common(e)
    e.add_argument("--explain", action="store_true", help="also write plan.json")
    e.add_argument("--trace-earlystop", action="store_true", help="also write earlystop_trace.csv")
    b = sub.add_parser("bench", help="synthetic timing and parent-derivation error report")
    common(b)
    b.add_argument("--facts", type=int, default=100_000)
    b.add_argument("--extents", default="100:5:2")
    b.add_argument("--measures", type=int, default=3)
    b.add_argument("--sparsity", type=float, default=0.5)
    b.add_argument("--n-sweep", default="3", help="comma-separated dimension counts, e.g. 1,2,3,4")
    o = sub.add_parser("oracle-check", help="compare the cube engine with the naive evaluator")
    common(o)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command != "bench" and not cfg.inputs:
            raise ValueError("no input files")
        if args.command == "analyze":
            cmd_analyze(cfg)
        elif args.command == "explore":
            rep = cmd_explore(cfg, args.explain, args.trace_earlystop)
            print(f"{len(rep['aggregates'])} aggregates written to {cfg.out}/report.json")
        elif args.command == "bench":
            cmd_bench(cfg, args.facts, [int(x) for x in args.extents.split(":")], args.measures,
                      args.sparsity, [int(x) for x in args.n_sweep.split(",")])
        else:
            res = cmd_oracle_check(cfg)
            print(json.dumps({k: v for k, v in res.items() if k != "mismatches"}))
            if res["mismatched_specs"]:
                return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
