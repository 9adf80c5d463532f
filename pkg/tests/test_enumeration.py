import itertools
import math

import pytest
from hypothesis import given, strategies as st

from rdfinsight.attributes import COUNT, DIRECT, PATH, Attribute, AttributeStats
from rdfinsight.enumeration import (AggregateSpec, LatticeSpec, build_lattices,
                                    explain, filter_dimensions, mine_mfs,
                                    split_related)


def stats(name, support, distinct, n, kind="string", multi=0):
    return AttributeStats(name, kind, support, multi, distinct, cfs_size=n)


def test_filter_dimensions():
    n = 1000
    s = [stats("birthday", n, n, n), stats("gender", n, 2, n), stats("rare", 100, 3, n),
         stats("city", 600, 150, n)]
    assert filter_dimensions(s, n) == ["gender", "city"]


def test_filter_dimensions_hundred_values_large_cfs():
    n = 1_000_000
    assert filter_dimensions([stats("d1", n, 100, n)], n) == ["d1"]


def test_filter_dimensions_small_cfs_cap():
    # cap is max(100, 0.2 |CFS|)
    assert filter_dimensions([stats("d", 50, 101, 100)], 100) == []
    assert filter_dimensions([stats("d", 1000, 101, 1000)], 1000) == ["d"]


def brute_mfs(transactions, items, min_count):
    freq = []
    for k in range(1, len(items) + 1):
        for combo in itertools.combinations(items, k):
            if sum(set(combo) <= t for t in transactions) >= min_count:
                freq.append(frozenset(combo))
    return {s for s in freq if not any(s < t for t in freq)}


@given(st.lists(st.sets(st.sampled_from("abcdefghijkl"), max_size=8), min_size=1, max_size=20),
       st.floats(0.05, 1.0))
def test_mfs_matches_brute_force(transactions, support):
    items = sorted(set().union(*transactions)) or ["a"]
    got = mine_mfs(transactions, items, support, n_max=12)
    min_count = max(1, math.ceil(support * len(transactions) - 1e-9))
    assert set(got) == brute_mfs(transactions, items, min_count)


def test_single_root_when_all_shared():
    assert mine_mfs([{"a", "b", "c"}] * 5, ["a", "b", "c"], 0.5) == [frozenset("abc")]


def test_truncation_covers_all():
    facts = [set("abcdef")] * 20
    roots = mine_mfs(facts, list("abcdef"), 0.5, n_max=4)
    assert all(len(r) <= 4 for r in roots)
    assert set().union(*roots) == set("abcdef")
    assert len(roots) == 15


def test_split_related():
    attrs = {"nat": Attribute("nat", DIRECT, ("p:nat",)),
             "count(nat)": Attribute("count(nat)", COUNT, ("p:nat",), "numeric"),
             "g": Attribute("g", DIRECT, ("p:g",)),
             "company": Attribute("company", DIRECT, ("p:c",)),
             "company/area": Attribute("company/area", PATH, ("p:c", "p:a"))}
    out = split_related([frozenset(attrs)], attrs)
    assert all(not (("nat" in s) and ("count(nat)" in s)) for s in out)
    assert all(not (("company" in s) and ("company/area" in s)) for s in out)
    assert frozenset({"count(nat)", "g", "company/area"}) in out


def test_ceo_roots(ceo_index, ceo_cfs):
    from rdfinsight.config import RunConfig
    from rdfinsight.pipeline import Pipeline
    pipe = Pipeline(ceo_index.store, RunConfig())
    plan = pipe.plan(ceo_cfs)
    for want in ({"countryOfOrigin"}, {"nationality", "count(company)"},
                 {"nationality", "gender", "company/area"}):
        assert any(want <= r for r in plan.roots)
    assert "type" not in plan.dimensions
    assert all(len(r) <= 4 for r in plan.roots)


def _attrs():
    return {"d1": Attribute("d1", DIRECT, ("p:d1",)),
            "d2": Attribute("d2", DIRECT, ("p:d2",)),
            "m1": Attribute("m1", DIRECT, ("p:m1",), "numeric"),
            "label": Attribute("label", DIRECT, ("p:l",)),
            "count(d1)": Attribute("count(d1)", COUNT, ("p:d1",), "numeric")}


def _stats():
    return {n: stats(n, 10, 3, 10) for n in _attrs()}


def test_one_dim_one_measure_ten_specs():
    lats = build_lattices("c", [frozenset({"d1"})], ["m1"], _attrs(), _stats())
    assert len(lats) == 1
    specs = lats[0].all_specs()
    assert len(specs) == 10
    assert {s.dims for s in specs} == {("d1",), ()}


def test_functions_assignment():
    lats = build_lattices("c", [frozenset({"d2"})], ["m1", "label"], _attrs(), _stats())
    assert lats[0].functions == {"m1": ("count", "sum", "avg", "min", "max"), "label": ("count",)}


def test_derived_measure_excluded():
    lats = build_lattices("c", [frozenset({"d1"})], ["m1", "count(d1)"], _attrs(), _stats())
    assert [m.name for m in lats[0].measures] == ["m1"]
    with pytest.raises(ValueError):
        LatticeSpec("c", (_attrs()["d1"],), (_attrs()["count(d1)"],), {"count(d1)": ("count",)})


def test_dedup_across_lattices():
    lats = build_lattices("c", [frozenset({"d1", "d2"}), frozenset({"d1", "label"})], ["m1"],
                          _attrs(), _stats())
    keys = [s.key for lat in lats for s in lat.all_specs()]
    assert len(keys) == len(set(keys))
    shared = lats[1].shared
    assert ("d1",) in shared and () in shared
    spec = next(s for s in lats[0].owned[("d1",)] if s.function == "avg")
    assert any(s is spec for s in shared[("d1",)])


def test_every_root_subset_represented_once():
    roots = [frozenset({"d1", "d2"}), frozenset({"d2", "label"})]
    lats = build_lattices("c", roots, ["m1"], _attrs(), _stats())
    seen = {}
    for lat in lats:
        for s in lat.all_specs():
            seen[s.key] = seen.get(s.key, 0) + 1
    for r in roots:
        for k in range(len(r) + 1):
            for sub in itertools.combinations(sorted(r), k):
                for f in ("count", "sum", "avg", "min", "max"):
                    assert seen[("c", tuple(sorted(sub)), "m1", f)] == 1


def test_dimension_order_and_explain():
    st_ = _stats()
    st_["d2"] = stats("d2", 10, 7, 10)
    lats = build_lattices("c", [frozenset({"d1", "d2"})], ["m1"], _attrs(), st_)
    assert [d.name for d in lats[0].dims] == ["d2", "d1"]
    plan = explain(lats)
    assert plan[0]["dimensions"] == ["d2", "d1"] and len(plan[0]["nodes"]) == 4


def test_spec_key_canonical():
    a = AggregateSpec("c", ("b", "a"), "m", "sum")
    b = AggregateSpec("c", ("a", "b"), "m", "sum")
    assert a.key == b.key
