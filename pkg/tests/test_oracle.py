import itertools

import pytest
from hypothesis import given, strategies as st

from rdfinsight.oracle import (SyntheticConfig, adversarial_table, count_correct_nodes, fact_table,
                               generate_synthetic, multi_valued_dims, naive_eval, naive_eval_node,
                               random_instance, simulate_parent_derivation, synthetic_coordinates)

CEO_DIMS = ["nationality", "gender", "company/area"]


def short(rows):
    return {tuple(v[0].rsplit("/", 1)[-1] for v in k): x for k, x in rows.items()}


@pytest.fixture(scope="module")
def ceo_table(ceo_index, ceo_cfs, ceo_attrs):
    return fact_table(ceo_index, ceo_cfs, [ceo_attrs[n] for n in CEO_DIMS + ["netWorth", "age",
                                                                         "count(company)"]])


def test_naive_avg_age_by_nationality(ceo_table):
    got = short(naive_eval(("nationality", "count(company)"), "age", "avg", ceo_table))
    assert got == {("Nigeria", "1"): 66.0, ("France", "1"): 66.0, ("Lebanon", "1"): 66.0,
                   ("Brazil", "1"): 66.0}


def test_naive_counts_facts_once(ceo_table):
    got = short(naive_eval(("company/area",), "netWorth", "sum", ceo_table))
    assert got[("Manufacturer",)] == pytest.approx(2.92e9)
    assert got[("NaturalResources",)] == 2.8e9


def test_parent_derivation_wrong_values(ceo_table):
    derived, _ = simulate_parent_derivation(CEO_DIMS, None, "count", ceo_table)
    assert short(derived[("gender",)]) == {("female",): 3.0}
    assert short(derived[("company/area",)])[("Manufacturer",)] == 5.0
    derived, rep = simulate_parent_derivation(CEO_DIMS, "netWorth", "sum", ceo_table)
    assert short(derived[("company/area",)])[("Manufacturer",)] == pytest.approx(2.8e9 + 4 * 0.12e9)
    assert rep.nodes[("gender",)].wrong
    assert not rep.nodes[tuple(CEO_DIMS)].wrong


def test_multi_valued_dims(ceo_table):
    assert multi_valued_dims(CEO_DIMS, ceo_table) == ["nationality", "company/area"]


def test_count_correct_nodes():
    assert [count_correct_nodes(3, k) for k in range(4)] == [8, 4, 2, 1]
    with pytest.raises(ValueError):
        count_correct_nodes(2, 3)


@pytest.mark.parametrize("n,k", [(n, k) for n in range(1, 4) for k in range(n + 1)])
def test_adversarial_correct_nodes(n, k):
    dims, table = adversarial_table(n, k, 150, seed=n * 10 + k)
    assert multi_valued_dims(dims, table) == dims[:k]
    # avg survives uniform duplication (two values per multi-valued dimension), so only
    # count and sum are checked
    for fn in ("count", "sum"):
        _, rep = simulate_parent_derivation(dims, "m", fn, table)
        correct = rep.correct_nodes
        assert len(correct) == count_correct_nodes(n, k)
        assert all(set(dims[:k]) <= set(node) for node in correct)


def test_no_multivalued_no_errors():
    dims, table = adversarial_table(3, 0, 100, seed=2)
    _, rep = simulate_parent_derivation(dims, "m", "sum", table)
    assert not any(n.wrong for n in rep.nodes.values())


def test_star_overcounts():
    dims, table = adversarial_table(3, 1, 200, seed=4)
    _, rep = simulate_parent_derivation(dims, "m", "count", table)
    assert all(r >= 1 for r in rep.ratios())
    assert max(rep.ratios()) > 1


def test_node_eval_matches_single():
    dims, table = adversarial_table(3, 2, 80, seed=9)
    specs = [("m", f) for f in ("count", "sum", "avg", "min", "max")]
    for k in range(1, 4):
        for node in itertools.combinations(dims, k):
            many = naive_eval_node(node, specs, table)
            for m, f in specs:
                assert many[(m, f)] == pytest.approx(naive_eval(node, m, f, table), rel=1e-12)


def test_synthetic_sparsity():
    sc = SyntheticConfig(50_000, (100, 5, 2), 1, 0.1, seed=0)
    coords = synthetic_coordinates(sc)
    occupied = len({tuple(r) for r in coords.tolist()})
    assert occupied / 1000 == pytest.approx(0.1, abs=0.02)


def test_synthetic_full_small():
    coords = synthetic_coordinates(SyntheticConfig(200, (2, 2), 1, 1.0, seed=1))
    assert len({tuple(r) for r in coords.tolist()}) == 4


def test_synthetic_deterministic():
    sc = random_instance(5)
    a, b = generate_synthetic(sc), generate_synthetic(sc)
    assert list(map(repr, a.triples())) == list(map(repr, b.triples()))
    assert a.num_facts == sc.n_facts


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(10, (0,), 1, 1.0)
    with pytest.raises(ValueError):
        SyntheticConfig(10, (3,), 1, 1.5)


@given(st.integers(0, 10**6))
def test_random_instance_bounds(seed):
    sc = random_instance(seed)
    assert 1 <= sc.n <= 4 and sc.n_facts <= 1000
    assert all(1 <= e <= 8 for e in sc.extents)
