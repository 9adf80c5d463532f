import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rdfinsight.bench import cube_eval, synthetic_workload
from rdfinsight.config import RunConfig
from rdfinsight.cube import translate
from rdfinsight.earlystop import (ConfidenceInterval, EstimatorState, NodeSampler, Reservoir,
                                  SpecEstimator, build_reservoirs, estimate_kurtosis_ci,
                                  estimate_minmax_bounds, estimate_skewness_ci, estimate_sum_ci,
                                  estimate_variance_ci, interestingness, interestingness_and_gradient,
                                  make_interval, norm_ppf, popoviciu_term, prune_loop,
                                  reservoir_offer, sampled_estimator, z_value)
from rdfinsight.oracle import SyntheticConfig, generate_synthetic
from rdfinsight.pipeline import Pipeline
from rdfinsight.scoring import score_moments, RunningMoments, topk

INF = math.inf


# ------------------------------------------------------------ quantiles

@pytest.mark.parametrize("p,x", [(0.975, 1.959963984540054), (0.5, 0.0), (0.001, -3.090232306167813),
                                 (0.9999, 3.719016485455709), (1e-10, -6.361340902404056)])
def test_norm_ppf(p, x):
    assert norm_ppf(p) == pytest.approx(x, abs=1e-8)


def test_z_two_sided():
    assert z_value(0.05) == pytest.approx(1.959963984540054, abs=1e-8)
    with pytest.raises(ValueError):
        z_value(0.0)


# ------------------------------------------------------------ reservoirs

def test_reservoir_fill():
    rng = random.Random(0)
    r = Reservoir(0, 3)
    for x in "abc":
        reservoir_offer(r, x, rng)
    assert r.slots == ["a", "b", "c"] and not r.saturated


def test_reservoir_inclusion_probability():
    rng = random.Random(1)
    hits = Counter()
    trials = 2000
    for _ in range(trials):
        r = Reservoir(0, 3)
        for x in range(1000):
            r.offer(x, rng)
        hits.update(r.slots)
    counts = np.array([hits[i] for i in range(1000)])
    assert counts.sum() == 3 * trials
    expected = 3 * trials / 1000
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 999 degrees of freedom: mean 999, sd about 44.7
    assert chi2 < 999 + 4 * 44.7


def test_reservoir_uniform_chi_square():
    rng = random.Random(2)
    n, cap, trials = 20, 3, 100_000
    hits = Counter()
    for _ in range(trials):
        r = Reservoir(0, cap)
        for x in range(n):
            r.offer(x, rng)
        hits.update(r.slots)
    expected = trials * cap / n
    chi2 = sum((hits[i] - expected) ** 2 / expected for i in range(n))
    # 0.999 quantile of chi-square with 19 degrees of freedom
    assert chi2 < 43.82


def test_reservoirs_partially_filled():
    rng = random.Random(0)
    rs = [Reservoir(g, 3) for g in range(4)]
    for g, r in enumerate(rs):
        for x in range(2 + g):
            r.offer(x, rng)
    assert [len(r.slots) for r in rs] == [2, 3, 3, 3]
    assert [r.seen for r in rs] == [2, 3, 4, 5]


def test_build_reservoirs_structure():
    sc = SyntheticConfig(2000, (4, 3), 1, 1.0, values_per_dim=2, seed=1)
    idx, cfs, dims, _ = synthetic_workload(sc)
    _, arr = translate([idx.values(d).restrict(cfs.members) for d in dims], 2)
    rs = build_reservoirs(arr, 10, seed=4)
    cells, counts = np.unique(arr.cells, return_counts=True)
    assert rs.cells.tolist() == cells.tolist() and rs.seen.tolist() == counts.tolist()
    sizes = np.bincount(rs.slot_stratum, minlength=len(cells))
    assert sizes.tolist() == np.minimum(counts, 10).tolist()
    for j in range(len(cells)):
        mine = rs.slot_fact[rs.slot_stratum == j]
        assert set(mine.tolist()) <= set(arr.facts[arr.cells == cells[j]].tolist())
        assert sorted(rs.slot_rank[rs.slot_stratum == j].tolist()) == list(range(len(mine)))
    again = build_reservoirs(arr, 10, seed=4)
    assert again.slot_fact.tolist() == rs.slot_fact.tolist()


# ------------------------------------------------------------ point values

def test_variance_ci_constant():
    ci = estimate_variance_ci(EstimatorState([5, 5, 5], [0, 0, 0], 60, INF))
    assert ci.estimate == 0 and ci.eps == 0


def test_variance_ci_networth():
    ci = estimate_variance_ci(EstimatorState([2.8, 0.12], [0, 0], 60, INF))
    assert ci.estimate == pytest.approx(3.5912, rel=1e-12)
    assert ci.eps == pytest.approx(0.0, abs=1e-9)


def test_variance_ci_needs_two_groups():
    with pytest.raises(ValueError):
        estimate_variance_ci(EstimatorState([1.0], [1.0], 60, INF))


def test_skewness_values():
    assert interestingness(np.array([1.0, 2.0, 3.0]), "skewness") == pytest.approx(0.0, abs=1e-15)
    assert interestingness(np.array([0.0, 0.0, 3.0]), "skewness") == pytest.approx(0.7071067811865476)
    ci = estimate_skewness_ci(EstimatorState([0.0, 0.0, 3.0], [1, 1, 1], 60, INF))
    assert ci.estimate == pytest.approx(0.7071067811865476) and ci.lower >= 0


def test_skewness_zero_variance_never_prunes():
    ci = estimate_skewness_ci(EstimatorState([2.0, 2.0], [1, 1], 60, INF))
    assert ci.upper == INF


def test_kurtosis_values():
    assert interestingness(np.array([-1.0, 1.0]), "kurtosis") == pytest.approx(-2.0)
    # m2 = 3, m4 = 21: 21/9 - 3
    assert interestingness(np.array([0.0, 0.0, 0.0, 4.0]), "kurtosis") == pytest.approx(-2 / 3)
    ci = estimate_kurtosis_ci(EstimatorState([0, 0, 0, 4], [1, 1, 1, 1], 60, INF))
    assert ci.lower >= -2.0
    assert estimate_kurtosis_ci(EstimatorState([1, 1], [1, 1], 60, INF)).upper == INF


def test_sum_ci():
    st_ = EstimatorState([1.0, 2.0], [0.5, 0.5], 5, [10, 10])
    ci = estimate_sum_ci(st_)
    assert ci.estimate == pytest.approx(50.0)
    unit = EstimatorState([1.0, 2.0, 4.0], [0.5, 0.7, 0.2], 60, [1, 1, 1])
    a = estimate_sum_ci(unit)
    unit_inf = EstimatorState([1.0, 2.0, 4.0], [0.5, 0.7, 0.2], 60, INF)
    b = estimate_variance_ci(unit_inf)
    assert a.estimate == pytest.approx(b.estimate)


def test_minmax_bounds():
    ci = estimate_minmax_bounds([3.0, 3.0, 3.0], 3.0)
    assert ci.upper == 0.0 and ci.lower == 0.0
    assert popoviciu_term(2.0, 0.0) == 1.0
    ci = estimate_minmax_bounds([2.0, 0.0], 0.0)
    assert ci.upper == pytest.approx(2.0)
    assert estimate_minmax_bounds([1.0, 2.0], None).upper == INF


@given(st.lists(st.lists(st.integers(0, 50), min_size=1, max_size=8), min_size=2, max_size=6),
       st.integers(0, 10**6), st.booleans())
def test_minmax_bound_sound(groups, seed, use_max):
    rng = random.Random(seed)
    flat = [x for g in groups for x in g]
    b = max(flat) if use_max else min(flat)
    samples = [rng.sample(g, rng.randint(1, len(g))) for g in groups]
    z = [max(s) if use_max else min(s) for s in samples]
    truth = [max(g) if use_max else min(g) for g in groups]
    ci = estimate_minmax_bounds(z, b)
    assert float(interestingness(np.array(truth, dtype=float), "variance")) <= ci.upper + 1e-9
    assert ci.lower == 0.0


# ------------------------------------------------------------ gradients, monotonicity

@given(st.lists(st.floats(-100, 100), min_size=3, max_size=8), st.sampled_from(["variance", "skewness", "kurtosis"]))
def test_gradient_finite_difference(y, h):
    y = np.array(y)
    if y.std() < 1e-2:
        return
    val, grad = interestingness_and_gradient(y, h)
    step = 1e-6 * max(1.0, np.abs(y).max())
    for s in range(len(y)):
        up, dn = y.copy(), y.copy()
        up[s] += step
        dn[s] -= step
        fd = (interestingness(up, h) - interestingness(dn, h)) / (2 * step)
        assert grad[s] == pytest.approx(fd, rel=1e-4, abs=1e-6 * max(1.0, abs(float(val))))


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.sampled_from(["variance", "skewness", "kurtosis"]))
def test_eps_shrinks_with_r(means, h):
    m = np.array(means)
    if m.std() < 1e-3:
        return
    eps = [make_interval(m, np.full(len(m), 4.0) / r, h, 0.05).eps for r in (10, 20, 60, 200)]
    if not all(math.isfinite(e) for e in eps) or eps[0] <= 1e-9 * (abs(float(interestingness(m, h))) + 1):
        return
    assert all(a > b for a, b in zip(eps, eps[1:]))


def test_interval_invariants():
    with pytest.raises(ValueError):
        ConfidenceInterval(1.0, -1.0, 0.0, 2.0, 0.05)


# ------------------------------------------------------------ full-population sampling

@pytest.mark.parametrize("function", ["count", "sum", "avg"])
@pytest.mark.parametrize("h", ["variance", "skewness", "kurtosis"])
def test_full_sample_equals_exact(function, h):
    sc = SyntheticConfig(400, (5, 4), 1, 1.0, seed=7, missing_rate=0.1, values_per_measure=2)
    idx, cfs, dims, ms = synthetic_workload(sc)
    run = cube_eval(idx, cfs, dims, ms, c=2)
    dm = idx.preagg(cfs, ms[0]).dense(idx.store.num_facts)
    rs = build_reservoirs(run.array, 10_000, seed=1)
    for node in run.tree.nodes:
        if not node.dims:
            continue
        names = tuple(dims[i].name for i in node.dims)
        exact = run.results[(names, ms[0].name, function)]
        sampler = NodeSampler(rs, run.tree.extents, node.dims, 10_000)
        y, var = sampler.group_estimates(1, dm, function)
        assert sorted(y.tolist()) == pytest.approx(sorted(exact.values()), rel=1e-9)
        assert np.allclose(var, 0.0)
        ci = sampled_estimator("k", sampler, dm, function, h, 0.05).interval(1)
        want = score_moments("k", RunningMoments.of(np.array(list(exact.values()))), h).value \
            if len(exact) >= 2 and np.ptp(list(exact.values())) > 0 else None
        if want is not None:
            assert ci.estimate == pytest.approx(want, rel=1e-9)


# ------------------------------------------------------------ pruning

def _fixed(key, lo, hi):
    return SpecEstimator(key, lambda b: ConfidenceInterval((lo + hi) / 2, (hi - lo) / 2, lo, hi, 0.05, 2))


def test_prune_below_kth_lower_bound():
    ests = [_fixed("a1", 9, 11), _fixed("a2", 7, 10), _fixed("a3", 5, 8), _fixed("a4", 4, 6),
            _fixed("a5", 1, 3)]
    res = prune_loop(ests, 3, 2)
    assert res.pruned == ["a5"]
    assert "a4" in res.survivors


def test_no_pruning_when_k_large():
    ests = [_fixed(i, i, i + 0.5) for i in range(4)]
    res = prune_loop(ests, 4, 2)
    assert res.pruned == [] and sorted(res.survivors) == [0, 1, 2, 3]


def test_idle_batches_stop():
    calls = Counter()

    def make(key, lo, hi):
        def interval(b):
            calls[b] += 1
            return ConfidenceInterval(lo, 0.0, lo, hi, 0.05, 2)
        return SpecEstimator(key, interval)

    ests = [make(i, 0, 10) for i in range(5)]
    res = prune_loop(ests, 2, 5, max_idle_batches=1)
    assert res.batches == 1 and set(calls) == {1}


def test_pruning_sound_on_synthetic():
    ok = 0
    seeds = range(10)
    for seed in seeds:
        st_ = generate_synthetic(SyntheticConfig(2000, (12, 6, 3), 6, 0.6, seed=seed))
        full = Pipeline(st_, RunConfig(early_stop=False, threads=1, seed=seed)).run()
        es = Pipeline(st_, RunConfig(k=5, threads=1, seed=seed)).run()
        truth = {s.key: s.value for s in full.scores}
        kth = topk(full.scores, 5)[-1].value
        assert es.pruning.pruned
        if all(truth.get(key, -INF) <= kth for key in es.pruning.pruned):
            ok += 1
    assert ok / len(seeds) >= 0.95
