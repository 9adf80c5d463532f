"""Sampling-based confidence intervals on interestingness and top-k pruning.

Each root cell of a lattice keeps a uniform reservoir of its facts. A lattice
node's group is a union of root cells, so its sample is the union of their
reservoirs (a stratified sample). Group statistics are estimated per stratum
and combined; the interestingness interval follows from the delta method:
``tau^2 = sum_s (dH/dy_s)^2 Var(y_s)`` and ``eps = z * tau``.
"""
from __future__ import annotations

import math
import random
from statistics import NormalDist
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .attributes import DenseMeasure
from .cube import CellArray, c_strides

H_FUNCTIONS = ("variance", "skewness", "kurtosis")


# ------------------------------------------------------------ normal quantile

def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return _STD_NORMAL.inv_cdf(p)


_STD_NORMAL = NormalDist()


def z_value(alpha: float) -> float:
    """Two-sided critical value for confidence ``1 - alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return norm_ppf(1 - alpha / 2)


# ------------------------------------------------------------ reservoirs

@dataclass
class Reservoir:
    group: int
    capacity: int
    slots: list[int] = field(default_factory=list)
    seen: int = 0

    def offer(self, item: int, rng: random.Random) -> "Reservoir":
        self.seen += 1
        if len(self.slots) < self.capacity:
            self.slots.append(item)
        else:
            j = rng.randrange(self.seen)
            if j < self.capacity:
                self.slots[j] = item
        return self

    @property
    def saturated(self) -> bool:
        return self.seen > self.capacity


def reservoir_offer(res: Reservoir, item: int, rng: random.Random) -> Reservoir:
    return res.offer(item, rng)


@dataclass
class ReservoirSet:
    """Flattened per-root-cell reservoirs; slot order is a random permutation."""

    cells: np.ndarray       # root cell index per stratum
    seen: np.ndarray        # stream length per stratum
    capacity: int
    slot_stratum: np.ndarray
    slot_fact: np.ndarray
    slot_rank: np.ndarray


def build_reservoirs(array: CellArray, capacity: int, seed: int) -> ReservoirSet:
    """One reservoir per non-empty root cell, fed with its facts in id order."""
    rng = random.Random(seed)
    order = np.lexsort((array.facts, array.cells))
    cells, facts = array.cells[order], array.facts[order]
    cuts = np.flatnonzero(np.diff(cells)) + 1
    strata, seen, s_str, s_fact, s_rank = [], [], [], [], []
    for j, (cs, fs) in enumerate(zip(np.split(cells, cuts), np.split(facts, cuts))):
        if len(cs) == 0:
            continue
        res = Reservoir(int(cs[0]), capacity)
        for f in fs.tolist():
            res.offer(f, rng)
        rng.shuffle(res.slots)
        strata.append(res.group)
        seen.append(res.seen)
        s_str.extend([j] * len(res.slots))
        s_fact.extend(res.slots)
        s_rank.extend(range(len(res.slots)))
    return ReservoirSet(np.array(strata, dtype=np.int64), np.array(seen, dtype=np.int64), capacity,
                        np.array(s_str, dtype=np.int64), np.array(s_fact, dtype=np.int64),
                        np.array(s_rank, dtype=np.int64))


# ------------------------------------------------------------ intervals

@dataclass
class ConfidenceInterval:
    estimate: float
    eps: float
    lower: float
    upper: float
    alpha: float
    groups: int = 0

    def __post_init__(self) -> None:
        if not self.eps >= 0 or not self.lower <= self.upper:
            raise ValueError("malformed interval")


def _moments(y: np.ndarray):
    G = y.shape[-1]
    d = y - y.mean(axis=-1, keepdims=True)
    d2 = d * d
    m2 = d2.mean(axis=-1)
    m3 = (d2 * d).mean(axis=-1)
    m4 = (d2 * d2).mean(axis=-1)
    return G, d, d2, m2, m3, m4


def interestingness(y: np.ndarray, h: str) -> np.ndarray:
    """Exact h over the last axis; NaN where undefined."""
    return interestingness_and_gradient(y, h)[0]


def interestingness_and_gradient(y: np.ndarray, h: str) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    G, d, d2, m2, m3, m4 = _moments(y)
    if G < 2:
        nan = np.full(y.shape[:-1], np.nan)
        return nan, np.full(y.shape, np.nan)
    dm2 = (2.0 / G) * d
    if h == "variance":
        return G / (G - 1) * m2, G / (G - 1) * dm2
    with np.errstate(divide="ignore", invalid="ignore"):
        if h == "skewness":
            dm3 = (3.0 / G) * (d2 - m2[..., None])
            val = m3 / m2 ** 1.5
            grad = dm3 / (m2 ** 1.5)[..., None] - (1.5 * m3 / m2 ** 2.5)[..., None] * dm2
        elif h == "kurtosis":
            dm4 = (4.0 / G) * (d2 * d - m3[..., None])
            val = m4 / m2 ** 2 - 3.0
            grad = dm4 / (m2 ** 2)[..., None] - (2 * m4 / m2 ** 3)[..., None] * dm2
        else:
            raise ValueError(f"unknown interestingness {h!r}")
    zero = m2 <= 1e-300 * np.maximum(1.0, (y * y).mean(axis=-1))
    val = np.where(zero, np.nan, val)
    return val, grad


def interval_arrays(y: np.ndarray, var_y: np.ndarray, h: str, z: float) -> tuple[np.ndarray, np.ndarray]:
    """Point estimate and half-width, vectorized over leading axes."""
    val, grad = interestingness_and_gradient(y, h)
    tau2 = np.nansum(grad * grad * var_y, axis=-1)
    # rounding allowance: h can be constant in y (kurtosis of three groups)
    eps = z * np.sqrt(tau2) + 1e-12 * np.abs(np.nan_to_num(val))
    eps = np.where(np.isnan(val), np.inf, eps)
    return val, eps


def make_interval(y: np.ndarray, var_y: np.ndarray, h: str, alpha: float) -> ConfidenceInterval:
    y = np.asarray(y, dtype=np.float64)
    G = y.shape[-1]
    if G < 2:
        return ConfidenceInterval(math.nan, math.inf, 0.0 if h != "kurtosis" else -math.inf,
                                  math.inf, alpha, G)
    val, eps = interval_arrays(y, np.asarray(var_y, dtype=np.float64), h, z_value(alpha))
    val, eps = float(val), float(eps)
    if math.isnan(val):
        lo = 0.0 if h != "kurtosis" else -math.inf
        return ConfidenceInterval(math.nan, math.inf, lo, math.inf, alpha, G)
    lo, hi = val - eps, val + eps
    if h == "variance":
        lo = max(lo, 0.0)
    elif h == "skewness":
        # ranked by magnitude
        if lo <= 0.0 <= hi:
            lo, hi = 0.0, max(-lo, hi)
        else:
            lo, hi = min(abs(lo), abs(hi)), max(abs(lo), abs(hi))
        val = abs(val)
    elif h == "kurtosis":
        lo = max(lo, -2.0)
    return ConfidenceInterval(val, eps, lo, max(hi, lo), alpha, G)


@dataclass
class EstimatorState:
    """Per-group sample summaries of one aggregate."""

    means: np.ndarray
    variances: np.ndarray
    r: np.ndarray
    c: np.ndarray

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.maximum(np.asarray(self.variances, dtype=np.float64), 0.0)
        self.r = np.broadcast_to(np.asarray(self.r, dtype=np.float64), self.means.shape).copy()
        self.c = np.broadcast_to(np.asarray(self.c, dtype=np.float64), self.means.shape).copy()

    @classmethod
    def from_samples(cls, samples: Sequence[Sequence[float]], sizes: Optional[Sequence[float]] = None
                     ) -> "EstimatorState":
        means, var, r = [], [], []
        for s in samples:
            a = np.asarray(s, dtype=np.float64)
            means.append(a.mean())
            var.append(a.var(ddof=1) if len(a) >= 2 else 0.0)
            r.append(len(a))
        c = sizes if sizes is not None else [math.inf] * len(means)
        return cls(np.array(means), np.array(var), np.array(r), np.array(c, dtype=np.float64))

    @property
    def G(self) -> int:
        return len(self.means)

    def fpc(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(np.isinf(self.c), 1.0, 1.0 - self.r / self.c)
        return np.clip(f, 0.0, 1.0)

    def mean_variance(self) -> np.ndarray:
        """Variance of each group's sample mean."""
        return self.variances / self.r * self.fpc()

    def sums(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.where(np.isinf(self.c), 1.0, self.c)
        return c * self.means, c * c * self.mean_variance()


def estimate_variance_ci(state: EstimatorState, alpha: float = 0.05) -> ConfidenceInterval:
    if state.G < 2:
        raise ValueError("interestingness undefined for fewer than 2 groups")
    return make_interval(state.means, state.mean_variance(), "variance", alpha)


def estimate_skewness_ci(state: EstimatorState, alpha: float = 0.05) -> ConfidenceInterval:
    if state.G < 2:
        raise ValueError("interestingness undefined for fewer than 2 groups")
    return make_interval(state.means, state.mean_variance(), "skewness", alpha)


def estimate_kurtosis_ci(state: EstimatorState, alpha: float = 0.05) -> ConfidenceInterval:
    if state.G < 2:
        raise ValueError("interestingness undefined for fewer than 2 groups")
    return make_interval(state.means, state.mean_variance(), "kurtosis", alpha)


def estimate_sum_ci(state: EstimatorState, alpha: float = 0.05, h: str = "variance") -> ConfidenceInterval:
    """Interval for h over the group sums ``c_i * mean_i``."""
    if state.G < 2:
        raise ValueError("interestingness undefined for fewer than 2 groups")
    y, var_y = state.sums()
    return make_interval(y, var_y, h, alpha)


def popoviciu_term(sample_extreme: float, bound: float) -> float:
    return 0.25 * (sample_extreme - bound) ** 2


def estimate_minmax_bounds(sample_extremes: Sequence[float], bound: Optional[float],
                           alpha: float = 0.05, h: str = "variance") -> ConfidenceInterval:
    """Deterministic variance bounds for per-group min (or max) aggregates.

    Every true group minimum lies between the global minimum ``bound`` and its
    sample minimum (mirrored for max), so all of them fit in an interval of
    width ``max_i |Z_i - b|`` and their unbiased variance is at most
    ``G/(G-1) * max_i (Z_i - b)^2 / 4``.
    """
    z = np.asarray(sample_extremes, dtype=np.float64)
    G = len(z)
    if bound is None or h != "variance" or G < 2 or not np.isfinite(bound):
        lo = 0.0 if h != "kurtosis" else -math.inf
        return ConfidenceInterval(math.nan, math.inf, lo, math.inf, alpha, G)
    point = float(interestingness(z, "variance"))
    upper = G / (G - 1) * max(popoviciu_term(float(x), bound) for x in z)
    return ConfidenceInterval(point, max(upper - point, 0.0), 0.0, upper, alpha, G)


# ------------------------------------------------------------ stratified group estimates

@dataclass
class NodeSampler:
    """Per-batch group estimates for every aggregate of one lattice node."""

    reservoirs: ReservoirSet
    extents: tuple[int, ...]
    node_dims: tuple[int, ...]
    batch_size: int

    def __post_init__(self) -> None:
        strides = c_strides(self.extents)
        cells = self.reservoirs.cells
        coords = [(cells // strides[d]) % self.extents[d] for d in self.node_dims]
        key = np.zeros(len(cells), dtype=np.int64)
        null = np.zeros(len(cells), dtype=bool)
        nstr = c_strides([self.extents[d] for d in self.node_dims])
        for co, s in zip(coords, nstr):
            key += co * s
            null |= co == 0
        self.group_keys, self.stratum_group = np.unique(key, return_inverse=True)
        self.group_null = np.zeros(len(self.group_keys), dtype=bool)
        np.logical_or.at(self.group_null, self.stratum_group, null)

    @property
    def n_batches(self) -> int:
        return max(1, -(-self.reservoirs.capacity // self.batch_size))

    def _mask(self, batch: int) -> np.ndarray:
        return self.reservoirs.slot_rank < batch * self.batch_size

    def group_estimates(self, batch: int, dm: DenseMeasure, function: str):
        """(y, var_y) over non-null groups, or sample extremes for min/max."""
        rs = self.reservoirs
        m = self._mask(batch)
        st, facts = rs.slot_stratum[m], rs.slot_fact[m]
        n_str = len(rs.cells)
        r = np.bincount(st, minlength=n_str).astype(np.float64)
        c = rs.seen.astype(np.float64)
        fpc = np.where(r > 0, np.clip(1.0 - r / c, 0.0, 1.0), 0.0)
        ng = len(self.group_keys)
        g = self.stratum_group
        has = dm.has[facts]
        if function in ("min", "max"):
            vals = (dm.min if function == "min" else dm.max)[facts]
            ext = np.full(ng, np.inf if function == "min" else -np.inf)
            red = np.minimum if function == "min" else np.maximum
            red.at(ext, g[st[has]], vals[has])
            ok = np.isfinite(ext) & ~self.group_null
            return ext[ok], None
        if function == "avg":
            x, w = dm.sum[facts], dm.count[facts]
        elif function == "sum":
            x, w = dm.sum[facts], None
        else:
            x, w = has.astype(np.float64), None

        def stratum_moments(v: np.ndarray):
            s1 = np.bincount(st, weights=v, minlength=n_str)
            return s1 / np.maximum(r, 1)

        mx = stratum_moments(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            if w is None:
                ssq = np.bincount(st, weights=(x - mx[st]) ** 2, minlength=n_str)
                var = np.where(r >= 2, ssq / (r - 1), 0.0)
                tot = np.bincount(g, weights=c * mx, minlength=ng)
                var_tot = np.bincount(g, weights=c * c * var / np.maximum(r, 1) * fpc, minlength=ng)
                present = np.bincount(g, weights=c * stratum_moments(has.astype(np.float64)), minlength=ng) > 0
                ok = present & ~self.group_null
                return tot[ok], var_tot[ok]
            mw = stratum_moments(w)
            num = np.bincount(g, weights=c * mx, minlength=ng)
            den = np.bincount(g, weights=c * mw, minlength=ng)
            ok = (den > 0) & ~self.group_null
            ratio = np.where(den > 0, num / den, 0.0)
            resid = (x - mx[st]) - ratio[g[st]] * (w - mw[st])
            ssq = np.bincount(st, weights=resid ** 2, minlength=n_str)
            var = np.where(r >= 2, ssq / (r - 1), 0.0)
            var_num = np.bincount(g, weights=c * c * var / np.maximum(r, 1) * fpc, minlength=ng)
            var_ratio = var_num / np.where(den > 0, den, 1.0) ** 2
        return ratio[ok], var_ratio[ok]


@dataclass
class SpecEstimator:
    """Produces an interval for one aggregate at a given batch."""

    key: tuple
    interval: Callable[[int], ConfidenceInterval]


def sampled_estimator(key: tuple, sampler: NodeSampler, dm: DenseMeasure, function: str, h: str,
                      alpha: float, bound: Optional[float] = None) -> SpecEstimator:
    def interval(batch: int) -> ConfidenceInterval:
        y, var_y = sampler.group_estimates(batch, dm, function)
        if function in ("min", "max"):
            return estimate_minmax_bounds(y, bound, alpha, h)
        return make_interval(y, var_y, h, alpha)
    return SpecEstimator(key, interval)


# ------------------------------------------------------------ pruning loop

@dataclass
class TraceRow:
    batch: int
    key: tuple
    lower: float
    upper: float
    pruned: bool


@dataclass
class PruneResult:
    pruned: list[tuple]
    survivors: list[tuple]
    trace: list[TraceRow]
    batches: int


def prune_loop(estimators: Sequence[SpecEstimator], k: int, n_batches: int,
               max_idle_batches: int = 1) -> PruneResult:
    """Batchwise pruning of aggregates whose upper bound falls below the
    k-th largest lower bound among those still alive."""
    alive = {e.key: e for e in estimators}
    pruned: list[tuple] = []
    trace: list[TraceRow] = []
    if len(alive) <= k:
        return PruneResult([], list(alive), trace, 0)
    idle = 0
    batch = 0
    for batch in range(1, n_batches + 1):
        cis = {key: e.interval(batch) for key, e in alive.items()}
        lowers = sorted((ci.lower for ci in cis.values()), reverse=True)
        kth = lowers[k - 1] if len(lowers) >= k else -math.inf
        now = [key for key, ci in cis.items() if ci.upper < kth]
        for key, ci in cis.items():
            trace.append(TraceRow(batch, key, ci.lower, ci.upper, key in now))
        for key in now:
            del alive[key]
        pruned.extend(now)
        idle = 0 if now else idle + 1
        if idle >= max_idle_batches or len(alive) <= k:
            break
    return PruneResult(pruned, list(alive), trace, batch)
