"""Aggregate result manager, exact interestingness, top-k selection and reports."""
from __future__ import annotations

import csv
import heapq
import json
import math
import os
import re
import threading
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .cube import AggregateResult

H_FUNCTIONS = ("variance", "skewness", "kurtosis")


class UnscorableError(ValueError):
    pass


@dataclass
class RunningMoments:
    """Count, mean and central moment sums M2..M4, mergeable chunk by chunk."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    @classmethod
    def of(cls, values: np.ndarray) -> "RunningMoments":
        v = np.asarray(values, dtype=np.float64)
        if len(v) == 0:
            return cls()
        mu = float(v.mean())
        d = v - mu
        d2 = d * d
        return cls(len(v), mu, float(d2.sum()), float((d2 * d).sum()), float((d2 * d2).sum()),
                   float(v.min()), float(v.max()))

    def merge(self, o: "RunningMoments") -> "RunningMoments":
        if o.n == 0:
            return self
        if self.n == 0:
            return o
        na, nb = self.n, o.n
        n = na + nb
        delta = o.mean - self.mean
        mean = self.mean + delta * nb / n
        m2 = self.m2 + o.m2 + delta ** 2 * na * nb / n
        m3 = (self.m3 + o.m3 + delta ** 3 * na * nb * (na - nb) / n ** 2
              + 3 * delta * (na * o.m2 - nb * self.m2) / n)
        m4 = (self.m4 + o.m4 + delta ** 4 * na * nb * (na * na - na * nb + nb * nb) / n ** 3
              + 6 * delta ** 2 * (na * na * o.m2 + nb * nb * self.m2) / n ** 2
              + 4 * delta * (na * o.m3 - nb * self.m3) / n)
        return RunningMoments(n, mean, m2, m3, m4, min(self.min, o.min), max(self.max, o.max))


@dataclass(frozen=True)
class InterestingnessScore:
    key: tuple
    h: str
    value: float
    W: int


def score_moments(key: tuple, mom: RunningMoments, h: str) -> InterestingnessScore:
    W = mom.n
    if W < 2:
        raise UnscorableError(f"{W} group(s)")
    if h == "variance":
        return InterestingnessScore(key, h, max(mom.m2, 0.0) / (W - 1), W)
    if mom.max == mom.min or mom.m2 <= 0.0:
        raise UnscorableError("zero variance")
    if h == "skewness":
        return InterestingnessScore(key, h, abs(math.sqrt(W) * mom.m3 / mom.m2 ** 1.5), W)
    if h == "kurtosis":
        return InterestingnessScore(key, h, W * mom.m4 / mom.m2 ** 2 - 3.0, W)
    raise ValueError(f"unknown interestingness {h!r}")


def score(result: AggregateResult, h: str) -> InterestingnessScore:
    """Exact interestingness of a result's non-null aggregated values."""
    return score_moments(result.spec.key, RunningMoments.of(result.scorable_values()), h)


class ResultManager:
    """Collects result chunks from concurrent evaluators; keeps running statistics."""

    def __init__(self, keep_rows: bool = True):
        self._lock = threading.Lock()
        self._chunks: dict[tuple, list[AggregateResult]] = {}
        self._moments: dict[tuple, RunningMoments] = {}
        self.specs: dict[tuple, object] = {}
        self.keep_rows = keep_rows

    def add(self, res: AggregateResult) -> None:
        mom = RunningMoments.of(res.scorable_values())
        key = res.spec.key
        with self._lock:
            self.specs[key] = res.spec
            if self.keep_rows:
                self._chunks.setdefault(key, []).append(res)
            self._moments[key] = self._moments.get(key, RunningMoments()).merge(mom)

    __call__ = add

    def keys(self) -> list[tuple]:
        return sorted(self.specs, key=repr)

    def moments(self, key: tuple) -> RunningMoments:
        return self._moments.get(key, RunningMoments())

    def result(self, key: tuple) -> AggregateResult:
        chunks = self._chunks[key]
        first = chunks[0]
        coords = np.concatenate([c.coords for c in chunks])
        values = np.concatenate([c.values for c in chunks])
        null = np.concatenate([c.null for c in chunks])
        order = np.lexsort(coords.T[::-1]) if coords.shape[1] else np.arange(len(values))
        return AggregateResult(first.spec, first.dims, coords[order], values[order], null[order],
                               first.decoders)

    def scores(self, h: str, keys: Optional[Iterable[tuple]] = None) -> list[InterestingnessScore]:
        out = []
        for key in (keys if keys is not None else self.keys()):
            if not self.specs[key].dims:
                continue
            try:
                out.append(score_moments(key, self.moments(key), h))
            except UnscorableError:
                pass
        return out


def _tiebreak(key: tuple) -> str:
    return repr(key)


def topk(scores: Iterable[InterestingnessScore], k: int) -> list[InterestingnessScore]:
    """The k best scores, ties broken by canonical key."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return heapq.nsmallest(k, scores, key=lambda s: (-s.value, _tiebreak(s.key)))


def accuracy(truth: Sequence[InterestingnessScore], found: Sequence[InterestingnessScore]) -> float:
    """Fraction of the reference top-k recovered."""
    t = {s.key for s in truth}
    if not t:
        return 1.0
    return len(t & {s.key for s in found}) / len(t)


# ------------------------------------------------------------ rendering

def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")[:80]


def _show(v) -> str:
    if v is None:
        return ""
    lex, hint = v
    if hint is None:
        cut = max(lex.rfind("/"), lex.rfind("#"))
        return lex[cut + 1:] if cut >= 0 else lex
    return lex


def render(best: Sequence[InterestingnessScore], manager: ResultManager, out_dir: str, h: str,
           k: int) -> dict:
    """Write report.json, rows/*.csv and plots/*.dat; returns the report."""
    rows_dir = os.path.join(out_dir, "rows")
    plots_dir = os.path.join(out_dir, "plots")
    os.makedirs(rows_dir, exist_ok=True)
    os.makedirs(plots_dir, exist_ok=True)
    aggregates = []
    for rank, sc in enumerate(best, start=1):
        spec = manager.specs[sc.key]
        res = manager.result(sc.key)
        name = f"{rank:03d}_{_slug(spec.label)}"
        rows_file = os.path.join("rows", name + ".csv")
        rows = res.rows()
        with open(os.path.join(out_dir, rows_file), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(res.dims) + [f"{spec.function}({spec.measure})"])
            for dims, v in rows:
                w.writerow([_show(d) for d in dims] + [repr(v)])
        _plot(os.path.join(plots_dir, name + ".dat"), res.dims, rows)
        aggregates.append({"cfs": spec.cfs_id, "dims": list(res.dims), "measure": spec.measure,
                           "function": spec.function, "score": sc.value, "rows_file": rows_file})
    report = {"k": k, "h": h, "aggregates": aggregates}
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return report


def _plot(path: str, dims: Sequence[str], rows: list[tuple[tuple, float]]) -> None:
    with open(path, "w") as fh:
        if len(dims) == 1:
            fh.write(f"# histogram: {dims[0]} value\n")
            for (d,), v in rows:
                fh.write(f'"{_show(d)}" {v!r}\n')
        elif len(dims) == 2:
            xs = sorted({r[0][0] for r in rows}, key=repr)
            ys = sorted({r[0][1] for r in rows}, key=repr)
            cell = {(a, b): v for (a, b), v in rows}
            fh.write(f"# matrix: rows {dims[0]}, columns {dims[1]}\n")
            fh.write("x " + " ".join(f'"{_show(y)}"' for y in ys) + "\n")
            for x in xs:
                vals = [repr(cell[(x, y)]) if (x, y) in cell else "NaN" for y in ys]
                fh.write(f'"{_show(x)}" ' + " ".join(vals) + "\n")
        else:
            fh.write("# table: " + " ".join(dims) + " value\n")
            for ds, v in rows:
                fh.write(" ".join(f'"{_show(d)}"' for d in ds) + f" {v!r}\n")
