"""Attributes of candidate fact sets: direct properties and derived ones.

A materialized attribute is a set of ``(fact id, value code)`` pairs plus a
value vocabulary. Derived kinds are value counts, keywords of text values,
the language of text values, and one-hop property paths.
"""
from __future__ import annotations

import logging
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph_store import BNODE, LITERAL, RDF_TYPE, CandidateFactSet, TripleStore, local_name

log = logging.getLogger(__name__)

DIRECT, COUNT, KEYWORD, LANGUAGE, PATH = "direct", "count", "keyword", "language", "path"


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str
    source: tuple[str, ...]
    value_kind: str = "string"

    def __post_init__(self) -> None:
        if self.kind == COUNT and self.value_kind != "numeric":
            raise ValueError("count attributes are numeric")
        if self.kind == PATH and len(self.source) < 2:
            raise ValueError("a path names at least two properties")

    @property
    def derived(self) -> bool:
        return self.kind != DIRECT

    @property
    def is_type(self) -> bool:
        return self.kind == DIRECT and self.source == (RDF_TYPE,)

    def related(self, other: "Attribute") -> bool:
        """True when one attribute is derived from the other (or they share a base)."""
        if self == other:
            return True
        a, b = self, other
        if a.kind in (COUNT, KEYWORD, LANGUAGE) and b.kind == DIRECT and a.source == b.source:
            return True
        if b.kind in (COUNT, KEYWORD, LANGUAGE) and a.kind == DIRECT and a.source == b.source:
            return True
        if a.kind in (COUNT, KEYWORD, LANGUAGE) and b.kind in (COUNT, KEYWORD, LANGUAGE):
            return a.source == b.source
        # a path p/q is derived from p
        if a.kind == PATH and b.kind == DIRECT:
            return a.source[0] == b.source[0]
        if b.kind == PATH and a.kind == DIRECT:
            return b.source[0] == a.source[0]
        return False


@dataclass
class AttrValues:
    """Materialized ``(fact, value)`` pairs sorted by fact then code."""

    attr: Attribute
    facts: np.ndarray
    codes: np.ndarray
    vocab: list[tuple[str, Optional[str]]]
    numeric: np.ndarray

    def restrict(self, members: np.ndarray) -> "AttrValues":
        keep = np.isin(self.facts, members, assume_unique=False)
        return AttrValues(self.attr, self.facts[keep], self.codes[keep], self.vocab, self.numeric)

    def per_fact_counts(self) -> tuple[np.ndarray, np.ndarray]:
        return np.unique(self.facts, return_counts=True)

    def display(self, code: int) -> str:
        lex, hint = self.vocab[code]
        return lex if hint is not None else local_name(lex)


@dataclass
class AttributeStats:
    name: str
    value_kind: str
    support: int
    multi_count: int
    distinct: int
    min: Optional[float] = None
    max: Optional[float] = None
    cfs_size: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.multi_count <= self.support <= max(self.cfs_size, self.support)):
            raise ValueError("inconsistent support counts")
        if self.support >= 1 and self.distinct < 1:
            raise ValueError("supported attribute without values")

    @property
    def support_ratio(self) -> float:
        return self.support / self.cfs_size if self.cfs_size else 0.0


@dataclass
class PreAggTable:
    """Per-fact count/sum/min/max of one attribute, rows ascending by fact."""

    attr: Attribute
    facts: np.ndarray
    count: np.ndarray
    sum: Optional[np.ndarray] = None
    min: Optional[np.ndarray] = None
    max: Optional[np.ndarray] = None

    @property
    def numeric(self) -> bool:
        return self.sum is not None

    def dense(self, n_facts: int) -> "DenseMeasure":
        has = np.zeros(n_facts, dtype=bool)
        has[self.facts] = True
        cnt = np.zeros(n_facts, dtype=np.float64)
        cnt[self.facts] = self.count
        if not self.numeric:
            return DenseMeasure(self.attr, has, cnt)
        s = np.zeros(n_facts)
        lo = np.full(n_facts, np.inf)
        hi = np.full(n_facts, -np.inf)
        s[self.facts] = self.sum
        lo[self.facts] = self.min
        hi[self.facts] = self.max
        return DenseMeasure(self.attr, has, cnt, s, lo, hi)


@dataclass
class DenseMeasure:
    attr: Attribute
    has: np.ndarray
    count: np.ndarray
    sum: Optional[np.ndarray] = None
    min: Optional[np.ndarray] = None
    max: Optional[np.ndarray] = None


# ------------------------------------------------------------ text helpers

STOPWORDS_EN = frozenset("""
a about above after again against all also am an and any are as at be because been before
being below between both but by can could did do does doing down during each few for from
further had has have having he her here hers herself him himself his how i if in into is it
its itself just me more most my myself no nor not now of off on once only or other our ours
ourselves out over own same she should so some such than that the their theirs them
themselves then there these they this those through to too under until up very was we were
what when where which while who whom why will with would you your yours yourself yourselves
""".split())

_LANG_STOPWORDS = {
    "en": STOPWORDS_EN,
    "fr": frozenset("""le la les un une des du de et est sont dans pour par sur avec qui que
        ne pas plus au aux ce cette ces il elle ils nous vous leur son sa ses mais ou donc""".split()),
    "de": frozenset("""der die das und ist sind ein eine einer nicht mit von zu im den dem des
        auf fur für auch sich es sie wir ihr als bei aus nach wie oder aber noch""".split()),
    "es": frozenset("""el la los las un una unos y es son en por para con que del al se su sus
        no pero como mas más muy este esta estos ya le lo""".split()),
}

# Short reference texts used to build character trigram profiles.
_LANG_SAMPLES = {
    "en": """The company oversees production and distribution of energy, petroleum and gas.
        It manages several subsidiaries which provide mobile services, banking, and retail
        operations. Shareholders receive reports every quarter about growth, revenue, and the
        strategy of the board. Workers in the factories produce vehicles and electronics.""",
    "fr": """L'entreprise gère la production et la distribution d'énergie, de pétrole et de gaz.
        Elle dirige plusieurs filiales qui fournissent des services mobiles, bancaires et de
        commerce. Les actionnaires reçoivent chaque trimestre un rapport sur la croissance,
        le chiffre d'affaires et la stratégie du conseil. Les ouvriers fabriquent des voitures.""",
    "de": """Das Unternehmen überwacht die Produktion und den Vertrieb von Energie, Erdöl und Gas.
        Es leitet mehrere Tochtergesellschaften, die mobile Dienste, Bankgeschäfte und Handel
        anbieten. Die Aktionäre erhalten jedes Quartal einen Bericht über Wachstum, Umsatz und
        die Strategie des Vorstands. Arbeiter in den Fabriken bauen Fahrzeuge und Geräte.""",
    "es": """La empresa supervisa la producción y distribución de energía, petróleo y gas.
        Dirige varias filiales que ofrecen servicios móviles, banca y comercio minorista.
        Los accionistas reciben cada trimestre un informe sobre el crecimiento, los ingresos y
        la estrategia del consejo. Los trabajadores de las fábricas producen vehículos.""",
}

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def keywords(text: str, stoplist: frozenset[str] = STOPWORDS_EN, min_len: int = 4) -> list[str]:
    seen: dict[str, None] = {}
    for tok in tokenize(text):
        if len(tok) >= min_len and tok not in stoplist:
            seen.setdefault(tok, None)
    return list(seen)


def _trigrams(text: str) -> Counter:
    grams: Counter = Counter()
    for tok in tokenize(text):
        for i in range(len(tok) - 2):
            grams[tok[i:i + 3]] += 1
    return grams


_PROFILES = {lang: _trigrams(txt) for lang, txt in _LANG_SAMPLES.items()}


def detect_language(text: str) -> str:
    """Stopword-hit classifier with a trigram-profile fallback; 'other' when nothing matches."""
    toks = tokenize(text)
    if not toks:
        return "other"
    hits = {lang: sum(t in words for t in toks) for lang, words in _LANG_STOPWORDS.items()}
    best = max(sorted(hits), key=lambda lang: hits[lang])
    if hits[best] > 0 and list(hits.values()).count(hits[best]) == 1:
        return best
    grams = _trigrams(text)
    scores = {}
    for lang, prof in _PROFILES.items():
        total = sum(prof.values())
        scores[lang] = sum(n * prof[g] / total for g, n in grams.items() if g in prof)
    best = max(sorted(scores), key=lambda lang: scores[lang])
    return best if scores[best] > 0 else "other"


# ------------------------------------------------------------ materialization

@dataclass
class AttributeConfig:
    keyword_min_avg_length: float = 20.0
    keyword_min_token: int = 4
    stoplist: frozenset[str] = STOPWORDS_EN
    path_length: int = 1
    path_min_support: int = 1
    numeric_fraction: float = 0.95
    derivations: bool = True


class AttributeIndex:
    """Materializes attributes over a store; caches results (thread-safe)."""

    def __init__(self, store: TripleStore, config: Optional[AttributeConfig] = None):
        self.store = store
        self.config = config or AttributeConfig()
        self._cache: dict[Attribute, AttrValues] = {}
        self._lock = threading.Lock()

    # direct --------------------------------------------------------------
    def direct_attributes(self) -> list[Attribute]:
        names = Counter(local_name(p) for p in self.store.tables)
        out = []
        for p in self.store.properties:
            name = local_name(p) if names[local_name(p)] == 1 else p
            if p == RDF_TYPE:
                name = "type"
            out.append(Attribute(name, DIRECT, (p,), self._value_kind(p)))
        return out

    def _value_kind(self, p: str) -> str:
        tab = self.store.tables[p]
        terms = [self.store.terms[o] for o in np.unique(tab.objects).tolist()]
        lits = [t for t in terms if t.kind == LITERAL]
        if not lits or len(lits) < len(terms):
            return "string"
        n_num = sum(t.is_numeric for t in lits)
        if n_num >= self.config.numeric_fraction * len(lits):
            return "numeric"
        if all(t.hint == "date" for t in lits):
            return "date"
        return "string"

    def values(self, attr: Attribute) -> AttrValues:
        with self._lock:
            hit = self._cache.get(attr)
        if hit is not None:
            return hit
        builder = {DIRECT: self._direct, COUNT: self._count, KEYWORD: self._keyword,
                   LANGUAGE: self._language, PATH: self._path}[attr.kind]
        pairs = builder(attr)
        vals = _encode(attr, pairs)
        with self._lock:
            self._cache.setdefault(attr, vals)
        return vals

    def _direct(self, attr: Attribute) -> list[tuple[int, tuple[str, Optional[str]]]]:
        tab = self.store.tables[attr.source[0]]
        terms = self.store.terms
        return [(s, terms[o].value_key) for s, o in zip(tab.subjects.tolist(), tab.objects.tolist())
                if terms[o].kind != BNODE]

    def _count(self, attr: Attribute) -> list:
        tab = self.store.tables[attr.source[0]]
        facts, counts = np.unique(tab.subjects, return_counts=True)
        return [(f, (str(c), "integer")) for f, c in zip(facts.tolist(), counts.tolist())]

    def _texts(self, p: str) -> dict[int, list]:
        tab = self.store.tables[p]
        out: dict[int, list] = {}
        for s, o in zip(tab.subjects.tolist(), tab.objects.tolist()):
            t = self.store.terms[o]
            if t.kind == LITERAL:
                out.setdefault(s, []).append(t)
        return out

    def _keyword(self, attr: Attribute) -> list:
        out = []
        cfg = self.config
        for f, terms in self._texts(attr.source[0]).items():
            for t in terms:
                for kw in keywords(t.lexical, cfg.stoplist, cfg.keyword_min_token):
                    out.append((f, (kw, "string")))
        return out

    def _language(self, attr: Attribute) -> list:
        out = []
        for f, terms in self._texts(attr.source[0]).items():
            tagged = sorted(t.lang.split("-")[0] for t in terms if t.lang)
            if tagged:
                lang = Counter(tagged).most_common(1)[0][0]
            else:
                lang = detect_language(" ".join(t.lexical for t in sorted(terms, key=lambda t: t.lexical)))
            out.append((f, (lang, "string")))
        return out

    def _path(self, attr: Attribute) -> list:
        node_of = self.store.term_node()
        terms = self.store.terms
        frontier = {}
        first = self.store.tables[attr.source[0]]
        for s, o in zip(first.subjects.tolist(), first.objects.tolist()):
            x = int(node_of[o])
            if x >= 0:
                frontier.setdefault(s, set()).add(x)
        for step, p in enumerate(attr.source[1:], start=1):
            tab = self.store.tables[p]
            by_subj: dict[int, list[int]] = {}
            for s, o in zip(tab.subjects.tolist(), tab.objects.tolist()):
                by_subj.setdefault(s, []).append(o)
            last = step == len(attr.source) - 1
            nxt: dict[int, set] = {}
            for f, xs in frontier.items():
                for x in xs:
                    for o in by_subj.get(x, ()):
                        if last:
                            if terms[o].kind != BNODE:
                                nxt.setdefault(f, set()).add(o)
                        elif node_of[o] >= 0:
                            nxt.setdefault(f, set()).add(int(node_of[o]))
            frontier = nxt
        return [(f, terms[o].value_key) for f, os in frontier.items() for o in os]

    # derivations -----------------------------------------------------------
    def global_stats(self, attr: Attribute) -> AttributeStats:
        v = self.values(attr)
        return _stats(v, self.store.num_facts)

    def average_length(self, attr: Attribute) -> float:
        v = self.values(attr)
        if len(v.codes) == 0:
            return 0.0
        lens = np.array([len(v.vocab[c][0]) for c in v.codes.tolist()])
        return float(lens.mean())

    def derive_count(self, attr: Attribute) -> Optional[Attribute]:
        if attr.derived:
            raise ValueError(f"no second-order derivation from {attr.name}")
        if attr.is_type or self.global_stats(attr).multi_count == 0:
            return None
        return Attribute(f"count({attr.name})", COUNT, attr.source, "numeric")

    def derive_keywords(self, attr: Attribute) -> Optional[Attribute]:
        if attr.derived:
            raise ValueError(f"no second-order derivation from {attr.name}")
        if attr.value_kind != "string" or not self._is_text(attr):
            return None
        return Attribute("kwIn" + _cap(attr.name), KEYWORD, attr.source, "string")

    def derive_language(self, attr: Attribute) -> Optional[Attribute]:
        if attr.derived:
            raise ValueError(f"no second-order derivation from {attr.name}")
        if attr.value_kind != "string" or not self._is_text(attr):
            return None
        return Attribute("langOf" + _cap(attr.name), LANGUAGE, attr.source, "string")

    def _is_text(self, attr: Attribute) -> bool:
        tab = self.store.tables[attr.source[0]]
        lits = [self.store.terms[o] for o in np.unique(tab.objects).tolist()]
        lits = [t for t in lits if t.kind == LITERAL]
        if not lits:
            return False
        return sum(len(t.lexical) for t in lits) / len(lits) >= self.config.keyword_min_avg_length

    def derive_paths(self, cfs: CandidateFactSet, max_length: Optional[int] = None) -> list[Attribute]:
        """Paths ``p/q`` whose ``p`` objects (from CFS members) are subjects of ``q``."""
        max_length = max_length or self.config.path_length
        store = self.store
        node_of = store.term_node()
        subjects_of = {p: np.unique(t.subjects) for p, t in store.tables.items()}
        names = {a.source[0]: a.name for a in self.direct_attributes()}
        out = []

        def extend(prefix: tuple[str, ...], starts: np.ndarray, depth: int) -> None:
            tab = store.tables[prefix[-1]]
            mask = np.isin(tab.subjects, starts)
            nodes = node_of[tab.objects[mask]]
            nodes = np.unique(nodes[nodes >= 0])
            if len(nodes) == 0:
                return
            for q in store.properties:
                if q == RDF_TYPE:
                    continue
                nxt = np.intersect1d(nodes, subjects_of[q], assume_unique=True)
                if len(nxt) == 0:
                    continue
                path = prefix + (q,)
                attr = Attribute("/".join(names[p] for p in path), PATH, path,
                                 self._path_kind(q))
                support = len(np.intersect1d(self.values(attr).facts, cfs.members))
                if support >= self.config.path_min_support:
                    out.append(attr)
                if depth < max_length:
                    extend(path, nxt, depth + 1)

        for p in store.properties:
            if p != RDF_TYPE:
                extend((p,), cfs.members, 1)
        return out

    def _path_kind(self, q: str) -> str:
        return self._value_kind(q)

    def enumerate(self, cfs: CandidateFactSet) -> list[Attribute]:
        """All direct attributes plus (optionally) their first-order derivations."""
        direct = self.direct_attributes()
        if not self.config.derivations:
            return direct
        out = list(direct)
        for a in direct:
            for derive in (self.derive_count, self.derive_keywords, self.derive_language):
                d = derive(a)
                if d is not None:
                    out.append(d)
        out.extend(self.derive_paths(cfs))
        return out

    # per-CFS ---------------------------------------------------------------
    def analyze(self, cfs: CandidateFactSet, attr: Attribute) -> AttributeStats:
        return analyze_attribute(cfs, attr, self)

    def preagg(self, cfs: CandidateFactSet, attr: Attribute) -> PreAggTable:
        return build_preagg(cfs, attr, self)


def _cap(name: str) -> str:
    return name[:1].upper() + name[1:]


def _encode(attr: Attribute, pairs: list) -> AttrValues:
    vocab_ids: dict = {}
    facts = np.empty(len(pairs), dtype=np.int64)
    codes = np.empty(len(pairs), dtype=np.int64)
    for i, (f, key) in enumerate(pairs):
        c = vocab_ids.get(key)
        if c is None:
            c = vocab_ids[key] = len(vocab_ids)
        facts[i] = f
        codes[i] = c
    vocab = list(vocab_ids)
    numeric = np.array([_num(k) for k in vocab], dtype=np.float64)
    if len(pairs):
        packed = np.unique(np.stack([facts, codes], axis=1), axis=0)
        facts, codes = packed[:, 0].copy(), packed[:, 1].copy()
    return AttrValues(attr, facts, codes, vocab, numeric)


def _num(key: tuple[str, Optional[str]]) -> float:
    lex, hint = key
    if hint in ("integer", "decimal"):
        try:
            return float(lex)
        except ValueError:
            return math.nan
    return math.nan


def _stats(v: AttrValues, cfs_size: int) -> AttributeStats:
    facts, counts = v.per_fact_counts()
    used = np.unique(v.codes)
    lo = hi = None
    if v.attr.value_kind == "numeric" and len(used):
        nums = v.numeric[used]
        nums = nums[~np.isnan(nums)]
        if len(nums):
            lo, hi = float(nums.min()), float(nums.max())
    return AttributeStats(v.attr.name, v.attr.value_kind, int(len(facts)),
                          int((counts >= 2).sum()), int(len(used)), lo, hi, cfs_size)


def analyze_attribute(cfs: CandidateFactSet, attr: Attribute, index: AttributeIndex) -> AttributeStats:
    return _stats(index.values(attr).restrict(cfs.members), len(cfs))


def build_preagg(cfs: CandidateFactSet, attr: Attribute, index: AttributeIndex) -> PreAggTable:
    v = index.values(attr).restrict(cfs.members)
    facts, starts = np.unique(v.facts, return_index=True)
    counts = np.diff(np.append(starts, len(v.facts)))
    if attr.value_kind != "numeric" or len(facts) == 0:
        return PreAggTable(attr, facts, counts.astype(np.int64))
    vals = v.numeric[v.codes]
    bad = np.isnan(vals)
    if bad.any():
        bad_rows = np.unique(v.facts[bad])
        log.warning("%s: %d facts with non-numeric values skipped", attr.name, len(bad_rows))
        keep_pairs = ~np.isin(v.facts, bad_rows)
        vals, pf = vals[keep_pairs], v.facts[keep_pairs]
        facts, starts = np.unique(pf, return_index=True)
        counts = np.diff(np.append(starts, len(pf)))
        if len(facts) == 0:
            return PreAggTable(attr, facts, counts, np.empty(0), np.empty(0), np.empty(0))
    sums = np.add.reduceat(vals, starts)
    mins = np.minimum.reduceat(vals, starts)
    maxs = np.maximum.reduceat(vals, starts)
    return PreAggTable(attr, facts, counts.astype(np.int64), sums, mins, maxs)
