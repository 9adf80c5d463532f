"""Columnar, dictionary-encoded RDF triple store and candidate fact sets.

Every subject gets a dense fact id in order of first appearance. Objects are
interned in a term dictionary; each property owns a table of
``(fact id, term id)`` pairs sorted by fact id and free of duplicates.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Union

import numpy as np

log = logging.getLogger(__name__)

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
XSD = "http://www.w3.org/2001/XMLSchema#"
RDF_TYPE = RDF + "type"
RDFS_SUBCLASS = RDFS + "subClassOf"

PREFIXES = {"rdf:": RDF, "rdfs:": RDFS, "xsd:": XSD}

IRI, LITERAL, BNODE = "iri", "literal", "bnode"
HINTS = ("string", "integer", "decimal", "date")

_XSD_HINT = {
    "string": "string", "normalizedString": "string", "token": "string",
    "langString": "string", "anyURI": "string", "boolean": "string",
    "integer": "integer", "int": "integer", "long": "integer", "short": "integer",
    "byte": "integer", "nonNegativeInteger": "integer", "positiveInteger": "integer",
    "negativeInteger": "integer", "nonPositiveInteger": "integer",
    "unsignedInt": "integer", "unsignedLong": "integer", "unsignedShort": "integer",
    "decimal": "decimal", "double": "decimal", "float": "decimal",
    "date": "date", "dateTime": "date", "gYear": "date", "gYearMonth": "date",
}
_HINT_XSD = {"string": "string", "integer": "integer", "decimal": "decimal", "date": "date"}


@dataclass(frozen=True)
class Term:
    kind: str
    lexical: str
    hint: Optional[str] = None
    lang: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind == LITERAL:
            if self.hint not in HINTS:
                raise ValueError(f"literal needs a datatype hint, got {self.hint!r}")
        elif self.kind in (IRI, BNODE):
            if self.hint is not None or self.lang is not None:
                raise ValueError("only literals carry a datatype hint or language")
            if not self.lexical:
                raise ValueError("empty IRI or blank node label")
        else:
            raise ValueError(f"unknown term kind {self.kind!r}")

    @property
    def value_key(self) -> tuple[str, Optional[str]]:
        """Identity of this term when used as a dimension value."""
        return (self.lexical, self.hint)

    @property
    def is_numeric(self) -> bool:
        return self.kind == LITERAL and self.hint in ("integer", "decimal")

    def numeric(self) -> float:
        if not self.is_numeric:
            return math.nan
        try:
            return float(self.lexical)
        except ValueError:
            return math.nan

    def to_nt(self) -> str:
        if self.kind == IRI:
            return f"<{self.lexical}>"
        if self.kind == BNODE:
            return f"_:{self.lexical}"
        body = '"' + _escape(self.lexical) + '"'
        if self.lang:
            return body + "@" + self.lang
        return body + f"^^<{XSD}{_HINT_XSD[self.hint]}>"


def iri(s: str) -> Term:
    return Term(IRI, expand(s))


def literal(lexical: str, hint: Optional[str] = None, lang: Optional[str] = None) -> Term:
    if lang:
        hint = "string"
    return Term(LITERAL, lexical, hint or infer_hint(lexical), lang)


def expand(s: str) -> str:
    for pre, full in PREFIXES.items():
        if s.startswith(pre):
            return full + s[len(pre):]
    return s


def local_name(s: str) -> str:
    cut = max(s.rfind("#"), s.rfind("/"), s.rfind(":"))
    return s[cut + 1:] if cut >= 0 and cut < len(s) - 1 else s


Triple = tuple[Term, Term, Term]

_INT_RE = re.compile(r"[+-]?\d+")
_DEC_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}(T[\d:.]+(Z|[+-]\d{2}:\d{2})?)?")


def infer_hint(lexical: str) -> str:
    s = lexical.strip()
    if _INT_RE.fullmatch(s):
        return "integer"
    if _DEC_RE.fullmatch(s):
        return "decimal"
    if _DATE_RE.fullmatch(s):
        return "date"
    return "string"


# ---------------------------------------------------------------- N-Triples

_ESC = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_ESC_RE = re.compile(r"\\(u[0-9A-Fa-f]{4}|U[0-9A-Fa-f]{8}|.)")
_SUBJ = r"(?:<([^<>\s]+)>|_:([A-Za-z0-9_.\-]+))"
_OBJ = (r"(?:<([^<>\s]+)>|_:([A-Za-z0-9_.\-]+)|"
        r'"((?:[^"\\]|\\.)*)"(?:@([A-Za-z]+(?:-[A-Za-z0-9]+)*)|\^\^(?:<([^<>\s]+)>|([A-Za-z]+:[A-Za-z]+)))?)')
_LINE_RE = re.compile(rf"\s*{_SUBJ}\s*<([^<>\s]+)>\s*{_OBJ}\s*\.\s*(?:#.*)?")


def _unescape(s: str) -> str:
    def sub(m: re.Match) -> str:
        g = m.group(1)
        if g[0] in "uU" and len(g) > 1:
            return chr(int(g[1:], 16))
        if g in _ESC:
            return _ESC[g]
        raise ValueError(f"bad escape \\{g}")
    return _ESC_RE.sub(sub, s)


def _escape(s: str) -> str:
    return (s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            .replace("\r", "\\r").replace("\t", "\\t"))


def parse_line(line: str) -> Optional[Triple]:
    """Parse one N-Triples line; ``None`` for blank/comment lines."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    m = _LINE_RE.fullmatch(line.rstrip("\r\n"))
    if m is None:
        raise ValueError("not a triple")
    s_iri, s_bn, p, o_iri, o_bn, o_lex, o_lang, o_dt, o_dt_short = m.groups()
    subj = Term(IRI, expand(s_iri)) if s_iri else Term(BNODE, s_bn)
    prop = Term(IRI, expand(p))
    if o_iri:
        obj = Term(IRI, expand(o_iri))
    elif o_bn:
        obj = Term(BNODE, o_bn)
    else:
        lex = _unescape(o_lex)
        if o_lang:
            obj = Term(LITERAL, lex, "string", o_lang.lower())
        elif o_dt or o_dt_short:
            dt = expand(o_dt or o_dt_short)
            name = dt[len(XSD):] if dt.startswith(XSD) else None
            obj = Term(LITERAL, lex, _XSD_HINT.get(name, "string"))
        else:
            obj = Term(LITERAL, lex, infer_hint(lex))
    return subj, prop, obj


class ParseError(ValueError):
    def __init__(self, message: str, errors: list[tuple[int, str]]):
        super().__init__(message)
        self.errors = errors


class EmptyCFSError(LookupError):
    """A candidate fact set selection matched no fact."""


@dataclass(frozen=True)
class CandidateFactSet:
    id: str
    members: np.ndarray
    origin: str

    def __post_init__(self) -> None:
        m = self.members
        if len(m) == 0:
            raise EmptyCFSError(self.id)
        if np.any(np.diff(m) <= 0):
            raise ValueError("members must be strictly ascending")

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class PropertyTable:
    subjects: np.ndarray
    objects: np.ndarray

    def __len__(self) -> int:
        return len(self.subjects)


@dataclass
class TripleStore:
    """Immutable after construction; see :class:`StoreBuilder`."""

    nodes: list[Term]
    terms: list[Term]
    tables: dict[str, PropertyTable]
    parse_errors: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.node_ids: dict[Term, int] = {t: i for i, t in enumerate(self.nodes)}
        self.term_ids: dict[Term, int] = {t: i for i, t in enumerate(self.terms)}
        self._numeric: Optional[np.ndarray] = None
        self._term_node: Optional[np.ndarray] = None
        self._types: Optional[dict[str, np.ndarray]] = None

    # sizes ---------------------------------------------------------------
    @property
    def num_facts(self) -> int:
        return len(self.nodes)

    def __len__(self) -> int:
        return sum(len(t) for t in self.tables.values())

    @property
    def properties(self) -> list[str]:
        return sorted(self.tables)

    # lookups ---------------------------------------------------------------
    def term_numeric(self) -> np.ndarray:
        """Float value per term id, NaN for non-numeric terms."""
        if self._numeric is None:
            self._numeric = np.array([t.numeric() for t in self.terms], dtype=np.float64)
        return self._numeric

    def term_node(self) -> np.ndarray:
        """Fact id of each object term, or -1 when it never occurs as subject."""
        if self._term_node is None:
            self._term_node = np.array(
                [self.node_ids.get(t, -1) if t.kind != LITERAL else -1 for t in self.terms],
                dtype=np.int64)
        return self._term_node

    @property
    def types(self) -> dict[str, np.ndarray]:
        """Type IRI -> sorted fact ids."""
        if self._types is None:
            out: dict[str, np.ndarray] = {}
            tab = self.tables.get(RDF_TYPE)
            if tab is not None:
                for tid in np.unique(tab.objects).tolist():
                    out[self.terms[tid].lexical] = np.unique(tab.subjects[tab.objects == tid])
            self._types = out
        return self._types

    def resolve(self, name: str) -> str:
        """Map a full IRI or an unambiguous local name to a property IRI."""
        full = expand(name)
        if full in self.tables or full in self.types:
            return full
        hits = sorted({p for p in list(self.tables) + list(self.types) if local_name(p) == name})
        if len(hits) == 1:
            return hits[0]
        if len(hits) > 1:
            raise KeyError(f"ambiguous name {name!r}: {hits}")
        raise KeyError(name)

    def triples(self) -> Iterator[Triple]:
        for p, tab in self.tables.items():
            pt = Term(IRI, p)
            for s, o in zip(tab.subjects.tolist(), tab.objects.tolist()):
                yield self.nodes[s], pt, self.terms[o]

    def triple_set(self) -> set[Triple]:
        return set(self.triples())

    def to_ntriples(self) -> str:
        return "".join(f"{s.to_nt()} {p.to_nt()} {o.to_nt()} .\n" for s, p, o in self.triples())


class StoreBuilder:
    def __init__(self) -> None:
        self.node_ids: dict[Term, int] = {}
        self.term_ids: dict[Term, int] = {}
        self.pairs: dict[str, set[tuple[int, int]]] = {}

    def node(self, t: Term) -> int:
        if t.kind == LITERAL:
            raise ValueError("literal subject")
        i = self.node_ids.get(t)
        if i is None:
            i = self.node_ids[t] = len(self.node_ids)
        return i

    def term(self, t: Term) -> int:
        i = self.term_ids.get(t)
        if i is None:
            i = self.term_ids[t] = len(self.term_ids)
        return i

    def add(self, s: Term, p: Term, o: Term) -> None:
        if p.kind != IRI:
            raise ValueError("property must be an IRI")
        self.pairs.setdefault(p.lexical, set()).add((self.node(s), self.term(o)))

    def build(self, parse_errors: Optional[list[tuple[int, str]]] = None) -> TripleStore:
        tables = {}
        for p, pairs in self.pairs.items():
            arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
            tables[p] = PropertyTable(arr[:, 0].copy(), arr[:, 1].copy())
        return TripleStore(list(self.node_ids), list(self.term_ids), tables, parse_errors or [])


def parse_ntriples(source: Union[str, bytes, IO], max_error_fraction: float = 0.01) -> TripleStore:
    """Parse N-Triples text, bytes, or a (binary or text) stream."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    b = StoreBuilder()
    errors: list[tuple[int, str]] = []
    n_lines = 0
    for no, line in enumerate(io.StringIO(text), start=1):
        try:
            t = parse_line(line)
        except ValueError:
            n_lines += 1
            errors.append((no, line.rstrip("\n")))
            continue
        if t is None:
            continue
        n_lines += 1
        b.add(*t)
    if errors:
        for no, line in errors[:10]:
            log.warning("malformed N-Triples line %d: %.80s", no, line)
        if len(errors) > max_error_fraction * max(n_lines, 1):
            raise ParseError(f"{len(errors)} of {n_lines} lines malformed", errors)
    return b.build(errors)


def load_ntriples(path: str, max_error_fraction: float = 0.01) -> TripleStore:
    with open(path, "rb") as fh:
        return parse_ntriples(fh, max_error_fraction)


def load_csv(path_or_text: str, base: str = "http://example.org/", type_name: str = "Fact",
             id_column: Optional[str] = None, is_text: bool = False) -> TripleStore:
    """Fact table loader: header row = property names, one row per fact.

    Empty cells are absent properties; ``|`` separates multiple values.
    """
    fh = io.StringIO(path_or_text) if is_text else open(path_or_text, newline="", encoding="utf-8")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        b = StoreBuilder()
        if header is None:
            return b.build()
        type_term = iri(base + type_name)
        rdf_type = Term(IRI, RDF_TYPE)
        for r, row in enumerate(reader):
            cells = dict(zip(header, row))
            fid = cells.get(id_column) if id_column else None
            subj = iri(base + (fid or f"row{r}"))
            b.add(subj, rdf_type, type_term)
            for col, cell in cells.items():
                if col == id_column or cell == "":
                    continue
                for v in cell.split("|"):
                    if v != "":
                        b.add(subj, iri(base + col), literal(v))
    return b.build()


def with_subclass_closure(store: TripleStore, ontology: Iterable[Triple]) -> TripleStore:
    """Add ``rdf:type`` edges one ``rdfs:subClassOf`` level up."""
    supers: dict[Term, set[Term]] = {}
    for s, p, o in ontology:
        if p.lexical == RDFS_SUBCLASS:
            supers.setdefault(s, set()).add(o)
    b = StoreBuilder()
    for t in store.nodes:
        b.node(t)
    for t in store.terms:
        b.term(t)
    rdf_type = Term(IRI, RDF_TYPE)
    for s, p, o in store.triples():
        b.add(s, p, o)
        if p.lexical == RDF_TYPE:
            for sup in supers.get(o, ()):
                b.add(s, rdf_type, sup)
    return b.build(store.parse_errors)


def select_cfs(store: TripleStore, mode: str, key: Union[str, Iterable[str]]) -> CandidateFactSet:
    if mode == "type":
        name = key if isinstance(key, str) else next(iter(key))
        full = expand(name)
        members = store.types.get(full)
        if members is None:
            hits = [t for t in store.types if local_name(t) == name]
            members = store.types[hits[0]] if len(hits) == 1 else None
        if members is None or len(members) == 0:
            raise EmptyCFSError(f"no fact of type {name}")
        return CandidateFactSet(f"type:{local_name(full)}", members, "type")
    if mode == "property":
        names = [key] if isinstance(key, str) else list(key)
        if not names:
            raise EmptyCFSError("empty property set")
        members = None
        for n in names:
            try:
                tab = store.tables[store.resolve(n)]
            except KeyError:
                raise EmptyCFSError(f"unknown property {n}") from None
            subj = np.unique(tab.subjects)
            members = subj if members is None else np.intersect1d(members, subj)
        if len(members) == 0:
            raise EmptyCFSError(f"no fact has all of {names}")
        return CandidateFactSet("props:" + "+".join(sorted(local_name(n) for n in names)),
                                members, "property")
    raise ValueError(f"unknown CFS mode {mode!r}")
