import pytest
from hypothesis import given, strategies as st

from rdfinsight.attributes import (COUNT, DIRECT, KEYWORD, LANGUAGE, PATH, AttributeIndex,
                                   AttributeStats, analyze_attribute, build_preagg, detect_language,
                                   keywords)
from rdfinsight.graph_store import StoreBuilder, iri, literal, parse_ntriples, select_cfs

EX = "http://example.org/ceos/"


def _values(index, attr, fact):
    v = index.values(attr)
    return sorted(v.vocab[c][0] for f, c in zip(v.facts.tolist(), v.codes.tolist()) if f == fact)


def test_nationality_stats(ceo_index, ceo_cfs, ceo_attrs):
    st_ = analyze_attribute(ceo_cfs, ceo_attrs["nationality"], ceo_index)
    # n1 holds Angola, n2 four nationalities
    assert (st_.support, st_.multi_count, st_.distinct) == (2, 1, 5)


def test_networth_stats(ceo_index, ceo_cfs, ceo_attrs):
    st_ = analyze_attribute(ceo_cfs, ceo_attrs["netWorth"], ceo_index)
    assert (st_.support, st_.multi_count) == (2, 0)
    assert (st_.min, st_.max) == (0.12e9, 2.8e9)
    assert st_.value_kind == "numeric"


def test_empty_cfs_support_zero(ceo_index, ceo_attrs, ceos):
    pol = select_cfs(ceos, "type", "Politician")
    assert analyze_attribute(pol, ceo_attrs["netWorth"], ceo_index).support == 0


def test_stats_invariants():
    with pytest.raises(ValueError):
        AttributeStats("x", "string", support=1, multi_count=2, distinct=1, cfs_size=3)


def test_count_derivation(ceo_index, ceo_attrs):
    cc = ceo_attrs["count(company)"]
    assert cc.kind == COUNT and cc.value_kind == "numeric"
    assert _values(ceo_index, cc, 0) == ["2"]
    assert _values(ceo_index, ceo_attrs["count(nationality)"], 1) == ["4"]
    assert ceo_index.derive_count(ceo_attrs["gender"]) is None
    assert "count(gender)" not in ceo_attrs


def test_no_second_order(ceo_index, ceo_attrs):
    for name in ("count(company)", "kwInDescription", "company/area"):
        with pytest.raises(ValueError):
            ceo_index.derive_count(ceo_attrs[name])


def test_keywords():
    kws = keywords("Sonangol oversees petroleum production")
    assert "petroleum" in kws and "production" in kws
    assert keywords("") == []
    assert keywords("a an of to") == []


def test_keyword_attribute(ceo_index, ceo_attrs, ceos):
    kw = ceo_attrs["kwInDescription"]
    assert kw.kind == KEYWORD
    son = ceos.node_ids[iri(EX + "Sonangol")]
    assert _values(ceo_index, kw, son) == ["oversees", "petroleum", "production", "sonangol"]


def test_language(ceo_index, ceo_attrs, ceos):
    lang = ceo_attrs["langOfDescription"]
    assert lang.kind == LANGUAGE
    ids = {n: ceos.node_ids[iri(EX + n)] for n in ("Sonangol", "Unitel", "RenaultNissan")}
    assert _values(ceo_index, lang, ids["Unitel"]) == ["en"]
    assert _values(ceo_index, lang, ids["RenaultNissan"]) == ["fr"]
    # untagged English text
    assert _values(ceo_index, lang, ids["Sonangol"]) == ["en"]


@pytest.mark.parametrize("text,lang", [
    ("Sonangol oversees petroleum production", "en"),
    ("xqz qzx", "other"),
    ("", "other"),
    ("the company and the workers", "en"),
    ("le conseil et les ouvriers de la société", "fr"),
    ("der Vorstand und die Arbeiter", "de"),
    ("los trabajadores y el consejo de la empresa", "es"),
])
def test_detect_language(text, lang):
    assert detect_language(text) == lang


def test_paths(ceo_index, ceo_attrs):
    role = ceo_attrs["politicalConnection/role"]
    assert role.kind == PATH
    assert _values(ceo_index, role, 0) == ["President"]
    area = ceo_attrs["company/area"]
    assert _values(ceo_index, area, 1) == ["Automotive", "Manufacturer"]
    assert _values(ceo_index, area, 0) == ["Distribution", "Manufacturer", "NaturalResources"]
    # type is never the tail of a path; literal-valued properties start none
    assert not any(a.kind == PATH and a.source[-1].endswith("#type") for a in ceo_attrs.values())
    assert not any(a.kind == PATH and a.source[0] == EX + "gender" for a in ceo_attrs.values())


def test_path_length_two():
    s = parse_ntriples("<a> <p> <b> .\n<b> <q> <c> .\n<c> <r> \"v\" .\n<a> <rdf:type> <T> .\n")
    from rdfinsight.attributes import AttributeConfig
    cfs = select_cfs(s, "type", "T")
    short = {a.name for a in AttributeIndex(s).derive_paths(cfs)}
    longer = {a.name for a in AttributeIndex(s, AttributeConfig(path_length=2)).derive_paths(cfs)}
    assert short == {"p/q"}
    assert longer == {"p/q", "p/q/r"}


def test_preagg_networth(ceo_index, ceo_cfs, ceo_attrs):
    t = build_preagg(ceo_cfs, ceo_attrs["netWorth"], ceo_index)
    assert t.facts.tolist() == [0, 1]
    assert t.count.tolist() == [1, 1]
    assert t.sum.tolist() == [2.8e9, 0.12e9]
    assert t.min.tolist() == t.max.tolist() == t.sum.tolist()


def test_preagg_non_numeric(ceo_index, ceo_cfs, ceo_attrs):
    t = build_preagg(ceo_cfs, ceo_attrs["nationality"], ceo_index)
    assert t.facts.tolist() == [0, 1] and t.count.tolist() == [1, 4]
    assert t.sum is None


def test_preagg_missing_fact(ceo_index, ceo_cfs, ceo_attrs):
    assert build_preagg(ceo_cfs, ceo_attrs["age"], ceo_index).facts.tolist() == [1]


def test_preagg_skips_non_numeric_rows(caplog):
    b = StoreBuilder()
    for i in range(30):
        b.add(iri(f"f{i}"), iri("m"), literal(str(i), "integer"))
    b.add(iri("f0"), iri("m"), literal("oops", "string"))
    s = b.build()
    idx = AttributeIndex(s)
    m = next(a for a in idx.direct_attributes() if a.name == "m")
    assert m.value_kind == "numeric"
    cfs = select_cfs(s, "property", ["m"])
    t = build_preagg(cfs, m, idx)
    assert 0 not in t.facts.tolist() and len(t.facts) == 29
    assert "skipped" in caplog.text


def test_derivations_off(ceos, ceo_cfs):
    from rdfinsight.attributes import AttributeConfig
    idx = AttributeIndex(ceos, AttributeConfig(derivations=False))
    assert all(a.kind == DIRECT for a in idx.enumerate(ceo_cfs))


# property-based: counts and stats agree with brute force ---------------------

rows = st.lists(st.lists(st.sampled_from(["x", "y", "z", "5", "7"]), max_size=4), min_size=1, max_size=12)


@given(rows)
def test_preagg_counts_match_store(data):
    b = StoreBuilder()
    for i, vals in enumerate(data):
        b.add(iri(f"f{i}"), iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type"), iri("T"))
        for v in vals:
            b.add(iri(f"f{i}"), iri("p"), literal(v))
    s = b.build()
    cfs = select_cfs(s, "type", "T")
    idx = AttributeIndex(s)
    attrs = {a.name: a for a in idx.enumerate(cfs)}
    if "p" not in attrs:
        return
    truth = {i: len(set(v)) for i, v in enumerate(data) if v}
    t = build_preagg(cfs, attrs["p"], idx)
    assert dict(zip(t.facts.tolist(), t.count.tolist())) == truth
    st_ = analyze_attribute(cfs, attrs["p"], idx)
    assert st_.support == len(t.facts)
    assert st_.multi_count == int((t.count >= 2).sum())
    if "count(p)" in attrs:
        v = idx.values(attrs["count(p)"])
        got = {f: int(float(v.vocab[c][0])) for f, c in zip(v.facts.tolist(), v.codes.tolist())}
        assert got == truth
