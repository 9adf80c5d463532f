import os
from importlib import resources

import pytest
from hypothesis import HealthCheck, settings

from rdfinsight.attributes import AttributeIndex
from rdfinsight.graph_store import load_ntriples, select_cfs

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CEOS = str(resources.files("rdfinsight") / "data" / "ceos.nt")
EX = "http://example.org/ceos/"


@pytest.fixture(scope="session")
def ceos_path():
    return CEOS


@pytest.fixture(scope="session")
def ceos():
    return load_ntriples(CEOS)


@pytest.fixture(scope="session")
def ceo_cfs(ceos):
    return select_cfs(ceos, "type", "CEO")


@pytest.fixture(scope="session")
def ceo_index(ceos):
    return AttributeIndex(ceos)


@pytest.fixture(scope="session")
def ceo_attrs(ceo_index, ceo_cfs):
    return {a.name: a for a in ceo_index.enumerate(ceo_cfs)}
