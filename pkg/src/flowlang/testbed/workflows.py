"""The three benchmark workflows and the catalog/placement they run with.

Every test service ``T{i}`` lives on its own site ``S{i}``; the client and
the workflow root live on site ``R``, which hosts no service.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..catalog import Resolver
from ..errors import FormatError
from ..partitioner import Placement, Site
from .services import AGGREGATE_DOUBLE, DOUBLE, SAME_SIZE, TestServiceSpec

PIPELINE = "pipeline"
AGGREGATION = "aggregation"
DISTRIBUTION = "distribution"
PATTERNS = (PIPELINE, AGGREGATION, DISTRIBUTION)

ROOT = "R"
CATALOG_URL = "http://testbed.invalid/catalog.json"

_HEADER = f"description tb is {CATALOG_URL}\n" + "".join(
    f"service t{i} is tb.T{i}\n" for i in range(1, 5)
) + "".join(f"port p{i} is t{i}.P{i}\n" for i in range(1, 5))

SOURCES = {
    PIPELINE: _HEADER
    + """
input:
   any a
output:
   any r

a -> p1.Run
p1.Run -> p2.Run
p2.Run -> p3.Run
p3.Run -> p4.Run
p4.Run -> r
""",
    AGGREGATION: _HEADER
    + """
input:
   any a
output:
   any r

a -> p1.Run, p2.Run, p3.Run
p1.Run -> b1
p2.Run -> b2
p3.Run -> b3
y = (b1, b2, b3)
y -> p4.Run
p4.Run -> r
""",
    DISTRIBUTION: _HEADER
    + """
input:
   any a
output:
   any r2, r3, r4

a -> p1.Run
p1.Run -> p2.Run, p3.Run, p4.Run
p2.Run -> r2
p3.Run -> r3
p4.Run -> r4
""",
}

BEHAVIOR = {
    PIPELINE: (DOUBLE, DOUBLE, DOUBLE, DOUBLE),
    AGGREGATION: (SAME_SIZE, SAME_SIZE, SAME_SIZE, AGGREGATE_DOUBLE),
    DISTRIBUTION: (SAME_SIZE, SAME_SIZE, SAME_SIZE, SAME_SIZE),
}


def check_pattern(pattern: str) -> str:
    if pattern not in PATTERNS:
        raise FormatError("$.pattern", f"unknown pattern {pattern!r}; expected one of {', '.join(PATTERNS)}")
    return pattern


def service_site(i: int) -> str:
    return f"S{i}"


def default_services(pattern: str, compute_delay_ms: float | None = None) -> list[TestServiceSpec]:
    kw = {} if compute_delay_ms is None else {"compute_delay_ms": compute_delay_ms}
    return [TestServiceSpec(f"T{i}", b, **kw) for i, b in enumerate(BEHAVIOR[check_pattern(pattern)], start=1)]


def virtual_endpoint(i: int) -> str:
    return f"http://t{i}.testbed.invalid"


def catalog_doc(pattern: str, endpoints: list[str]) -> dict:
    """Service catalog for T1..T4; T4 of the aggregation takes three parts."""
    services = []
    for i, url in enumerate(endpoints, start=1):
        params = ["a", "b", "c"] if pattern == AGGREGATION and i == 4 else ["data"]
        op = {"name": "Run", "inputs": [{"name": p, "type": "any"} for p in params], "output": {"type": "any"}}
        services.append({"name": f"T{i}", "ports": [{"name": f"P{i}", "endpoint": url, "operations": [op]}]})
    return {"description": "testbed", "services": services}


def resolver_for(pattern: str, endpoints: list[str]) -> Resolver:
    return Resolver({}, documents={CATALOG_URL: catalog_doc(pattern, endpoints)})


@dataclass(frozen=True)
class Topology:
    """Site layout: the root plus one site per test service."""

    root_url: str = ""
    site_urls: tuple[str, ...] = ("", "", "", "")

    def decentralized(self) -> Placement:
        sites = (Site(ROOT, self.root_url),) + tuple(
            Site(service_site(i), u) for i, u in enumerate(self.site_urls, start=1)
        )
        return Placement(ROOT, sites, {f"p{i}": service_site(i) for i in range(1, 5)})

    def centralized(self) -> Placement:
        return Placement(ROOT, (Site(ROOT, self.root_url),), {})
