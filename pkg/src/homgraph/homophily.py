"""Homophily analysis: coupling, suspicious-subgraph assembly, covertness.

Coupling between two disjoint node sets compares the observed fraction of
cross edges against the chance expectation 2*p*q for independently colored
endpoints. Low coupling (at or below the threshold) marks a sensitive
community as suspicious; high coupling means the sensitive code is wired
into the rest of the app like any benign module.

All edge counting happens on the simple undirected projection, restricted
to the union of the two parts; edges touching outside nodes are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .community import CommunityPartition
from .model import CallGraph, InputError, induced_subgraph

# Denominator of the observed cross-edge fraction. "total" counts every edge
# of the two-part subgraph (matches the worked 5/18 exposition); "internal"
# counts only within-part edges (the formula as printed).
DENOMINATOR_TOTAL = "total"
DENOMINATOR_INTERNAL = "internal"
DENOMINATORS = (DENOMINATOR_TOTAL, DENOMINATOR_INTERNAL)

FILTERED_BENIGN = "filtered_benign"
SUSPICIOUS = "suspicious"

# Candidate covert malware: malicious part below 2% of nodes and coupling
# with the normal part between 1 and 5 inclusive.
COVERT_PROPORTION_LIMIT = 0.02
COVERT_COUPLING_BAND = (1.0, 5.0)

PROPORTION_CATEGORIES = ("[0,1%)", "[1,2%)", "[2,3%)", "[3,4%)", "[4,5%)", ">=5%")


class CovertnessError(InputError):
    """Graph cannot be covertness-analyzed (no sensitive nodes, or nothing else)."""


@dataclass(frozen=True)
class CouplingReport:
    """Edge and node counts behind one coupling value.

    ``c`` is the quotient of the observed cross-edge fraction and the
    chance expectation ``2*p*q``; 0 when there are no cross edges.
    """

    n_a: int
    n_b: int
    e_a: int
    e_b: int
    s: int
    c: float
    denominator: str = DENOMINATOR_TOTAL

    @property
    def total_edges(self) -> int:
        return self.e_a + self.e_b + self.s

    @property
    def edge_denominator(self) -> int:
        if self.denominator == DENOMINATOR_INTERNAL:
            return self.e_a + self.e_b
        return self.total_edges

    @property
    def cross_fraction(self) -> float:
        den = self.edge_denominator
        return self.s / den if den else 0.0

    @property
    def chance_expectation(self) -> float:
        n = self.n_a + self.n_b
        if n == 0 or self.n_a == 0 or self.n_b == 0:
            return 0.0
        return 2.0 * (self.n_a / n) * (self.n_b / n)


@dataclass(frozen=True)
class SensitiveCommunity:
    """One community containing sensitive API nodes, with its verdict."""

    nodes: frozenset[int]
    coupling: CouplingReport
    verdict: str


@dataclass(frozen=True)
class PartitionOutcome:
    """Result of splitting a partitioned graph into benign and suspicious parts."""

    benign_nodes: frozenset[int]
    sensitive_communities: tuple[SensitiveCommunity, ...]
    suspicious_subgraph: CallGraph
    threshold: float


@dataclass(frozen=True)
class CovertnessReport:
    """Proportion and coupling profile of a graph's malicious part."""

    malicious_nodes: frozenset[int]
    proportion: float
    coupling_normal_malicious: CouplingReport
    category: str
    covert_candidate: bool


def coupling_from_counts(
    n_a: int,
    n_b: int,
    e_a: int,
    e_b: int,
    s: int,
    denominator: str = DENOMINATOR_TOTAL,
) -> CouplingReport:
    """Coupling value from raw counts; the arithmetic core of :func:`coupling`."""
    if denominator not in DENOMINATORS:
        raise ValueError(f"denominator must be one of {DENOMINATORS}")
    if n_a <= 0 or n_b <= 0:
        raise ValueError("both parts must be non-empty")
    if min(e_a, e_b, s) < 0:
        raise ValueError("edge counts must be non-negative")
    report = CouplingReport(n_a, n_b, e_a, e_b, s, 0.0, denominator)
    den = report.edge_denominator
    if s == 0 or den == 0:
        return report
    c = (s / den) / report.chance_expectation
    return CouplingReport(n_a, n_b, e_a, e_b, s, c, denominator)


def coupling(
    graph: CallGraph,
    part_a: Iterable[int],
    part_b: Iterable[int],
    denominator: str = DENOMINATOR_TOTAL,
) -> CouplingReport:
    """Coupling between two disjoint node sets of ``graph``.

    Counts undirected edges of the subgraph induced on ``part_a | part_b``:
    ``e_a`` within a, ``e_b`` within b, ``s`` across. Edges with an endpoint
    outside both parts are ignored.
    """
    set_a = frozenset(part_a)
    set_b = frozenset(part_b)
    if not set_a or not set_b:
        raise ValueError("coupling parts must be non-empty")
    if set_a & set_b:
        raise ValueError("coupling parts must be disjoint")
    outside = (set_a | set_b) - graph.node_ids
    if outside:
        raise ValueError(f"part nodes not in graph: {sorted(outside)[:5]}")

    e_a = e_b = s = 0
    for u, v in graph.undirected_edges:
        u_in_a = u in set_a
        v_in_a = v in set_a
        u_in_b = u in set_b
        v_in_b = v in set_b
        if u_in_a and v_in_a:
            e_a += 1
        elif u_in_b and v_in_b:
            e_b += 1
        elif (u_in_a and v_in_b) or (u_in_b and v_in_a):
            s += 1
    return coupling_from_counts(len(set_a), len(set_b), e_a, e_b, s, denominator)


def partition_suspicious(
    graph: CallGraph,
    partition: CommunityPartition,
    threshold: float,
    denominator: str = DENOMINATOR_TOTAL,
) -> PartitionOutcome:
    """Split communities into a benign union and verdict-tagged sensitive ones.

    Communities without sensitive nodes merge into the benign community.
    Each sensitive community is coupled against the benign community alone
    (edges between two sensitive communities do not enter either pair's
    counts). Coupling strictly above ``threshold`` filters the community as
    benign; at or below it stays suspicious. With no benign community every
    sensitive community is suspicious and its coupling is recorded as 0.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    missing = graph.node_ids - partition.assignment.keys()
    if missing or len(partition.assignment) != graph.node_count:
        raise ValueError("partition does not cover graph exactly")

    sensitive_ids = graph.sensitive_ids
    benign: set[int] = set()
    sensitive_groups: list[frozenset[int]] = []
    for members in partition.communities():
        if members & sensitive_ids:
            sensitive_groups.append(members)
        else:
            benign.update(members)

    communities: list[SensitiveCommunity] = []
    suspicious_union: set[int] = set()
    for members in sensitive_groups:
        if benign:
            report = coupling(graph, members, benign, denominator)
        else:
            report = CouplingReport(len(members), 0, 0, 0, 0, 0.0, denominator)
        verdict = FILTERED_BENIGN if report.c > threshold else SUSPICIOUS
        if verdict == SUSPICIOUS:
            suspicious_union.update(members)
        communities.append(SensitiveCommunity(members, report, verdict))

    return PartitionOutcome(
        benign_nodes=frozenset(benign),
        sensitive_communities=tuple(communities),
        suspicious_subgraph=induced_subgraph(graph, suspicious_union),
        threshold=threshold,
    )


def malicious_part(graph: CallGraph, hops: int = 1) -> frozenset[int]:
    """Sensitive nodes plus their callers within ``hops`` reverse-edge steps."""
    if hops < 0:
        raise ValueError("hops must be non-negative")
    frontier = set(graph.sensitive_ids)
    part = set(frontier)
    preds = graph.in_neighbors
    for _ in range(hops):
        frontier = {p for node in frontier for p in preds[node]} - part
        if not frontier:
            break
        part.update(frontier)
    return frozenset(part)


def proportion_category(proportion: float) -> str:
    """Bucket a malicious-node proportion into the six reporting categories."""
    if not 0.0 <= proportion <= 1.0:
        raise ValueError("proportion must be in [0, 1]")
    bucket = int(proportion * 100.0)
    if bucket >= 5:
        return PROPORTION_CATEGORIES[5]
    return PROPORTION_CATEGORIES[bucket]


def is_covert_candidate(proportion: float, c: float) -> bool:
    low, high = COVERT_COUPLING_BAND
    return proportion < COVERT_PROPORTION_LIMIT and low <= c <= high


def covertness(
    graph: CallGraph, hops: int = 1, denominator: str = DENOMINATOR_TOTAL
) -> CovertnessReport:
    """Proportion, coupling, and covert-candidate verdict for one graph.

    The malicious part is the sensitive nodes plus callers within ``hops``
    steps; the normal part is everything else.
    """
    malicious = malicious_part(graph, hops)
    if not malicious:
        raise CovertnessError(f"graph {graph.app_id!r} has no sensitive nodes")
    normal = graph.node_ids - malicious
    if not normal:
        raise CovertnessError(
            f"graph {graph.app_id!r}: malicious part covers every node"
        )
    proportion = len(malicious) / graph.node_count
    report = coupling(graph, normal, malicious, denominator)
    return CovertnessReport(
        malicious_nodes=malicious,
        proportion=proportion,
        coupling_normal_malicious=report,
        category=proportion_category(proportion),
        covert_candidate=is_covert_candidate(proportion, report.c),
    )
