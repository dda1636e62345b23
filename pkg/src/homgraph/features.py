"""Feature extraction from the suspicious subgraph.

Two blocks are produced per graph and concatenated:

* presence: one 0/1 entry per catalog API, set when any subgraph node
  matches that entry;
* triad ratios: for each catalog API and each of six selected directed
  triad types, the fraction of triads of that type containing a node that
  matches the API.

Unordered node triples are classified into the 16 canonical directed triad
types. The six selected types, in fixed feature order, are (edge sets on
nodes A, B, C):

    021D  B->A, B->C          021U  A->B, C->B      021C  A->B, B->C
    111U  A<->B, B->C         030T  A->B, C->B, A->C
    120U  A->B, C->B, A<->C

The census walks edge neighborhoods rather than all n^3 triples, so it
stays cheap on sparse graphs; triples with one non-null dyad are counted
in bulk and edgeless triples are tallied separately by subtraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .homophily import PartitionOutcome
from .model import CallGraph, SensitiveApiCatalog, matching_entries

TRIAD_NAMES = (
    "003", "012", "102", "021D", "021U", "021C", "111D", "111U",
    "030T", "030C", "201", "120D", "120U", "120C", "210", "300",
)

# Batagelj-Mrvar code table: the 6-bit edge pattern of a node triple
# (v,u):1 (u,v):2 (v,w):4 (w,v):8 (u,w):16 (w,u):32 indexes the canonical
# triad type, 1-based into TRIAD_NAMES.
_TRICODES = (
    1, 2, 2, 3, 2, 4, 6, 8, 2, 6, 5, 7, 3, 8, 7, 11, 2, 6, 4, 8, 5, 9,
    9, 13, 6, 10, 9, 14, 7, 14, 12, 15, 2, 5, 6, 7, 6, 9, 10, 14, 4, 9,
    9, 12, 8, 13, 14, 15, 3, 7, 8, 11, 7, 12, 14, 15, 8, 14, 13, 15,
    11, 15, 15, 16,
)
_CODE_TO_NAME = {code: TRIAD_NAMES[cls - 1] for code, cls in enumerate(_TRICODES)}

SELECTED_TRIADS = ("021D", "021U", "021C", "111U", "030T", "120U")
_SELECTED_SET = frozenset(SELECTED_TRIADS)


@dataclass(frozen=True)
class TriadCensus:
    """Directed triad counts for one graph.

    ``total_counts`` classifies every triple with at least one edge among
    its dyads; the "003" slot therefore stays 0 and edgeless triples are
    reported in ``edgeless_triples``. ``sensitive_counts`` maps
    (catalog index, selected type) to the number of triads of that type
    containing a node matching that catalog entry (each triad once).
    """

    total_counts: dict[str, int]
    sensitive_counts: dict[tuple[int, str], int]
    edgeless_triples: int
    node_count: int

    @property
    def triple_count(self) -> int:
        n = self.node_count
        return n * (n - 1) * (n - 2) // 6


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Presence block followed by the triad-ratio block.

    Ratio order is catalog-major with the six selected triad types as the
    inner dimension, so the total dimension is 7 * |catalog|.
    """

    presence: np.ndarray
    ratios: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.presence) + len(self.ratios)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.presence, self.ratios])


def triad_census(
    subgraph: CallGraph, catalog: SensitiveApiCatalog | None = None
) -> TriadCensus:
    """Classify every node triple of a normalized directed graph.

    ``catalog`` drives the per-API sensitive counts; without it only the
    type totals are populated.
    """
    nodes = [n.id for n in subgraph.nodes]
    n = len(nodes)
    succ = subgraph.out_neighbors
    pred = subgraph.in_neighbors
    position = {nid: i for i, nid in enumerate(nodes)}

    api_matches: dict[int, tuple[int, ...]] = {}
    if catalog is not None:
        for node in subgraph.nodes:
            hits = matching_entries(node.name, catalog)
            if hits:
                api_matches[node.id] = hits

    totals = {name: 0 for name in TRIAD_NAMES}
    sensitive: dict[tuple[int, str], int] = {}

    for v in nodes:
        vnbrs = pred[v] | succ[v]
        for u in vnbrs:
            if position[u] <= position[v]:
                continue
            third = (vnbrs | succ[u] | pred[u]) - {u, v}
            # Triples whose only edges sit in the (v, u) dyad, in bulk.
            if u in succ[v] and v in succ[u]:
                totals["102"] += n - len(third) - 2
            else:
                totals["012"] += n - len(third) - 2
            for w in third:
                if position[u] < position[w] or (
                    position[v] < position[w] < position[u]
                    and w not in vnbrs
                ):
                    code = _tricode(succ, v, u, w)
                    name = _CODE_TO_NAME[code]
                    totals[name] += 1
                    if name in _SELECTED_SET and api_matches:
                        apis: set[int] = set()
                        for member in (v, u, w):
                            apis.update(api_matches.get(member, ()))
                        for api in apis:
                            key = (api, name)
                            sensitive[key] = sensitive.get(key, 0) + 1

    classified = sum(totals.values())
    edgeless = n * (n - 1) * (n - 2) // 6 - classified
    return TriadCensus(
        total_counts=totals,
        sensitive_counts=sensitive,
        edgeless_triples=edgeless,
        node_count=n,
    )


def _tricode(succ: dict[int, set[int]], v: int, u: int, w: int) -> int:
    code = 0
    if u in succ[v]:
        code += 1
    if v in succ[u]:
        code += 2
    if w in succ[v]:
        code += 4
    if v in succ[w]:
        code += 8
    if w in succ[u]:
        code += 16
    if u in succ[w]:
        code += 32
    return code


def presence_features(
    subgraph: CallGraph, catalog: SensitiveApiCatalog
) -> np.ndarray:
    """0/1 vector: entry i set when some subgraph node matches catalog entry i."""
    vec = np.zeros(len(catalog), dtype=np.float64)
    for node in subgraph.nodes:
        for idx in matching_entries(node.name, catalog):
            vec[idx] = 1.0
    return vec


def ratio_features(census: TriadCensus, catalog: SensitiveApiCatalog) -> np.ndarray:
    """Sensitive-triad ratios, catalog-major over the six selected types.

    ratio(api, t) = sensitive_counts(api, t) / total_counts(t), or 0 when
    the subgraph has no triads of type t.
    """
    width = len(SELECTED_TRIADS)
    vec = np.zeros(len(catalog) * width, dtype=np.float64)
    for t_idx, name in enumerate(SELECTED_TRIADS):
        total = census.total_counts[name]
        if total == 0:
            continue
        for api in range(len(catalog)):
            count = census.sensitive_counts.get((api, name), 0)
            if count:
                vec[api * width + t_idx] = count / total
    return vec


def featurize(outcome: PartitionOutcome, catalog: SensitiveApiCatalog) -> FeatureVector:
    """Feature vector of a partition outcome's suspicious subgraph."""
    subgraph = outcome.suspicious_subgraph
    census = triad_census(subgraph, catalog)
    return FeatureVector(
        presence=presence_features(subgraph, catalog),
        ratios=ratio_features(census, catalog),
    )


def feature_names(catalog: SensitiveApiCatalog) -> list[str]:
    """Column names in vector order: presence[i] then ratio[i][type]."""
    names = [f"presence[{i}]" for i in range(len(catalog))]
    for i in range(len(catalog)):
        names.extend(f"ratio[{i}][{t}]" for t in SELECTED_TRIADS)
    return names
