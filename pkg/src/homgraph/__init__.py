"""Call-graph community and homophily analytics for covert-malware triage."""

from .classify import (
    ConfusionCounts,
    CrossValidationReport,
    LabeledSample,
    MetricsReport,
    cross_validate,
    knn_predict,
    metrics,
    threshold_sweep,
)
from .community import (
    CommunityPartition,
    compare_algorithms,
    detect_label_propagation,
    detect_multilevel,
    modularity,
)
from .features import (
    SELECTED_TRIADS,
    FeatureVector,
    TriadCensus,
    featurize,
    presence_features,
    ratio_features,
    triad_census,
)
from .generate import PlantedTruth, SyntheticSpec, generate_corpus
from .homophily import (
    CouplingReport,
    CovertnessReport,
    PartitionOutcome,
    coupling,
    covertness,
    malicious_part,
    partition_suspicious,
)
from .model import (
    CallGraph,
    FunctionNode,
    SensitiveApiCatalog,
    load_catalog,
    load_graph,
    match_sensitive,
    normalize,
    parse_graph,
    serialize_graph,
)
from .pipeline import GraphAnalysis, PipelineConfig, analyze_corpus, analyze_graph

__version__ = "0.1.0"

__all__ = [
    "CallGraph",
    "CommunityPartition",
    "ConfusionCounts",
    "CouplingReport",
    "CovertnessReport",
    "CrossValidationReport",
    "FeatureVector",
    "FunctionNode",
    "GraphAnalysis",
    "LabeledSample",
    "MetricsReport",
    "PartitionOutcome",
    "PipelineConfig",
    "PlantedTruth",
    "SELECTED_TRIADS",
    "SensitiveApiCatalog",
    "SyntheticSpec",
    "TriadCensus",
    "analyze_corpus",
    "analyze_graph",
    "compare_algorithms",
    "coupling",
    "covertness",
    "cross_validate",
    "detect_label_propagation",
    "detect_multilevel",
    "featurize",
    "generate_corpus",
    "knn_predict",
    "load_catalog",
    "load_graph",
    "malicious_part",
    "match_sensitive",
    "metrics",
    "modularity",
    "normalize",
    "parse_graph",
    "partition_suspicious",
    "presence_features",
    "ratio_features",
    "serialize_graph",
    "threshold_sweep",
    "triad_census",
]
