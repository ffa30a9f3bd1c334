"""Multi-level (node, edge, graph) anomaly detection on graphs.

The pieces, bottom-up:

- `graph_core`: CSR graphs, exact Rayleigh quotients, composite signals.
- `sampler`: maximum-Rayleigh-quotient subtree sampling by tree DP.
- `autograd`, `nn`: a small reverse-mode engine and layers on numpy.
- `stitch`: three stitched towers, level masking, gradient surgery.
- `data`, `metrics`, `pipeline`: synthetic benchmarks, scoring, training.
"""
from .data import Dataset, edge_labels_from_nodes, split, synth_multi_graph, synth_single_graph
from .errors import ConfigError, DomainError
from .graph_core import Fraction, Graph, composite_feature, rayleigh_quotient
from .metrics import auprc, auroc, macro_f1
from .pipeline import MetricsReport, TrainConfig, evaluate, prepare, train
from .sampler import mrq_sample_edge, mrq_sample_node
from .stitch import GraphStitchModel, gradient_surgery

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Dataset", "DomainError", "Fraction", "Graph", "GraphStitchModel",
    "MetricsReport", "TrainConfig", "auprc", "auroc", "composite_feature",
    "edge_labels_from_nodes", "evaluate", "gradient_surgery", "macro_f1",
    "mrq_sample_edge", "mrq_sample_node", "prepare", "rayleigh_quotient", "split",
    "synth_multi_graph", "synth_single_graph", "train",
]
