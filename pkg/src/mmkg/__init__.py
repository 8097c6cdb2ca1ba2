"""Multimodal medical knowledge graph toolkit.

Graph construction from candidate concept annotations, neighbor-aware image
filtering, and a link-prediction benchmark over embedding models.
"""

__version__ = "0.1.0"

from mmkg.graph import (
    ConceptNode,
    GraphStats,
    ImageNode,
    Modality,
    MultimodalGraph,
    Polarity,
    RelationType,
    Triple,
    compute_stats,
)
from mmkg.io import parse_graph, serialize_graph
from mmkg.naf import naf_score, run_naf, subgraph_from_selection
from mmkg.models import MODEL_KINDS, VocabIndex, init_model
from mmkg.estimators import LinkPredictor, NafFilter

__all__ = [
    "ConceptNode",
    "GraphStats",
    "ImageNode",
    "LinkPredictor",
    "MODEL_KINDS",
    "Modality",
    "MultimodalGraph",
    "NafFilter",
    "Polarity",
    "RelationType",
    "Triple",
    "VocabIndex",
    "compute_stats",
    "init_model",
    "naf_score",
    "parse_graph",
    "run_naf",
    "serialize_graph",
    "subgraph_from_selection",
]
