"""Content-aware embeddings for heterogeneous networks.

Three model variants share one walk-based training pipeline:

* ``hsg``: structure only, negative-sampled skip-gram over typed walks;
* ``hsg-sr``: adds a penalty tying text nodes to their GRU text encodings;
* ``se-hsg``: text nodes are represented by the encoder output itself.
"""

from .estimator import HetNetEmbedding
from .evaluation import (
    LogisticRegressionGD,
    build_ranking_queries,
    export_projector_tsv,
    hit_ratio_at_k,
    link_features,
    link_prediction,
    recall_at_k,
    top_k_relevant,
)
from .exceptions import ConfigError, EncoderError, GraphError, HetEmbedError, NumericalError, WalkError
from .graph import GraphSchema, HetGraph, apply_delta, load_graph, save_graph
from .online import FrozenModel, OnlineConfig, infer_content_node, update_delta, update_new_node
from .textenc import GruEncoder, GruParams, WordTable, load_word_vectors
from .trainer import TrainConfig, TrainedModel, train
from .walks import MetaPathScheme, WalkConfig, generate_corpus

__version__ = "0.1.0"

__all__ = [
    "HetNetEmbedding",
    "HetGraph",
    "GraphSchema",
    "load_graph",
    "save_graph",
    "apply_delta",
    "MetaPathScheme",
    "WalkConfig",
    "generate_corpus",
    "WordTable",
    "load_word_vectors",
    "GruParams",
    "GruEncoder",
    "TrainConfig",
    "TrainedModel",
    "train",
    "OnlineConfig",
    "FrozenModel",
    "infer_content_node",
    "update_new_node",
    "update_delta",
    "LogisticRegressionGD",
    "link_features",
    "link_prediction",
    "build_ranking_queries",
    "hit_ratio_at_k",
    "recall_at_k",
    "top_k_relevant",
    "export_projector_tsv",
    "HetEmbedError",
    "GraphError",
    "WalkError",
    "EncoderError",
    "ConfigError",
    "NumericalError",
]
