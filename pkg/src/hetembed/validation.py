"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError, GraphError, HetEmbedError
from .graph import HetGraph
from .textenc import WordTable


def check_graph(g, require_content=False, min_nodes=2):
    """Return ``g`` if it is a usable :class:`HetGraph`, else raise."""
    if not isinstance(g, HetGraph):
        raise GraphError(f"expected a HetGraph, got {type(g).__name__}")
    if g.n_nodes < min_nodes:
        raise GraphError(f"graph has {g.n_nodes} nodes, need at least {min_nodes}")
    if g.n_edges == 0:
        raise GraphError("graph has no edges")
    if require_content and len(g.content_nodes) == 0:
        raise GraphError("graph has no node text")
    return g


def check_words(words, variant):
    if variant == "hsg":
        return None
    if words is None:
        raise ConfigError(f"variant {variant!r} needs word vectors")
    if not isinstance(words, WordTable):
        raise ConfigError(f"word vectors must be a WordTable, got {type(words).__name__}")
    if not np.all(np.isfinite(words.vectors)):
        raise ConfigError("word vectors contain non-finite values")
    return words


def check_nodes(model, nodes):
    """Map labels or indices to model indices, naming the first unknown node."""
    out = []
    for x in nodes:
        if isinstance(x, (int, np.integer)):
            if not 0 <= int(x) < model.n_nodes:
                raise HetEmbedError(f"node index {int(x)} out of range")
            out.append(int(x))
        else:
            out.append(model.index(str(x)))
    return np.asarray(out, dtype=np.int64)
