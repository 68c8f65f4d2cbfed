"""Scikit-learn style front end: ``fit`` on a graph, ``transform`` node labels into vectors."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .graph import HetGraph
from .online import FrozenModel, OnlineConfig, update_delta
from .trainer import TrainConfig, TrainedModel, train
from .validation import check_graph, check_nodes, check_words
from .walks import WalkConfig

__all__ = ["HetNetEmbedding"]


class HetNetEmbedding(TransformerMixin, BaseEstimator):
    """Content-aware embedding of a heterogeneous network.

    Parameters
    ----------
    variant : {"hsg", "hsg-sr", "se-hsg"}, default="se-hsg"
        ``hsg`` uses structure only; the other two also encode node text.
    dim : int, default=128
    window : int, default=7
        Context distance within a walk.
    walks_per_node, walk_length : int
    mode : {"metapath", "random"}
    schemes : str or tuple of str
        Meta-path schemes such as ``"APA,APPA,APVPA"``.
    negatives : int, default=1
    gamma : float, default=1.0
        Semantic penalty weight (``hsg-sr`` only).
    learning_rate, batch_size, max_epochs, tol :
        Adam and stopping settings.
    t_max : int, default=100
        Words kept per text.
    words : WordTable or None
        Pretrained word vectors; required unless ``variant="hsg"``.
    workers : int, default=1
    random_state : int, default=0

    Attributes
    ----------
    model_ : TrainedModel
    embedding_ : ndarray of shape (n_nodes, dim)
    labels_ : list of str
    """

    def __init__(
        self,
        variant="se-hsg",
        dim=128,
        window=7,
        walks_per_node=10,
        walk_length=30,
        mode="metapath",
        schemes="APA,APPA,APVPA",
        negatives=1,
        gamma=1.0,
        learning_rate=1e-3,
        batch_size=512,
        max_epochs=200,
        tol=1e-4,
        t_max=100,
        words=None,
        workers=1,
        random_state=0,
    ):
        self.variant = variant
        self.dim = dim
        self.window = window
        self.walks_per_node = walks_per_node
        self.walk_length = walk_length
        self.mode = mode
        self.schemes = schemes
        self.negatives = negatives
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.tol = tol
        self.t_max = t_max
        self.words = words
        self.workers = workers
        self.random_state = random_state

    def _configs(self):
        tc = TrainConfig(
            variant=self.variant,
            dim=self.dim,
            negatives=self.negatives,
            gamma=self.gamma,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            tol=self.tol,
            t_max=self.t_max,
            seed=self.random_state,
        )
        wc = WalkConfig(
            walks_per_node=self.walks_per_node,
            walk_length=self.walk_length,
            window=self.window,
            mode=self.mode,
            schemes=self.schemes,
            seed=self.random_state,
            workers=self.workers,
        )
        return tc, wc

    def fit(self, X, y=None):
        """Learn representations for every node of graph ``X``; ``y`` is ignored."""
        tc, wc = self._configs()
        check_graph(X, require_content=tc.uses_text)
        words = check_words(self.words, tc.variant)
        self._set_model(train(X, tc, wc, words=words))
        return self

    def _set_model(self, model):
        self.model_ = model
        self.embedding_ = model.representations()
        self.labels_ = list(model.labels)
        self.n_nodes_ = model.n_nodes

    @classmethod
    def from_model(cls, model):
        """Wrap an existing :class:`TrainedModel` as a fitted estimator."""
        if isinstance(model, str):
            model = TrainedModel.load(model)
        train_cfg = model.config.get("train", {})
        walk_cfg = model.config.get("walk", {})
        est = cls(
            variant=model.variant,
            dim=model.dim,
            window=walk_cfg.get("window", 7),
            walks_per_node=walk_cfg.get("walks_per_node", 10),
            walk_length=walk_cfg.get("walk_length", 30),
            mode=walk_cfg.get("mode", "metapath"),
            schemes=",".join(walk_cfg.get("schemes", ["APA", "APPA", "APVPA"])),
            random_state=train_cfg.get("seed", 0),
            words=model.words,
        )
        est._set_model(model)
        return est

    def transform(self, X):
        """Vectors for ``X``: a sequence of labels or indices, or a graph whose nodes all exist in the model."""
        check_is_fitted(self, "model_")
        nodes = X.labels if isinstance(X, HetGraph) else X
        idx = check_nodes(self.model_, nodes)
        return self.embedding_[idx]

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_

    def embed_new_nodes(self, X, new_nodes, online=None):
        """Vectors for nodes of the grown graph ``X`` that are absent from the model.

        Trained vectors stay fixed. Returns a dict label -> vector.
        """
        check_is_fitted(self, "model_")
        online = online or OnlineConfig(seed=self.random_state)
        idx = [X.resolve(v) for v in new_nodes]
        frozen, _ = update_delta(X, idx, self.model_, online, FrozenModel(self.model_))
        return frozen.extra

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path)
