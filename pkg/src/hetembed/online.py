"""Representations for nodes that arrive after training.

Content nodes go straight through the trained encoder. Content-less nodes
get one free vector fit by SGD on meta-path walks rooted at the node, with
every trained vector held fixed.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._random import derive_rng
from .exceptions import ConfigError, HetEmbedError, WalkError
from .objectives import log_sigmoid
from .walks import MetaPathScheme, metapath_walk

logger = logging.getLogger(__name__)

__all__ = [
    "OnlineConfig",
    "FrozenModel",
    "UpdateResult",
    "infer_content_node",
    "rooted_walks",
    "rooted_contexts",
    "update_new_node",
    "update_delta",
]


@dataclass
class OnlineConfig:
    """Settings of the rooted-walk update.

    ``walk_length`` is the number of context positions per walk and must
    equal the training window; ``None`` takes it from the model.
    ``schemes`` lists candidate schemes; a node uses the first one that
    starts with its own type.
    """

    n_walks: int = 100
    walk_length: int | None = None
    learning_rate: float = 0.025
    tol: float = 1e-4
    max_iter: int = 50
    schemes: tuple = ("APVPA", "PVP")
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.schemes, str):
            self.schemes = tuple(s.strip() for s in self.schemes.split(",") if s.strip())
        self.schemes = tuple(self.schemes)
        if not self.schemes:
            raise ConfigError("at least one online scheme is required")
        if self.n_walks < 1:
            raise ConfigError("n_walks must be >= 1")
        if self.walk_length is not None and self.walk_length < 1:
            raise ConfigError("walk_length must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.max_iter < 0:
            raise ConfigError("max_iter must be >= 0")

    def resolved_length(self, model):
        tau = int(model.config.get("walk", {}).get("window", 0)) or None
        if self.walk_length is None:
            if tau is None:
                raise ConfigError("model records no training window; set walk_length")
            return tau
        if tau is not None and self.walk_length != tau:
            raise ConfigError(f"online walk length {self.walk_length} differs from the training window {tau}")
        return self.walk_length


class FrozenModel:
    """Read-only view of trained representations, plus vectors of already-placed new nodes.

    The base matrix is copied and write-protected, so nothing done here can
    reach the trained model.
    """

    def __init__(self, model, extra=None):
        self.model = model
        base = model.representations()
        base.setflags(write=False)
        self._base = base
        self._extra = dict(extra or {})

    @property
    def dim(self):
        return self._base.shape[1]

    @property
    def base(self):
        return self._base

    def has(self, label):
        return label in self._extra or label in self.model._index

    def vector(self, label):
        if label in self._extra:
            return self._extra[label]
        return self._base[self.model.index(label)]

    def add(self, label, vector):
        if self.has(label):
            raise HetEmbedError(f"node {label!r} already has a representation")
        vec = np.array(vector, dtype=np.float64)
        vec.setflags(write=False)
        self._extra[label] = vec

    @property
    def extra(self):
        return dict(self._extra)

    def digest(self):
        """Hash of the trained representations and parameters (new-node vectors excluded)."""
        h = hashlib.sha256(self._base.tobytes())
        h.update(self.model.fingerprint().encode())
        return h.hexdigest()


@dataclass
class UpdateResult:
    vector: np.ndarray
    contexts: list
    n_sweeps: int
    objective: list = field(default_factory=list)
    converged: bool = False


def infer_content_node(model, text):
    """Encoder output for unseen ``text``; returns ``(vector, empty)``.

    Empty or fully out-of-vocabulary text gives the zero vector with
    ``empty=True``. The model is not modified.
    """
    encoder = model.encoder
    if encoder is None:
        raise HetEmbedError(f"variant {model.variant!r} has no trained text encoder")
    return encoder.encode(text)


def _scheme_for(g, v, schemes):
    parsed = [MetaPathScheme.parse(s, g.schema) for s in schemes]
    for s in parsed:
        if s.types[0] == g.node_type(v):
            return s
    raise ConfigError(
        f"no online scheme starts with type {g.type_name(v)!r} of node {g.label(v)!r} "
        f"(schemes: {', '.join(schemes)})"
    )


def rooted_walks(g, v, scheme, tau, n_walks, seed):
    """``n_walks`` meta-path walks of ``tau + 1`` nodes starting at ``v``.

    A walk that cannot be completed raises :class:`WalkError` naming the
    blocked step.
    """
    if g.degree(v) == 0:
        raise WalkError(f"new node {g.label(v)!r} is isolated")
    names = g.schema.node_types
    walks = []
    for i in range(n_walks):
        walk = metapath_walk(g, v, scheme, tau + 1, derive_rng(seed, "online", g.label(v), i))
        if len(walk) < tau + 1:
            last = int(walk[-1])
            want = names[scheme.type_at(len(walk))]
            raise WalkError(
                f"{scheme.name} walk from {g.label(v)!r} blocked at step {len(walk)}: "
                f"{g.label(last)!r} ({g.type_name(last)}) has no {want} neighbor"
            )
        walks.append(walk)
    return walks


def rooted_contexts(g, walk):
    """Context labels of one rooted walk: every node after the root, except returns to the root."""
    root = int(walk[0])
    return [g.label(int(u)) for u in walk[1:] if int(u) != root]


def _sweep_objective(theta, C, N):
    return float(np.sum(log_sigmoid(C @ theta) + log_sigmoid(-(N @ theta))))


def update_new_node(g, v, frozen, cfg):
    """Fit the free vector of content-less new node ``v`` with rooted-walk SGD.

    The vector starts at the mean of its neighbors' known vectors (zero if
    none are known) and is updated one triplet at a time over the fixed
    triplet set, maximizing ``log sig(c . x) + log sig(-n . x)``. Sweeps stop
    once the relative change of ``x`` falls below ``cfg.tol`` or after
    ``cfg.max_iter`` sweeps; the learning rate decays linearly over sweeps.
    Only ``x`` changes.
    """
    v = g.resolve(v)
    model = frozen.model
    tau = cfg.resolved_length(model)
    scheme = _scheme_for(g, v, cfg.schemes)
    walks = rooted_walks(g, v, scheme, tau, cfg.n_walks, cfg.seed)

    label = g.label(v)
    noise = model.noise_table()
    rng = derive_rng(cfg.seed, "online-negatives", label)
    ctx_vecs, neg_vecs, contexts = [], [], []
    for walk in walks:
        for c in rooted_contexts(g, walk):
            if not frozen.has(c):
                continue  # another new node without a vector yet
            t = g.node_type(g.index(c))
            if not noise.covers(t):
                raise HetEmbedError(f"trained noise table has no {g.schema.node_types[t]} nodes")
            n = int(noise.sample(t, 1, rng)[0])
            contexts.append(c)
            ctx_vecs.append(frozen.vector(c))
            neg_vecs.append(frozen.vector(model.labels[n]))
    if not contexts:
        raise WalkError(f"rooted walks from {label!r} reached no node with a known representation")
    C = np.array(ctx_vecs)
    N = np.array(neg_vecs)

    known = [frozen.vector(g.label(u)) for u in g.neighbors(v) if frozen.has(g.label(u))]
    x = np.mean(known, axis=0) if known else np.zeros(frozen.dim)
    objective = [_sweep_objective(x, C, N)]
    converged = False
    sweeps = 0
    for s in range(cfg.max_iter):
        lr = cfg.learning_rate * max(1.0 - s / cfg.max_iter, 1e-4)
        prev = x.copy()
        for c, n in zip(C, N):
            x = x + lr * ((1.0 - expit(c @ x)) * c - expit(n @ x) * n)
        sweeps = s + 1
        objective.append(_sweep_objective(x, C, N))
        if np.linalg.norm(x - prev) < cfg.tol * max(np.linalg.norm(prev), 1e-12):
            converged = True
            break
    return UpdateResult(x, contexts, sweeps, objective, converged)


def update_delta(g, new_nodes, model, cfg, frozen=None):
    """Place every node of ``new_nodes`` (indices into the grown graph ``g``).

    Content nodes are encoded first when the model has an encoder; the
    remaining nodes are then fit in the given order, each seeing the vectors
    placed before it (nodes with text go first). Returns ``(frozen, results)`` where ``frozen.extra``
    holds every new vector and ``results`` maps labels to
    :class:`UpdateResult` (or ``None`` for encoded nodes).
    """
    frozen = frozen or FrozenModel(model)
    results = {}
    encoded = []
    if model.encoder is not None:
        encoded = [v for v in new_nodes if g.has_content(v)]
        for v in encoded:
            vec, empty = infer_content_node(model, g.content(v))
            if empty:
                logger.warning("new node %r has no known words; using the zero vector", g.label(v))
            frozen.add(g.label(v), vec)
            results[g.label(v)] = None
    rest = [v for v in new_nodes if v not in encoded]
    rest.sort(key=lambda v: not g.has_content(v))  # papers before their authors
    for v in rest:
        res = update_new_node(g, v, frozen, cfg)
        frozen.add(g.label(v), res.vector)
        results[g.label(v)] = res
    return frozen, results
