"""Random and meta-path walks, window contexts, noise table, training triplets."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._random import derive_rng
from .exceptions import WalkError

logger = logging.getLogger(__name__)

__all__ = [
    "MetaPathScheme",
    "WalkConfig",
    "random_walk",
    "metapath_walk",
    "generate_corpus",
    "extract_context_pairs",
    "NoiseTable",
    "build_noise_table",
    "sample_triplets",
    "write_corpus",
    "read_corpus",
]


@dataclass(frozen=True)
class MetaPathScheme:
    """Node-type template such as A-P-V-P-A, recursed until the walk is long enough.

    ``types`` holds type codes; first and last must agree so the template
    can restart from its own end.
    """

    types: tuple
    name: str = ""

    @classmethod
    def parse(cls, text, schema):
        """Build from ``"APVPA"`` (type initials) or ``"author-paper-venue-paper-author"``."""
        text = text.strip()
        if "-" in text:
            names = text.split("-")
        else:
            abbrev = schema.abbreviations()
            try:
                names = [abbrev[ch.upper()] for ch in text]
            except KeyError as exc:
                raise WalkError(f"scheme {text!r}: no node type with initial {exc.args[0]!r}") from None
        codes = tuple(schema.type_code(n) for n in names)
        scheme = cls(codes, text)
        scheme.validate(schema)
        return scheme

    def validate(self, schema):
        if len(self.types) < 2:
            raise WalkError(f"scheme {self.name!r} needs at least two node types")
        if self.types[0] != self.types[-1]:
            raise WalkError(f"scheme {self.name!r} must start and end with the same node type")
        names = schema.node_types
        for a, b in zip(self.types, self.types[1:]):
            if not schema.connects(names[a], names[b]):
                raise WalkError(f"scheme {self.name!r}: no relation joins {names[a]} and {names[b]}")

    @property
    def period(self):
        return len(self.types) - 1

    def type_at(self, position):
        """Required type code at walk ``position`` (0-based) once the scheme is recursed."""
        return self.types[position % self.period]


@dataclass
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 30
    window: int = 7
    mode: str = "metapath"
    schemes: tuple = ("APA", "APPA", "APVPA")
    seed: int = 0
    noise_support: str = "corpus"
    workers: int = 1

    def __post_init__(self):
        if self.walks_per_node < 1:
            raise WalkError("walks_per_node must be >= 1")
        if self.walk_length < 2:
            raise WalkError("walk_length must be >= 2")
        if not 1 <= self.window < self.walk_length:
            raise WalkError("window must satisfy 1 <= window < walk_length")
        if self.mode not in ("random", "metapath"):
            raise WalkError(f"unknown walk mode {self.mode!r}")
        if self.noise_support not in ("corpus", "all"):
            raise WalkError(f"unknown noise support {self.noise_support!r}")
        if isinstance(self.schemes, str):
            self.schemes = tuple(s for s in self.schemes.split(",") if s)
        self.schemes = tuple(self.schemes)
        if self.mode == "metapath" and not self.schemes:
            raise WalkError("metapath mode needs at least one scheme")

    def parsed_schemes(self, schema):
        return [s if isinstance(s, MetaPathScheme) else MetaPathScheme.parse(s, schema) for s in self.schemes]


def random_walk(g, start, length, rng):
    """Uniform random walk; stops early only at a node with no neighbors."""
    walk = [start]
    draws = rng.random(length - 1)
    cur = start
    for u in draws:
        nbrs = g.neighbor_array(cur)
        if len(nbrs) == 0:
            break
        cur = int(nbrs[int(u * len(nbrs))])
        walk.append(cur)
    return np.asarray(walk, dtype=np.int64)


def metapath_walk(g, start, scheme, length, rng):
    """Walk whose type sequence follows ``scheme`` recursively; truncated at a dead end."""
    if g.node_type(start) != scheme.types[0]:
        raise WalkError(
            f"walk start {g.label(start)!r} has type {g.type_name(start)!r}, "
            f"scheme {scheme.name!r} starts with {g.schema.node_types[scheme.types[0]]!r}"
        )
    walk = [start]
    draws = rng.random(length - 1)
    cur = start
    for pos in range(1, length):
        nbrs = g.neighbors_of_type(cur, scheme.type_at(pos))
        if len(nbrs) == 0:
            break
        cur = int(nbrs[int(draws[pos - 1] * len(nbrs))])
        walk.append(cur)
    return np.asarray(walk, dtype=np.int64)


def _eligible_starts(g, cfg, schemes):
    if cfg.mode == "random":
        return [(v, None) for v in range(g.n_nodes)]
    types = g.types
    starts = []
    for v in range(g.n_nodes):
        own = [s for s in schemes if s.types[0] == types[v]]
        if own:
            starts.append((v, own))
    return starts


def _walks_for(g, cfg, chunk):
    out = []
    for v, own in chunk:
        for i in range(cfg.walks_per_node):
            rng = derive_rng(cfg.seed, "walk", v, i)
            if own is None:
                out.append(random_walk(g, v, cfg.walk_length, rng))
            else:
                out.append(metapath_walk(g, v, own[(v + i) % len(own)], cfg.walk_length, rng))
    return out


def generate_corpus(g, cfg):
    """``walks_per_node`` walks from every eligible start node.

    In metapath mode a node is eligible when some scheme starts with its type,
    and walk ``i`` from node ``v`` uses its ``(v + i) mod k``-th matching
    scheme, so every scheme is used even with few walks per node.
    Each walk has its own RNG derived from ``(seed, start, i)``, so the result
    does not depend on ``cfg.workers``.
    """
    schemes = cfg.parsed_schemes(g.schema) if cfg.mode == "metapath" else []
    starts = _eligible_starts(g, cfg, schemes)
    if not starts:
        raise WalkError("no eligible start nodes for walk generation")
    if cfg.workers <= 1 or len(starts) < 2 * cfg.workers:
        return _walks_for(g, cfg, starts)
    size = -(-len(starts) // cfg.workers)
    chunks = [starts[i : i + size] for i in range(0, len(starts), size)]
    corpus = []
    with ProcessPoolExecutor(cfg.workers) as pool:
        for part in pool.map(_walks_for, [g] * len(chunks), [cfg] * len(chunks), chunks):
            corpus.extend(part)
    return corpus


def extract_context_pairs(corpus, window):
    """All ``(center, context)`` pairs at walk distance ``1..window``, both directions.

    Returns two equal-length int arrays.
    """
    if window < 1:
        raise WalkError("window must be >= 1")
    centers, contexts = [], []
    for walk in corpus:
        n = len(walk)
        for k in range(1, min(window, n - 1) + 1):
            centers.append(walk[:-k])
            contexts.append(walk[k:])
            centers.append(walk[k:])
            contexts.append(walk[:-k])
    if not centers:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()
    return np.concatenate(centers), np.concatenate(contexts)


class NoiseTable:
    """Per-type negative sampler with weights ``count ** power``.

    Parameters
    ----------
    counts : ndarray of shape (n_nodes,)
        Occurrence count of each node in the walk corpus.
    types : ndarray of shape (n_nodes,)
        Type code of each node.
    power : float
        Exponent applied to counts.
    support : {"corpus", "all"}
        ``"corpus"`` samples only nodes that occur in the corpus; ``"all"``
        treats unseen nodes of a type as if seen once.
    """

    def __init__(self, counts, types, power=0.75, support="corpus"):
        counts = np.asarray(counts, dtype=np.float64)
        types = np.asarray(types, dtype=np.int64)
        self.counts = counts
        self.types = types
        self.power = power
        self.support = support
        self.nodes = {}
        self.probs = {}
        self._cdf = {}
        for t in np.unique(types):
            members = np.flatnonzero(types == t)
            c = counts[members]
            if support == "all":
                c = np.maximum(c, 1.0)
            keep = c > 0
            if not keep.any():
                continue
            members, c = members[keep], c[keep]
            w = c**power
            p = w / w.sum()
            self.nodes[int(t)] = members
            self.probs[int(t)] = p
            cdf = np.cumsum(p)
            cdf[-1] = 1.0
            self._cdf[int(t)] = cdf

    def covers(self, node_type):
        return int(node_type) in self.nodes

    def probability(self, node_type):
        """``(nodes, probabilities)`` for one type."""
        t = int(node_type)
        return self.nodes[t], self.probs[t]

    def sample(self, node_type, size, rng):
        t = int(node_type)
        if t not in self.nodes:
            raise WalkError(f"node type {t} absent from noise table")
        idx = np.searchsorted(self._cdf[t], rng.random(size), side="right")
        return self.nodes[t][np.minimum(idx, len(self.nodes[t]) - 1)]


def build_noise_table(corpus, types, power=0.75, support="corpus"):
    """Count every node occurrence in ``corpus`` and build a :class:`NoiseTable`."""
    types = np.asarray(types, dtype=np.int64)
    if not corpus or sum(len(w) for w in corpus) == 0:
        raise WalkError("cannot build a noise table from an empty corpus")
    counts = np.bincount(np.concatenate(corpus), minlength=len(types))
    return NoiseTable(counts, types, power=power, support=support)


def sample_triplets(centers, contexts, noise, rng, negatives=1, max_resample=10):
    """Attach ``negatives`` noise nodes of the context's type to every pair.

    A negative equal to its positive context is redrawn up to
    ``max_resample`` times, then kept. Returns ``(triplets, n_fallback)`` with
    ``triplets`` an ``(n_pairs * negatives, 3)`` array of
    ``(center, context, negative)`` rows and ``n_fallback`` the number of rows
    whose negative still equals the context.
    """
    centers = np.repeat(np.asarray(centers, dtype=np.int64), negatives)
    contexts = np.repeat(np.asarray(contexts, dtype=np.int64), negatives)
    negs = np.empty_like(contexts)
    ctx_types = noise.types[contexts]
    for t in np.unique(ctx_types):
        if not noise.covers(t):
            raise WalkError(f"node type {int(t)} absent from noise table")
        idx = np.flatnonzero(ctx_types == t)
        negs[idx] = noise.sample(t, len(idx), rng)
        for _ in range(max_resample):
            bad = idx[negs[idx] == contexts[idx]]
            if len(bad) == 0:
                break
            negs[bad] = noise.sample(t, len(bad), rng)
    n_fallback = int(np.count_nonzero(negs == contexts))
    if n_fallback:
        logger.warning("%d negatives coincide with their positive context after resampling", n_fallback)
    return np.stack([centers, contexts, negs], axis=1), n_fallback


def write_corpus(corpus, g, path):
    """One walk per line, node labels separated by spaces."""
    with open(path, "w", encoding="utf-8") as fh:
        for walk in corpus:
            fh.write(" ".join(g.label(int(v)) for v in walk))
            fh.write("\n")


def read_corpus(path, g):
    corpus = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                corpus.append(np.array([g.index(x) for x in line.split()], dtype=np.int64))
    return corpus
