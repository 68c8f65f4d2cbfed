"""Planted-community author/paper/venue networks with topical paper text.

Each community owns its authors, papers, venues and a private vocabulary.
Each edge slot of a paper independently leaves its home community with
probability ``cross_prob``; ``cross_prob_venue`` and ``cross_prob_cite``
override it per relation. Papers are ordered in time; the last ``holdout``
fraction of each community's papers fall after the split time and only feed
the evaluation event files.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._random import derive_rng
from .exceptions import ConfigError
from .graph import GraphSchema, HetGraph, save_graph
from .textenc import WordTable

__all__ = ["SynthConfig", "SynthData", "generate", "write_fixture"]


@dataclass
class SynthConfig:
    n_communities: int = 2
    authors: int = 20
    papers: int = 30
    venues: int = 3
    cross_prob: float = 0.05
    cross_prob_venue: float | None = None
    cross_prob_cite: float | None = None
    vocab_size: int = 30
    shared_vocab: int = 20
    words_per_paper: int = 12
    text_noise: float = 0.25
    max_authors_per_paper: int = 3
    citations_per_paper: int = 2
    holdout: float = 0.2
    word_dim: int = 16
    word_signal: float = 1.0
    new_authors: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("cross_prob", "cross_prob_venue", "cross_prob_cite", "text_noise", "holdout"):
            p = getattr(self, name)
            if p is None:
                continue
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability in [0, 1], got {p}")
        if self.n_communities < 1:
            raise ConfigError("n_communities must be >= 1")
        if max(self.cross_prob, self.p_venue, self.p_cite) > 0 and self.n_communities < 2:
            raise ConfigError("cross_prob > 0 needs at least two communities")
        for name in ("authors", "papers", "venues", "vocab_size", "words_per_paper", "word_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_authors_per_paper < 2:
            raise ConfigError("max_authors_per_paper must be >= 2")
        n_pre = self.papers - int(round(self.holdout * self.papers))
        if n_pre < self.authors:
            raise ConfigError("each author needs a pre-split paper: papers * (1 - holdout) >= authors")

    @property
    def p_venue(self):
        return self.cross_prob if self.cross_prob_venue is None else self.cross_prob_venue

    @property
    def p_cite(self):
        return self.cross_prob if self.cross_prob_cite is None else self.cross_prob_cite


@dataclass
class SynthData:
    graph: HetGraph
    words: WordTable
    community: dict
    collab_events: list
    cocite_events: list
    venue_events: list
    delta: HetGraph
    delta_edges: list
    stats: dict = field(default_factory=dict)


def _pick_other(rng, c, k):
    other = int(rng.integers(k - 1))
    return other + (other >= c)


def generate(cfg):
    """Build the fixture in memory; deterministic in ``cfg``."""
    rng = derive_rng(cfg.seed, "synth")
    K = cfg.n_communities
    A = [[f"A{c * cfg.authors + i + 1}" for i in range(cfg.authors)] for c in range(K)]
    P = [[f"P{c * cfg.papers + j + 1}" for j in range(cfg.papers)] for c in range(K)]
    V = [[f"V{c * cfg.venues + i + 1}" for i in range(cfg.venues)] for c in range(K)]
    vocab = [[f"c{c}w{i}" for i in range(cfg.vocab_size)] for c in range(K)]
    shared = [f"gw{i}" for i in range(cfg.shared_vocab)]
    community = {}
    for c in range(K):
        for label in A[c] + P[c] + V[c]:
            community[label] = c

    n_pre = cfg.papers - int(round(cfg.holdout * cfg.papers))
    slots = crossings = 0
    papers = []  # (label, community, time, authors, venue, cites, text)
    for j in range(cfg.papers):
        for c in range(K):
            authors = [A[c][j]] if j < cfg.authors else []
            k = int(rng.integers(2, cfg.max_authors_per_paper + 1))
            while len(authors) < k:
                slots += 1
                cross = K > 1 and rng.random() < cfg.cross_prob
                home = _pick_other(rng, c, K) if cross else c
                cand = A[home][int(rng.integers(cfg.authors))]
                if cand in authors:
                    slots -= 1
                    continue
                crossings += cross
                authors.append(cand)
            slots += 1
            cross = K > 1 and rng.random() < cfg.p_venue
            crossings += cross
            home = _pick_other(rng, c, K) if cross else c
            venue = V[home][j % cfg.venues] if home == c and j < cfg.venues else V[home][int(rng.integers(cfg.venues))]
            cites = []
            for _ in range(min(cfg.citations_per_paper, j)):
                slots += 1
                cross = K > 1 and rng.random() < cfg.p_cite
                crossings += cross
                home = _pick_other(rng, c, K) if cross else c
                cites.append(P[home][int(rng.integers(j))])
            words = []
            for _ in range(cfg.words_per_paper):
                if shared and rng.random() < cfg.text_noise:
                    words.append(shared[int(rng.integers(len(shared)))])
                else:
                    words.append(vocab[c][int(rng.integers(cfg.vocab_size))])
            papers.append((P[c][j], c, j, authors, venue, sorted(set(cites)), " ".join(words)))

    g = HetGraph(GraphSchema.academic())
    for c in range(K):
        for a in A[c]:
            g.add_node(a, "author")
    for label, c, j, authors, venue, cites, text in papers:
        if j < n_pre:
            g.add_node(label, "paper", text)
    for c in range(K):
        for v in V[c]:
            g.add_node(v, "venue")
    cross_edges = 0
    for label, c, j, authors, venue, cites, text in papers:
        if j >= n_pre:
            continue
        for a in authors:
            g.add_edge(a, label, "write")
        g.add_edge(label, venue, "publish")
        for q in cites:
            g.add_edge(label, q, "cite")
        cross_edges += sum(community[x] != c for x in authors + [venue] + cites)

    before = set()
    for label, c, j, authors, *_ in papers:
        if j < n_pre:
            before.update(_pairs(authors))
    collab, cocite, venue_ev = set(), set(), set()
    for label, c, j, authors, venue, cites, text in papers:
        if j < n_pre:
            continue
        collab.update(p for p in _pairs(authors) if p not in before)
        pre_cites = [q for q in cites if q in g]
        cocite.update(_pairs(pre_cites))
        venue_ev.update((a, venue) for a in authors)

    words = _word_table(cfg, vocab, shared)
    delta, delta_edges = _delta(cfg, g, A, V, vocab, community)
    stats = {"cross_slots": slots, "cross_draws": crossings, "cross_edges": cross_edges}
    return SynthData(
        g, words, community, sorted(collab), sorted(cocite), sorted(venue_ev), delta, delta_edges, stats
    )


def _pairs(items):
    items = sorted(set(items))
    return [(a, b) for i, a in enumerate(items) for b in items[i + 1 :]]


def _word_table(cfg, vocab, shared):
    rng = derive_rng(cfg.seed, "words")
    centroids = rng.normal(size=(len(vocab), cfg.word_dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    tokens, rows = [], []
    for c, toks in enumerate(vocab):
        for tok in toks:
            tokens.append(tok)
            rows.append(cfg.word_signal * centroids[c] + rng.normal(scale=1.0 / np.sqrt(cfg.word_dim), size=cfg.word_dim))
    for tok in shared:
        tokens.append(tok)
        rows.append(rng.normal(scale=1.0 / np.sqrt(cfg.word_dim), size=cfg.word_dim))
    return WordTable(tokens, np.array(rows))


def _delta(cfg, g, A, V, vocab, community):
    """New authors, each writing one new paper at an existing venue with existing co-authors."""
    rng = derive_rng(cfg.seed, "delta")
    delta = HetGraph(g.schema)
    edges = []
    K = len(A)
    for i in range(cfg.new_authors):
        c = i % K
        a, p = f"NA{i + 1}", f"NP{i + 1}"
        text = " ".join(vocab[c][int(rng.integers(cfg.vocab_size))] for _ in range(cfg.words_per_paper))
        delta.add_node(a, "author")
        delta.add_node(p, "paper", text)
        community[a] = community[p] = c
        coauthors = sorted({A[c][int(rng.integers(cfg.authors))] for _ in range(2)})
        edges.append((a, "write", p))
        edges.extend((x, "write", p) for x in coauthors)
        edges.append((p, "publish", V[c][int(rng.integers(len(V[c])))]))
    return delta, edges


def write_fixture(data, directory, cfg=None):
    """Write graph TSVs, word vectors, event files, categories and a ``delta/`` directory."""
    directory = Path(directory)
    paths = save_graph(data.graph, directory)
    data.words.save(directory / "words.vec")
    for name, events in (
        ("events_collab", data.collab_events),
        ("events_cocite", data.cocite_events),
        ("events_venue", data.venue_events),
    ):
        with open(directory / f"{name}.tsv", "w", encoding="utf-8") as fh:
            for a, b in events:
                fh.write(f"{a}\t{b}\n")
    with open(directory / "categories.tsv", "w", encoding="utf-8") as fh:
        for label in data.graph.labels:
            fh.write(f"{label}\tc{data.community[label]}\n")
    ddir = directory / "delta"
    ddir.mkdir(exist_ok=True)
    with open(ddir / "nodes.tsv", "w", encoding="utf-8") as fh:
        for v, label in enumerate(data.delta.labels):
            fh.write(f"{label}\t{data.delta.type_name(v)}\n")
    with open(ddir / "edges.tsv", "w", encoding="utf-8") as fh:
        for s, r, d in data.delta_edges:
            fh.write(f"{s}\t{r}\t{d}\n")
    with open(ddir / "content.tsv", "w", encoding="utf-8") as fh:
        for v in data.delta.content_nodes:
            fh.write(f"{data.delta.label(int(v))}\t{data.delta.content(int(v))}\n")
    if cfg is not None:
        with open(directory / "synth.cfg", "w", encoding="utf-8") as fh:
            for k, val in asdict(cfg).items():
                fh.write(f"{k} = {val}\n")
    return paths
