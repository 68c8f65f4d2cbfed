"""Typed heterogeneous graph: schema, adjacency, node text, TSV ingestion.

Nodes carry an opaque string label and a dense internal index assigned in
order of insertion. Edges are typed by relation; every relation connects a
fixed (source type, target type) pair and is undirected unless the schema
marks it directed. Duplicate edges collapse, so adjacency is a set.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import GraphError

logger = logging.getLogger(__name__)

__all__ = [
    "Relation",
    "GraphSchema",
    "HetGraph",
    "load_graph",
    "save_graph",
    "read_tsv",
    "apply_delta",
]


@dataclass(frozen=True)
class Relation:
    name: str
    source: str
    target: str
    directed: bool = False


class GraphSchema:
    """Node types plus the relations allowed between them.

    Parameters
    ----------
    relations : iterable of Relation or tuple
        ``(name, source_type, target_type[, directed])``.
    node_types : iterable of str, optional
        Extra node types not referenced by any relation. Types referenced by
        relations are always declared, in order of first appearance.
    """

    def __init__(self, relations, node_types=()):
        rels = []
        for r in relations:
            rels.append(r if isinstance(r, Relation) else Relation(*r))
        types = list(dict.fromkeys(node_types))
        for r in rels:
            for t in (r.source, r.target):
                if t not in types:
                    types.append(t)
        names = [r.name for r in rels]
        if len(set(names)) != len(names):
            raise GraphError(f"duplicate relation names in schema: {names}")
        self.node_types = tuple(types)
        self.relations = tuple(rels)
        self._type_code = {t: i for i, t in enumerate(self.node_types)}
        self._rel_code = {r.name: i for i, r in enumerate(self.relations)}

    @classmethod
    def academic(cls):
        """author-write-paper, paper-cite-paper, paper-publish-venue; all undirected."""
        return cls(
            [
                Relation("write", "author", "paper"),
                Relation("cite", "paper", "paper"),
                Relation("publish", "paper", "venue"),
            ]
        )

    @classmethod
    def parse(cls, text):
        """Parse ``"write:author-paper,cite:paper-paper>"``; a trailing ``>`` marks a directed relation."""
        rels = []
        for item in filter(None, (s.strip() for s in text.split(","))):
            try:
                name, ends = item.split(":")
                directed = ends.endswith(">")
                src, dst = ends.rstrip(">").split("-")
            except ValueError:
                raise GraphError(f"cannot parse relation spec {item!r}") from None
            rels.append(Relation(name, src, dst, directed))
        return cls(rels)

    @classmethod
    def read(cls, path):
        """Read ``relation<TAB>source_type<TAB>target_type[<TAB>directed]`` lines."""
        rels = []
        for lineno, fields in read_tsv(path):
            if len(fields) not in (3, 4):
                raise GraphError("expected 3 or 4 tab-separated fields", path, lineno)
            directed = False
            if len(fields) == 4:
                flag = fields[3].strip().lower()
                if flag not in ("directed", "undirected"):
                    raise GraphError(f"bad directedness flag {fields[3]!r}", path, lineno)
                directed = flag == "directed"
            rels.append(Relation(fields[0], fields[1], fields[2], directed))
        return cls(rels)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.relations:
                flag = "directed" if r.directed else "undirected"
                fh.write(f"{r.name}\t{r.source}\t{r.target}\t{flag}\n")

    def type_code(self, name):
        try:
            return self._type_code[name]
        except KeyError:
            raise GraphError(f"unknown node type {name!r}") from None

    def relation_code(self, name):
        try:
            return self._rel_code[name]
        except KeyError:
            raise GraphError(f"unknown relation {name!r}") from None

    def relation(self, name):
        return self.relations[self.relation_code(name)]

    def connects(self, type_a, type_b):
        """True if some relation can carry a walk step from ``type_a`` to ``type_b``."""
        for r in self.relations:
            if r.source == type_a and r.target == type_b:
                return True
            if not r.directed and r.source == type_b and r.target == type_a:
                return True
        return False

    def abbreviations(self):
        """Map of upper-case initial to type name, for initials that are unambiguous."""
        initials = {}
        for t in self.node_types:
            initials.setdefault(t[:1].upper(), []).append(t)
        return {k: v[0] for k, v in initials.items() if len(v) == 1}

    def to_dict(self):
        return {
            "node_types": list(self.node_types),
            "relations": [[r.name, r.source, r.target, r.directed] for r in self.relations],
        }

    @classmethod
    def from_dict(cls, data):
        return cls([Relation(*r) for r in data["relations"]], data.get("node_types", ()))

    def __eq__(self, other):
        return (
            isinstance(other, GraphSchema)
            and self.node_types == other.node_types
            and self.relations == other.relations
        )

    def __repr__(self):
        rels = ", ".join(f"{r.name}:{r.source}-{r.target}" for r in self.relations)
        return f"GraphSchema({rels})"


class HetGraph:
    """Mutable heterogeneous graph with typed adjacency and optional node text.

    Read access is safe from any number of threads; ``add_node`` and
    ``add_edge`` need exclusive access.
    """

    def __init__(self, schema):
        self.schema = schema
        self._labels = []
        self._index = {}
        self._types = []
        self._adj = []  # per node: {relation code: set of neighbor indices}
        self._content = {}
        self._edges = []  # (src, rel code, dst) as inserted, duplicates removed
        self._by_type_cache = {}
        self._all_cache = {}
        self._types_arr = None

    # -- size and lookup ---------------------------------------------------

    @property
    def n_nodes(self):
        return len(self._labels)

    @property
    def n_edges(self):
        return len(self._edges)

    def __len__(self):
        return len(self._labels)

    def __contains__(self, label):
        return label in self._index

    @property
    def labels(self):
        return list(self._labels)

    def label(self, v):
        return self._labels[self._check(v)]

    def index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise GraphError(f"unknown node {label!r}") from None

    def resolve(self, node):
        """Internal index for a label or an index."""
        if isinstance(node, (int, np.integer)):
            return self._check(int(node))
        return self.index(node)

    def node_type(self, v):
        return self._types[self._check(v)]

    def type_name(self, v):
        return self.schema.node_types[self.node_type(v)]

    @property
    def types(self):
        """Type code of every node as a read-only int array."""
        if self._types_arr is None:
            self._types_arr = np.asarray(self._types, dtype=np.int64)
            self._types_arr.flags.writeable = False
        return self._types_arr

    def nodes_of_type(self, node_type):
        code = node_type if isinstance(node_type, (int, np.integer)) else self.schema.type_code(node_type)
        return np.flatnonzero(self.types == code)

    def content(self, v):
        return self._content.get(self._check(v))

    def has_content(self, v):
        return self._check(v) in self._content

    @property
    def content_nodes(self):
        """Sorted indices of nodes with text (the set V_S)."""
        return np.array(sorted(self._content), dtype=np.int64)

    @property
    def content_mask(self):
        mask = np.zeros(self.n_nodes, dtype=bool)
        if self._content:
            mask[list(self._content)] = True
        return mask

    def _check(self, v):
        if not 0 <= v < len(self._labels):
            raise GraphError(f"unknown node index {v}")
        return v

    # -- adjacency ---------------------------------------------------------

    def neighbors(self, v, rel=None):
        """Neighbors of ``v`` in ascending index order, optionally restricted to one relation."""
        v = self.resolve(v)
        if rel is None:
            return self.neighbor_array(v).tolist()
        code = self.schema.relation_code(rel)
        return sorted(self._adj[v].get(code, ()))

    def neighbor_array(self, v):
        arr = self._all_cache.get(v)
        if arr is None:
            merged = set()
            for nbrs in self._adj[v].values():
                merged.update(nbrs)
            arr = np.array(sorted(merged), dtype=np.int64)
            self._all_cache[v] = arr
        return arr

    def neighbors_of_type(self, v, type_code):
        key = (v, type_code)
        arr = self._by_type_cache.get(key)
        if arr is None:
            nbrs = self.neighbor_array(v)
            arr = nbrs[self.types[nbrs] == type_code]
            self._by_type_cache[key] = arr
        return arr

    def degree(self, v):
        return len(self.neighbor_array(self.resolve(v)))

    def edges(self):
        """Iterate ``(src_label, relation, dst_label)`` in insertion order."""
        for s, r, d in self._edges:
            yield self._labels[s], self.schema.relations[r].name, self._labels[d]

    # -- mutation ----------------------------------------------------------

    def add_node(self, label, node_type, content=None):
        if not isinstance(label, str) or not label:
            raise GraphError(f"node label must be a non-empty string, got {label!r}")
        if label in self._index:
            raise GraphError(f"duplicate node label {label!r}")
        code = self.schema.type_code(node_type)
        v = len(self._labels)
        self._labels.append(label)
        self._index[label] = v
        self._types.append(code)
        self._types_arr = None
        self._adj.append({})
        if content is not None:
            self._content[v] = content
        return v

    def set_content(self, node, text):
        self._content[self.resolve(node)] = text

    def add_edge(self, src, dst, rel):
        """Add ``src -rel-> dst``; returns False if the edge already existed."""
        s, d = self.resolve(src), self.resolve(dst)
        code = self.schema.relation_code(rel)
        relation = self.schema.relations[code]
        st, dt = self.type_name(s), self.type_name(d)
        if (st, dt) != (relation.source, relation.target):
            raise GraphError(
                f"relation {relation.name!r} connects {relation.source}->{relation.target}, "
                f"got {self._labels[s]!r}({st})->{self._labels[d]!r}({dt})"
            )
        out = self._adj[s].setdefault(code, set())
        if d in out:
            return False
        out.add(d)
        if not relation.directed:
            self._adj[d].setdefault(code, set()).add(s)
        self._edges.append((s, code, d))
        for n in (s, d):
            self._all_cache.pop(n, None)
            for t in range(len(self.schema.node_types)):
                self._by_type_cache.pop((n, t), None)
        return True

    def copy(self):
        g = HetGraph(self.schema)
        for v, label in enumerate(self._labels):
            g.add_node(label, self.schema.node_types[self._types[v]], self._content.get(v))
        for s, r, d in self._edges:
            g.add_edge(s, d, self.schema.relations[r].name)
        return g

    def __repr__(self):
        return f"HetGraph(n_nodes={self.n_nodes}, n_edges={self.n_edges}, n_content={len(self._content)})"


# -- file ingestion ---------------------------------------------------------


def read_tsv(path, maxsplit=-1):
    """Yield ``(lineno, fields)`` for non-blank, non-comment lines of a UTF-8 TSV file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line.split("\t", maxsplit)


def _read_nodes(g, path):
    added = []
    for lineno, fields in read_tsv(path):
        if len(fields) != 2:
            raise GraphError("expected label<TAB>type", path, lineno)
        label, type_name = fields
        if label in g:
            raise GraphError(f"duplicate node label {label!r}", path, lineno)
        if type_name not in g.schema.node_types:
            raise GraphError(f"unknown node type {type_name!r}", path, lineno)
        added.append(g.add_node(label, type_name))
    return added


def _read_edges(g, path):
    relation_names = {r.name for r in g.schema.relations}
    for lineno, fields in read_tsv(path):
        if len(fields) != 3:
            raise GraphError("expected src<TAB>relation<TAB>dst", path, lineno)
        src, rel, dst = fields
        if rel not in relation_names:
            raise GraphError(f"unknown relation {rel!r}", path, lineno)
        for label in (src, dst):
            if label not in g:
                raise GraphError(f"edge references undeclared node {label!r}", path, lineno)
        try:
            g.add_edge(src, dst, rel)
        except GraphError as exc:
            raise GraphError(str(exc), path, lineno) from None


def _read_content(g, path):
    for lineno, fields in read_tsv(path, maxsplit=1):
        if len(fields) != 2:
            raise GraphError("expected label<TAB>text", path, lineno)
        label, text = fields
        if label not in g:
            raise GraphError(f"content for undeclared node {label!r}", path, lineno)
        g.set_content(label, text)


def load_graph(nodes_path, edges_path, content_path=None, schema=None):
    """Build a :class:`HetGraph` from TSV files.

    ``schema`` may be a :class:`GraphSchema`, a path to a schema TSV, or
    ``None`` for the academic author/paper/venue schema. Node indices follow
    order of appearance in the nodes file.
    """
    if schema is None:
        schema = GraphSchema.academic()
    elif isinstance(schema, (str, os.PathLike)):
        schema = GraphSchema.read(schema)
    g = HetGraph(schema)
    _read_nodes(g, nodes_path)
    _read_edges(g, edges_path)
    if content_path is not None:
        _read_content(g, content_path)
    logger.info("loaded %r", g)
    return g


def save_graph(g, directory, prefix=""):
    """Write ``nodes.tsv``, ``edges.tsv``, ``content.tsv`` and ``schema.tsv`` under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {k: directory / f"{prefix}{k}.tsv" for k in ("nodes", "edges", "content", "schema")}
    with open(paths["nodes"], "w", encoding="utf-8") as fh:
        for v, label in enumerate(g._labels):
            fh.write(f"{label}\t{g.type_name(v)}\n")
    with open(paths["edges"], "w", encoding="utf-8") as fh:
        for s, r, d in g.edges():
            fh.write(f"{s}\t{r}\t{d}\n")
    with open(paths["content"], "w", encoding="utf-8") as fh:
        for v in g.content_nodes:
            text = g.content(v).replace("\t", " ").replace("\n", " ")
            fh.write(f"{g.label(v)}\t{text}\n")
    g.schema.write(paths["schema"])
    return paths


def apply_delta(g, nodes_path=None, edges_path=None, content_path=None):
    """Grow ``g`` in place from delta TSV files; returns indices of the new nodes.

    Content lines may only refer to nodes introduced by the same delta.
    """
    new = _read_nodes(g, nodes_path) if nodes_path and Path(nodes_path).exists() else []
    if edges_path and Path(edges_path).exists():
        _read_edges(g, edges_path)
    if content_path and Path(content_path).exists():
        fresh = {g.label(v) for v in new}
        for lineno, fields in read_tsv(content_path, maxsplit=1):
            if len(fields) != 2:
                raise GraphError("expected label<TAB>text", content_path, lineno)
            if fields[0] not in fresh:
                raise GraphError(f"delta content for non-new node {fields[0]!r}", content_path, lineno)
            g.set_content(fields[0], fields[1])
    return new
