"""Mini-batch training loop, the trained-model container and its file formats."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ._random import derive_rng
from .exceptions import ConfigError, HetEmbedError, NumericalError, WalkError
from .graph import GraphSchema
from .objectives import Objective, Parameters, normalize_variant
from .optim import AdamState, SparseRows, adam_step
from .textenc import GruEncoder, GruParams, WordTable, tokenize
from .walks import (
    NoiseTable,
    WalkConfig,
    build_noise_table,
    extract_context_pairs,
    generate_corpus,
    sample_triplets,
)

logger = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TrainedModel", "TrainingLog", "train", "MAGIC", "FORMAT_VERSION"]

MAGIC = b"HETEMBED"
FORMAT_VERSION = 1
_VARIANT_CODE = {"hsg": 0, "hsg-sr": 1, "se-hsg": 2}
_CODE_VARIANT = {v: k for k, v in _VARIANT_CODE.items()}
_HEADER = struct.Struct("<8sIBIIII")


@dataclass
class TrainConfig:
    variant: str = "se-hsg"
    dim: int = 128
    negatives: int = 1
    gamma: float = 1.0
    batch_size: int = 512
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 200
    tol: float = 1e-4
    t_max: int = 100
    seed: int = 0

    def __post_init__(self):
        self.variant = normalize_variant(self.variant)
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.negatives < 1:
            raise ConfigError("negatives must be >= 1")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")

    @property
    def uses_text(self):
        return self.variant != "hsg"


@dataclass
class TrainingLog:
    """Per-epoch mean triplet loss; entry 0 is measured before any update."""

    losses: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    converged: bool = False
    n_triplets: int = 0
    n_negative_fallbacks: int = 0

    @property
    def initial_loss(self):
        return self.losses[0]

    @property
    def final_loss(self):
        return self.losses[-1]

    @property
    def n_epochs(self):
        return len(self.losses) - 1

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "wall_time"])
            for epoch, (loss, sec) in enumerate(zip(self.losses, self.seconds)):
                w.writerow([epoch, repr(loss), f"{sec:.6f}"])


class TrainedModel:
    """Everything learned from one graph, plus what is needed to reuse it.

    Attributes
    ----------
    variant : str
    labels : list of str
    types : ndarray of int
        Type code per node; names in ``schema.node_types``.
    content_mask : ndarray of bool
        Nodes that carried text at training time.
    params : Parameters
        Free embedding rows with their row map; GRU matrices are ``None`` for ``hsg``.
    words : WordTable or None
    content_E : ndarray
        Encodings of the content nodes in index order (empty for ``hsg``).
    noise_counts : ndarray
        Corpus occurrence counts used for negative sampling.
    """

    def __init__(
        self,
        variant,
        labels,
        types,
        schema,
        content_mask,
        params,
        words=None,
        content_E=None,
        noise_counts=None,
        config=None,
        log=None,
    ):
        self.variant = normalize_variant(variant)
        self.labels = list(labels)
        self.types = np.asarray(types, dtype=np.int64)
        self.schema = schema
        self.content_mask = np.asarray(content_mask, dtype=bool)
        self.params = params
        self.words = words
        d = params.theta.shape[1]
        self.content_E = np.zeros((0, d)) if content_E is None else np.asarray(content_E, dtype=np.float64)
        self.noise_counts = (
            np.zeros(len(self.labels), dtype=np.int64) if noise_counts is None else np.asarray(noise_counts)
        )
        self.config = dict(config or {})
        self.log = log if log is not None else TrainingLog()
        self._index = {label: i for i, label in enumerate(self.labels)}

    @property
    def dim(self):
        return self.params.theta.shape[1]

    @property
    def n_nodes(self):
        return len(self.labels)

    @property
    def content_nodes(self):
        return np.flatnonzero(self.content_mask)

    def index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise HetEmbedError(f"unknown node {label!r}") from None

    @property
    def encoder(self):
        if self.params.phi is None or self.words is None:
            return None
        return GruEncoder(self.params.phi, self.words, self.config.get("t_max", 100))

    def representations(self):
        """``(n_nodes, d)`` vectors used for evaluation.

        Content nodes take their encoding under ``hsg-sr`` and ``se-hsg``;
        every other node takes its free row.
        """
        out = np.zeros((self.n_nodes, self.dim))
        has_row = self.params.row_of >= 0
        out[has_row] = self.params.theta[self.params.row_of[has_row]]
        if self.variant != "hsg" and len(self.content_E):
            out[self.content_nodes] = self.content_E
        return out

    def noise_table(self):
        support = self.config.get("walk", {}).get("noise_support", "corpus")
        return NoiseTable(self.noise_counts, self.types, support=support)

    def parameter_census(self):
        """Counts of trainable numbers: free embedding entries and GRU entries."""
        phi = self.params.phi.size if self.params.phi is not None else 0
        return {"embedding": int(self.params.theta.size), "encoder": int(phi)}

    def fingerprint(self):
        """Digest of every stored parameter array; changes iff the model does."""
        h = hashlib.sha256()
        h.update(self.params.theta.tobytes())
        h.update(self.params.row_of.tobytes())
        if self.params.phi is not None:
            for m in self.params.phi.as_dict().values():
                h.update(m.tobytes())
        h.update(self.content_E.tobytes())
        return h.hexdigest()

    # -- persistence ------------------------------------------------------

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def to_bytes(self):
        buf = io.BytesIO()
        phi = self.params.phi
        d_w = phi.input_size if phi is not None else 0
        n_s = int(self.content_mask.sum())
        buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, _VARIANT_CODE[self.variant], self.dim, self.n_nodes, n_s, d_w))
        for label, t, c in zip(self.labels, self.types, self.content_mask):
            raw = label.encode("utf-8")
            buf.write(struct.pack("<HBI", int(t), int(c), len(raw)))
            buf.write(raw)
        theta = np.ascontiguousarray(self.params.theta, dtype="<f8")
        buf.write(struct.pack("<I", theta.shape[0]))
        buf.write(np.ascontiguousarray(self.params.row_of, dtype="<i8").tobytes())
        buf.write(theta.tobytes())
        if phi is not None:
            for m in phi.as_dict().values():
                buf.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
            E = np.zeros((n_s, self.dim)) if len(self.content_E) != n_s else self.content_E
            buf.write(np.ascontiguousarray(E, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(self.noise_counts, dtype="<i8").tobytes())
        meta = {
            "schema": self.schema.to_dict(),
            "config": self.config,
            "losses": [float(x) for x in self.log.losses],
            "converged": bool(self.log.converged),
            "n_triplets": int(self.log.n_triplets),
        }
        raw = json.dumps(meta, sort_keys=True).encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        if self.words is not None:
            buf.write(struct.pack("<II", len(self.words), self.words.dim))
            for tok in self.words.tokens:
                raw = tok.encode("utf-8")
                buf.write(struct.pack("<I", len(raw)))
                buf.write(raw)
            buf.write(np.ascontiguousarray(self.words.vectors, dtype="<f8").tobytes())
        else:
            buf.write(struct.pack("<II", 0, 0))
        return buf.getvalue()

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    @classmethod
    def from_bytes(cls, data):
        mv = memoryview(data)
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(mv):
                raise HetEmbedError("model file truncated")
            chunk = mv[pos : pos + n]
            pos += n
            return chunk

        def array(count, dtype, shape):
            return np.frombuffer(take(count * 8), dtype=dtype).reshape(shape).astype(dtype[1:]).copy()

        magic, version, vcode, d, n, n_s, d_w = _HEADER.unpack(take(_HEADER.size))
        if magic != MAGIC:
            raise HetEmbedError("not a hetembed model file")
        if version != FORMAT_VERSION:
            raise HetEmbedError(f"unsupported model format version {version}")
        labels, types, content = [], [], []
        for _ in range(n):
            t, c, length = struct.unpack("<HBI", take(7))
            labels.append(bytes(take(length)).decode("utf-8"))
            types.append(t)
            content.append(bool(c))
        (n_rows,) = struct.unpack("<I", take(4))
        row_of = array(n, "<i8", (n,))
        theta = array(n_rows * d, "<f8", (n_rows, d))
        phi, E = None, None
        if d_w:
            mats = {}
            for name in ("A_z", "B_z", "A_r", "B_r", "A_h", "B_h"):
                shape = (d, d_w) if name.startswith("A") else (d, d)
                mats[name] = array(shape[0] * shape[1], "<f8", shape)
            phi = GruParams(**mats)
            E = array(n_s * d, "<f8", (n_s, d))
        counts = array(n, "<i8", (n,))
        (mlen,) = struct.unpack("<I", take(4))
        meta = json.loads(bytes(take(mlen)).decode("utf-8"))
        vocab, wdim = struct.unpack("<II", take(8))
        words = None
        if vocab:
            toks = []
            for _ in range(vocab):
                (length,) = struct.unpack("<I", take(4))
                toks.append(bytes(take(length)).decode("utf-8"))
            words = WordTable(toks, array(vocab * wdim, "<f8", (vocab, wdim)))
        log = TrainingLog(losses=meta["losses"], converged=meta["converged"], n_triplets=meta["n_triplets"])
        return cls(
            _CODE_VARIANT[vcode],
            labels,
            types,
            GraphSchema.from_dict(meta["schema"]),
            content,
            Parameters(theta, row_of, phi),
            words=words,
            content_E=E,
            noise_counts=counts,
            config=meta["config"],
            log=log,
        )

    def export_embeddings(self, path, extra=None):
        """Write ``label<TAB>v_1 ... v_d`` for every node, then any ``extra`` ``(label, vector)`` pairs."""
        reps = self.representations()
        with open(path, "w", encoding="utf-8") as fh:
            for label, vec in zip(self.labels, reps):
                fh.write(label + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")
            for label, vec in extra or ():
                fh.write(label + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")

    def __repr__(self):
        return f"TrainedModel(variant={self.variant!r}, n_nodes={self.n_nodes}, dim={self.dim})"


def _content_matrices(g, words, t_max):
    out = {}
    for v in g.content_nodes:
        X = words.lookup(tokenize(g.content(int(v)), t_max))
        if len(X) == 0:
            logger.warning("node %r has empty text; its encoding is the zero vector", g.label(int(v)))
        out[int(v)] = X
    return out


def train(g, cfg, walk_cfg=None, words=None, corpus=None):
    """Fit one variant on graph ``g`` and return a :class:`TrainedModel`.

    Walks, window pairs, noise table and negatives are drawn once; each
    epoch reshuffles the triplets and sweeps them in mini-batches with Adam.
    Training stops when the relative change of the epoch-mean loss drops
    below ``cfg.tol`` (a non-finite ``tol`` disables the check) or after
    ``cfg.max_epochs`` epochs.
    """
    walk_cfg = walk_cfg or WalkConfig(seed=cfg.seed)
    if cfg.uses_text:
        if words is None:
            raise ConfigError(f"variant {cfg.variant!r} needs word vectors")
        if len(g.content_nodes) == 0:
            raise ConfigError(f"variant {cfg.variant!r} needs node text, graph has none")

    started = time.perf_counter()
    if corpus is None:
        corpus = generate_corpus(g, walk_cfg)
    centers, contexts = extract_context_pairs(corpus, walk_cfg.window)
    noise = build_noise_table(corpus, g.types, support=walk_cfg.noise_support)
    triplets, n_fallback = sample_triplets(
        centers, contexts, noise, derive_rng(cfg.seed, "negatives"), negatives=cfg.negatives
    )
    if len(triplets) == 0:
        raise WalkError("walk corpus produced no training triplets")
    logger.info("%d walks, %d triplets", len(corpus), len(triplets))

    n, d = g.n_nodes, cfg.dim
    content_mask = g.content_mask if cfg.uses_text else np.zeros(n, dtype=bool)
    if cfg.variant == "se-hsg":
        row_of = np.full(n, -1, dtype=np.int64)
        row_of[~content_mask] = np.arange(int((~content_mask).sum()))
    else:
        row_of = np.arange(n, dtype=np.int64)
    n_rows = int((row_of >= 0).sum())
    init_rng = derive_rng(cfg.seed, "init")
    theta = init_rng.uniform(-0.5 / d, 0.5 / d, size=(n_rows, d))
    phi = GruParams.init(d, words.dim, init_rng) if cfg.uses_text else None
    params = Parameters(theta, row_of, phi)
    content = _content_matrices(g, words, cfg.t_max) if cfg.uses_text else {}
    objective = Objective(cfg.variant, content, n, cfg.gamma)

    log = TrainingLog(n_triplets=len(triplets), n_negative_fallbacks=n_fallback)
    log.losses.append(objective.loss(params, triplets) / len(triplets))
    log.seconds.append(time.perf_counter() - started)

    state = AdamState()
    named = {"theta": params.theta}
    if phi is not None:
        named.update(phi.as_dict())
    shuffle_rng = derive_rng(cfg.seed, "shuffle")
    bs = cfg.batch_size
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(triplets))
        total = 0.0
        for i in range(0, len(order), bs):
            batch = triplets[order[i : i + bs]]
            loss, rows, row_grads, phi_grads = objective.batch(params, batch)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss in epoch {epoch}")
            total += loss
            scale = 1.0 / len(batch)
            grads = {"theta": SparseRows(rows, row_grads * scale)}
            if phi_grads is not None:
                grads.update({k: v * scale for k, v in phi_grads.items()})
            adam_step(named, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
        mean = total / len(triplets)
        prev = log.losses[-1]
        log.losses.append(mean)
        log.seconds.append(time.perf_counter() - started)
        logger.info("epoch %d loss %.6f", epoch, mean)
        if epoch > 1 and math.isfinite(cfg.tol):
            if abs(prev - mean) / max(prev, 1e-12) < cfg.tol:
                log.converged = True
                break

    content_E = None
    if cfg.uses_text:
        encoder = GruEncoder(phi, words, cfg.t_max)
        content_E = encoder.encode_many([g.content(int(v)) for v in np.flatnonzero(content_mask)])
    config = {"train": asdict(cfg), "walk": asdict(walk_cfg), "t_max": cfg.t_max}
    config["walk"]["schemes"] = list(walk_cfg.schemes)
    return TrainedModel(
        cfg.variant,
        g.labels,
        g.types,
        g.schema,
        content_mask,
        params,
        words=words if cfg.uses_text else None,
        content_E=content_E,
        noise_counts=noise.counts.astype(np.int64),
        config=config,
        log=log,
    )
