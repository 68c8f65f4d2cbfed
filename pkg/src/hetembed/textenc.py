"""Tokenizer, word-vector table and the GRU mean-pooling text encoder.

The cell is

    z_t = sigmoid(A_z x_t + B_z h_{t-1})
    r_t = sigmoid(A_r x_t + B_r h_{t-1})
    g_t = tanh(A_h x_t + B_h (r_t * h_{t-1}))
    h_t = z_t * h_{t-1} + (1 - z_t) * g_t

with ``h_0 = 0``, no biases, and the encoding is the mean of ``h_1..h_n``
over the actual sequence length. Backward passes are written out by hand.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import EncoderError

logger = logging.getLogger(__name__)

__all__ = [
    "tokenize",
    "WordTable",
    "load_word_vectors",
    "GruParams",
    "GateCache",
    "ForwardCache",
    "gru_cell",
    "encode_forward",
    "encode_backward",
    "BatchCache",
    "encode_batch",
    "encode_batch_backward",
    "GruEncoder",
]

PARAM_NAMES = ("A_z", "B_z", "A_r", "B_r", "A_h", "B_h")

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text, t_max=None):
    """Lower-case, split on non-alphanumeric runs, keep at most ``t_max`` tokens."""
    tokens = _TOKEN.findall(text.lower()) if text else []
    return tokens[:t_max] if t_max is not None else tokens


class WordTable:
    """Frozen word vectors; unknown tokens map to the mean vector."""

    def __init__(self, tokens, vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise EncoderError("word table needs one row per token")
        if vectors.shape[0] == 0:
            raise EncoderError("word table is empty")
        vocab = {}
        for i, tok in enumerate(tokens):
            if tok in vocab:
                raise EncoderError(f"duplicate token {tok!r} in word table")
            vocab[tok] = i
        self.tokens = list(tokens)
        self.vocab = vocab
        self.vectors = vectors
        self.oov = vectors.mean(axis=0)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.vocab

    def vector(self, token):
        i = self.vocab.get(token)
        return self.oov if i is None else self.vectors[i]

    def lookup(self, tokens):
        """``(len(tokens), dim)`` matrix of vectors."""
        out = np.empty((len(tokens), self.dim))
        for j, tok in enumerate(tokens):
            out[j] = self.vector(tok)
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.tokens)} {self.dim}\n")
            for tok, vec in zip(self.tokens, self.vectors):
                fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_word_vectors(path):
    """Read a text word2vec file: header ``vocab_size dim``, then ``token v1 .. vdim`` rows."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EncoderError(f"{path}: first line must be 'vocab_size dim'")
        n, dim = int(header[0]), int(header[1])
        tokens, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if len(parts) != dim + 1:
                raise EncoderError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            tokens.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(tokens) != n:
        logger.warning("%s: header announces %d tokens, file has %d", path, n, len(tokens))
    try:
        return WordTable(tokens, np.array(rows).reshape(len(rows), dim))
    except EncoderError as exc:
        raise EncoderError(f"{path}: {exc}") from None


@dataclass
class GruParams:
    """GRU matrices; ``A_*`` are ``(d, d_w)`` input weights, ``B_*`` are ``(d, d)`` recurrent weights."""

    A_z: np.ndarray
    B_z: np.ndarray
    A_r: np.ndarray
    B_r: np.ndarray
    A_h: np.ndarray
    B_h: np.ndarray

    def __post_init__(self):
        d, d_w = self.A_z.shape
        for name in PARAM_NAMES:
            shape = getattr(self, name).shape
            want = (d, d_w) if name.startswith("A") else (d, d)
            if shape != want:
                raise EncoderError(f"{name} has shape {shape}, expected {want}")

    @classmethod
    def init(cls, d, d_w, rng):
        """Entries uniform in ``(-1/sqrt(d), 1/sqrt(d))``."""
        bound = 1.0 / np.sqrt(d)
        mats = {}
        for name in PARAM_NAMES:
            shape = (d, d_w) if name.startswith("A") else (d, d)
            mats[name] = rng.uniform(-bound, bound, size=shape)
        return cls(**mats)

    @classmethod
    def zeros(cls, d, d_w):
        return cls(**{n: np.zeros((d, d_w) if n.startswith("A") else (d, d)) for n in PARAM_NAMES})

    @property
    def hidden_size(self):
        return self.A_z.shape[0]

    @property
    def input_size(self):
        return self.A_z.shape[1]

    @property
    def size(self):
        d, d_w = self.A_z.shape
        return 3 * d * d_w + 3 * d * d

    def as_dict(self):
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def copy(self):
        return GruParams(**{n: m.copy() for n, m in self.as_dict().items()})


@dataclass
class GateCache:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_hat: np.ndarray


@dataclass
class ForwardCache:
    """Per-step activations of one sequence; ``steps[t]`` belongs to ``h_{t+1}``."""

    steps: list
    hidden_size: int
    input_size: int

    @property
    def length(self):
        return len(self.steps)


def gru_cell(x, h_prev, params):
    """One GRU step; returns ``(h_t, GateCache)``."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape != (params.input_size,) or h_prev.shape != (params.hidden_size,):
        raise EncoderError(
            f"gru_cell got x{x.shape}, h{h_prev.shape}; "
            f"params expect x({params.input_size},), h({params.hidden_size},)"
        )
    z = expit(params.A_z @ x + params.B_z @ h_prev)
    r = expit(params.A_r @ x + params.B_r @ h_prev)
    h_hat = np.tanh(params.A_h @ x + params.B_h @ (r * h_prev))
    h = z * h_prev + (1.0 - z) * h_hat
    return h, GateCache(x, h_prev, z, r, h_hat)


def encode_forward(params, X):
    """Mean-pooled GRU encoding of word vectors ``X`` of shape ``(n, d_w)``.

    An empty sequence encodes to the zero vector.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, params.input_size)
    h = np.zeros(params.hidden_size)
    total = np.zeros(params.hidden_size)
    steps = []
    for x in X:
        h, gates = gru_cell(x, h, params)
        total += h
        steps.append(gates)
    cache = ForwardCache(steps, params.hidden_size, params.input_size)
    if not steps:
        return total, cache
    return total / len(steps), cache


def encode_backward(cache, params, dE, input_grad=False):
    """Gradients of a scalar loss w.r.t. every GRU matrix, given ``dE = dL/dE``.

    Returns a dict keyed by parameter name; with ``input_grad`` it also
    carries ``"x"``, the ``(n, d_w)`` gradient w.r.t. the word vectors.
    """
    if (cache.hidden_size, cache.input_size) != (params.hidden_size, params.input_size):
        raise EncoderError("forward cache does not match parameter shapes")
    dE = np.asarray(dE, dtype=np.float64)
    grads = {n: np.zeros_like(m) for n, m in params.as_dict().items()}
    n = cache.length
    dX = np.zeros((n, params.input_size))
    if n == 0:
        if input_grad:
            grads["x"] = dX
        return grads
    pooled = dE / n
    dh = np.zeros(params.hidden_size)
    for t in range(n - 1, -1, -1):
        s = cache.steps[t]
        dh = dh + pooled
        dz = dh * (s.h_prev - s.h_hat)
        da_z = dz * s.z * (1.0 - s.z)
        da_h = dh * (1.0 - s.z) * (1.0 - s.h_hat**2)
        rh = s.r * s.h_prev
        d_rh = params.B_h.T @ da_h
        da_r = d_rh * s.h_prev * s.r * (1.0 - s.r)
        grads["A_z"] += np.outer(da_z, s.x)
        grads["B_z"] += np.outer(da_z, s.h_prev)
        grads["A_r"] += np.outer(da_r, s.x)
        grads["B_r"] += np.outer(da_r, s.h_prev)
        grads["A_h"] += np.outer(da_h, s.x)
        grads["B_h"] += np.outer(da_h, rh)
        if input_grad:
            dX[t] = params.A_z.T @ da_z + params.A_r.T @ da_r + params.A_h.T @ da_h
        dh = dh * s.z + d_rh * s.r + params.B_z.T @ da_z + params.B_r.T @ da_r
    if input_grad:
        grads["x"] = dX
    return grads


@dataclass
class BatchCache:
    X: np.ndarray  # (T, B, d_w), zero padded
    mask: np.ndarray  # (T, B, 1)
    H_prev: np.ndarray  # (T, B, d)
    Z: np.ndarray
    R: np.ndarray
    G: np.ndarray
    lengths: np.ndarray  # (B,)


def encode_batch(params, sequences):
    """Encode several word-vector sequences at once; returns ``(E, BatchCache)``.

    ``E`` has shape ``(len(sequences), d)`` and matches :func:`encode_forward`
    row by row. Padding steps leave the hidden state untouched.
    """
    B = len(sequences)
    d, d_w = params.hidden_size, params.input_size
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    T = int(lengths.max()) if B else 0
    X = np.zeros((T, B, d_w))
    for b, seq in enumerate(sequences):
        if len(seq):
            X[: len(seq), b] = seq
    mask = (np.arange(T)[:, None] < lengths[None, :])[:, :, None]
    XA_z = X @ params.A_z.T
    XA_r = X @ params.A_r.T
    XA_h = X @ params.A_h.T
    H_prev = np.empty((T, B, d))
    Z = np.empty((T, B, d))
    R = np.empty((T, B, d))
    G = np.empty((T, B, d))
    h = np.zeros((B, d))
    total = np.zeros((B, d))
    for t in range(T):
        H_prev[t] = h
        Z[t] = z = expit(XA_z[t] + h @ params.B_z.T)
        R[t] = r = expit(XA_r[t] + h @ params.B_r.T)
        G[t] = g = np.tanh(XA_h[t] + (r * h) @ params.B_h.T)
        h_new = z * h + (1.0 - z) * g
        h = np.where(mask[t], h_new, h)
        total += mask[t] * h
    E = total / np.maximum(lengths, 1)[:, None]
    return E, BatchCache(X, mask, H_prev, Z, R, G, lengths)


def encode_batch_backward(cache, params, dE):
    """Summed parameter gradients for a batch, given ``dE`` of shape ``(B, d)``."""
    T = cache.X.shape[0]
    B = len(cache.lengths)
    dE = np.asarray(dE, dtype=np.float64).reshape(B, params.hidden_size)
    pooled = dE / np.maximum(cache.lengths, 1)[:, None]
    dA_z = np.empty_like(cache.Z)
    dA_r = np.empty_like(cache.Z)
    dA_h = np.empty_like(cache.Z)
    dh = np.zeros_like(pooled)
    for t in range(T - 1, -1, -1):
        m = cache.mask[t]
        h_prev, z, r, g = cache.H_prev[t], cache.Z[t], cache.R[t], cache.G[t]
        dh = dh + m * pooled
        dh_step = m * dh
        da_z = dh_step * (h_prev - g) * z * (1.0 - z)
        da_h = dh_step * (1.0 - z) * (1.0 - g * g)
        d_rh = da_h @ params.B_h
        da_r = d_rh * h_prev * r * (1.0 - r)
        dA_z[t], dA_r[t], dA_h[t] = da_z, da_r, da_h
        dh = (1.0 - m) * dh + dh_step * z + d_rh * r + da_z @ params.B_z + da_r @ params.B_r
    X, H_prev, RH = cache.X, cache.H_prev, cache.R * cache.H_prev
    return {
        "A_z": np.einsum("tbi,tbj->ij", dA_z, X),
        "B_z": np.einsum("tbi,tbj->ij", dA_z, H_prev),
        "A_r": np.einsum("tbi,tbj->ij", dA_r, X),
        "B_r": np.einsum("tbi,tbj->ij", dA_r, H_prev),
        "A_h": np.einsum("tbi,tbj->ij", dA_h, X),
        "B_h": np.einsum("tbi,tbj->ij", dA_h, RH),
    }


class GruEncoder:
    """Text to vector: tokenize, look up word vectors, run the GRU, mean-pool.

    Parameters
    ----------
    params : GruParams
    words : WordTable
        Frozen word vectors; ``words.dim`` must equal ``params.input_size``.
    t_max : int
        Maximum number of tokens kept per text.
    """

    def __init__(self, params, words, t_max=100):
        if words.dim != params.input_size:
            raise EncoderError(f"word vectors have dim {words.dim}, GRU expects {params.input_size}")
        if t_max < 1:
            raise EncoderError("t_max must be >= 1")
        self.params = params
        self.words = words
        self.t_max = t_max

    @property
    def dim(self):
        return self.params.hidden_size

    def word_matrix(self, text):
        return self.words.lookup(tokenize(text, self.t_max))

    def encode(self, text):
        """Returns ``(E, empty)``; ``empty`` flags text without tokens (E is then zero)."""
        X = self.word_matrix(text or "")
        if len(X) == 0:
            logger.warning("empty text; using zero encoding")
            return np.zeros(self.dim), True
        E, _ = encode_forward(self.params, X)
        return E, False

    def encode_many(self, texts):
        """``(len(texts), d)`` encodings via the batched forward pass."""
        if not texts:
            return np.zeros((0, self.dim))
        E, _ = encode_batch(self.params, [self.word_matrix(t or "") for t in texts])
        return E
