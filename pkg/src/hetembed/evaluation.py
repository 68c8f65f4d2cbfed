"""Link prediction, retrieval, recommendation and relevance search over embeddings.

Every metric reads a ``(n_nodes, d)`` representation matrix and never
modifies it. Similarity is cosine; a zero-norm vector scores ``-inf`` against
everything. Ties in any ranking go to the lower node index.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from ._random import derive_rng
from .exceptions import HetEmbedError
from .graph import read_tsv

logger = logging.getLogger(__name__)

__all__ = [
    "cosine_scores",
    "link_features",
    "LogisticRegressionGD",
    "accuracy_f1",
    "copath_pairs",
    "sample_non_links",
    "link_prediction",
    "RankingQuery",
    "build_ranking_queries",
    "hit_ratio_at_k",
    "recall_at_k",
    "top_k_relevant",
    "export_projector_tsv",
    "read_projector_tsv",
    "load_events",
    "write_report",
]


def cosine_scores(query, candidates):
    """Cosine of ``query`` against each row of ``candidates``; ``-inf`` where either norm is zero."""
    query = np.asarray(query, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.float64)
    qn = np.linalg.norm(query)
    cn = np.linalg.norm(candidates, axis=-1)
    out = np.full(cn.shape, -np.inf)
    ok = cn > 0
    if qn > 0:
        out[ok] = (candidates[ok] @ query) / (cn[ok] * qn)
    return out


def _rank_order(scores, index):
    """Indices sorting by descending score, ties by ascending ``index``."""
    return np.lexsort((index, -scores))


def link_features(u, v, reps):
    """Hadamard product of the two end-node vectors; ``u`` and ``v`` may be index arrays."""
    reps = np.asarray(reps)
    try:
        return reps[u] * reps[v]
    except IndexError:
        raise HetEmbedError("link endpoint has no representation") from None


class LogisticRegressionGD(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fit by accelerated full-batch gradient descent.

    Minimizes ``mean(logloss) + l2 / 2 * |w|^2`` (intercept unpenalized) until
    the gradient norm falls below ``tol`` or ``max_iter`` iterations pass.

    Parameters
    ----------
    l2 : float, default=1e-4
    tol : float, default=1e-6
    max_iter : int, default=100000
    """

    def __init__(self, l2=1e-4, tol=1e-6, max_iter=100000):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {len(self.classes_)}")
        t = (y == self.classes_[1]).astype(np.float64)
        n, d = X.shape
        Xa = np.hstack([X, np.ones((n, 1))])
        reg = np.full(d + 1, self.l2)
        reg[-1] = 0.0
        lipschitz = np.linalg.norm(Xa, 2) ** 2 / (4.0 * n) + self.l2
        step = 1.0 / lipschitz

        def grad(w):
            return Xa.T @ (expit(Xa @ w) - t) / n + reg * w

        def objective(w):
            z = Xa @ w
            return np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * np.sum(reg * w * w)

        w = np.zeros(d + 1)
        y_k, momentum = w.copy(), 1.0
        f_prev = objective(w)
        it = 0
        for it in range(1, self.max_iter + 1):
            w_next = y_k - step * grad(y_k)
            f_next = objective(w_next)
            if f_next > f_prev:  # adaptive restart keeps the iteration monotone
                momentum = 1.0
                w_next = w - step * grad(w)
                f_next = objective(w_next)
            m_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum * momentum))
            y_k = w_next + ((momentum - 1.0) / m_next) * (w_next - w)
            w, momentum, f_prev = w_next, m_next, f_next
            if np.linalg.norm(grad(w)) < self.tol:
                break
        self.coef_ = w[:-1].reshape(1, -1)
        self.intercept_ = np.array([w[-1]])
        self.n_iter_ = it
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_[0] + self.intercept_[0]

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


def accuracy_f1(pred, labels):
    """Accuracy and F1 with class 1 as the positive (link) class."""
    pred = np.asarray(pred).astype(int)
    labels = np.asarray(labels).astype(int)
    if len(pred) != len(labels) or len(pred) == 0:
        raise HetEmbedError("predictions and labels must be non-empty and equally long")
    acc = float(np.mean(pred == labels))
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    f1 = 2.0 * tp / (2 * tp + fp + fn) if tp else 0.0
    return acc, f1


def copath_pairs(g, end_type, middle_type):
    """Unordered pairs of ``end_type`` nodes sharing a ``middle_type`` neighbor (e.g. co-authors)."""
    end = g.schema.type_code(end_type)
    pairs = set()
    for m in g.nodes_of_type(middle_type):
        ends = g.neighbors_of_type(int(m), end)
        for i, a in enumerate(ends):
            for b in ends[i + 1 :]:
                pairs.add((int(a), int(b)))
    return sorted(pairs)


def sample_non_links(nodes, n, exclude, rng):
    """``n`` distinct unordered pairs over ``nodes`` avoiding self-pairs and ``exclude``."""
    nodes = np.asarray(nodes)
    exclude = {(min(a, b), max(a, b)) for a, b in exclude}
    max_pairs = len(nodes) * (len(nodes) - 1) // 2 - len(exclude)
    if n > max_pairs:
        raise HetEmbedError(f"cannot draw {n} non-links from {len(nodes)} nodes")
    out = []
    seen = set(exclude)
    while len(out) < n:
        a, b = rng.choice(nodes, 2, replace=False)
        key = (int(min(a, b)), int(max(a, b)))
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


def link_prediction(reps, train_links, test_links, nodes, seed=0, classifier=None):
    """Train on known links plus as many random non-links, test on new links plus as many non-links.

    Returns a dict with ``accuracy``, ``f1``, ``n_train`` and ``n_test``.
    """
    if not train_links or not test_links:
        raise HetEmbedError("link prediction needs both training and evaluation links")
    rng = derive_rng(seed, "linkpred")
    train_neg = sample_non_links(nodes, len(train_links), train_links, rng)
    test_neg = sample_non_links(nodes, len(test_links), list(train_links) + list(test_links), rng)

    def features(pos, neg):
        pairs = np.array(list(pos) + list(neg))
        y = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
        return link_features(pairs[:, 0], pairs[:, 1], reps), y

    X_tr, y_tr = features(train_links, train_neg)
    X_te, y_te = features(test_links, test_neg)
    clf = classifier if classifier is not None else LogisticRegressionGD()
    clf.fit(X_tr, y_tr)
    acc, f1 = accuracy_f1(clf.predict(X_te), y_te)
    return {"accuracy": acc, "f1": f1, "n_train": len(y_tr), "n_test": len(y_te)}


@dataclass
class RankingQuery:
    query: int
    positive: int
    negatives: np.ndarray


def build_ranking_queries(pairs, candidates, n_negatives=100, seed=0, symmetric=True, shared=False):
    """One query per (query, positive) event; negatives drawn uniformly from ``candidates``.

    Negatives exclude the query and every known positive of that query. With
    ``symmetric`` each pair ``(a, b)`` yields queries in both directions.
    With ``shared`` all queries draw from one fixed candidate permutation.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    directed = list(pairs) + ([(b, a) for a, b in pairs] if symmetric else [])
    positives = {}
    for a, b in directed:
        positives.setdefault(int(a), set()).add(int(b))
    shared_order = derive_rng(seed, "negatives-shared").permutation(candidates) if shared else None
    queries = []
    for i, (a, b) in enumerate(directed):
        banned = positives[int(a)] | {int(a)}
        if shared:
            pool = [c for c in shared_order if c not in banned][:n_negatives]
            negs = np.array(pool, dtype=np.int64)
        else:
            pool = candidates[~np.isin(candidates, list(banned))]
            rng = derive_rng(seed, "query", i)
            negs = rng.choice(pool, min(n_negatives, len(pool)), replace=False)
        queries.append(RankingQuery(int(a), int(b), np.asarray(negs, dtype=np.int64)))
    return queries


def _positive_rank(reps, q):
    cand = np.r_[q.positive, q.negatives]
    scores = cosine_scores(reps[q.query], reps[cand])
    order = _rank_order(scores, cand)
    return int(np.flatnonzero(order == 0)[0]) + 1


def hit_ratio_at_k(queries, reps, k):
    """Fraction of queries whose positive ranks within the top ``k`` of positive + negatives."""
    if not queries:
        raise HetEmbedError("no ranking queries")
    n_cand = 1 + max(len(q.negatives) for q in queries)
    if not 1 <= k <= n_cand:
        raise HetEmbedError(f"k={k} must lie in [1, {n_cand}] (1 positive + negatives)")
    return float(np.mean([_positive_rank(reps, q) <= k for q in queries]))


def recall_at_k(truth, reps, candidates, k):
    """Mean over queries of ``|top-k ∩ truth| / |truth|``; queries with empty truth are skipped.

    ``truth`` maps a query node to the set of relevant candidate nodes.
    Returns ``(recall, n_queries)``.
    """
    if k < 1:
        raise HetEmbedError("k must be >= 1")
    candidates = np.asarray(candidates, dtype=np.int64)
    values = []
    for q, rel in truth.items():
        rel = set(int(x) for x in rel)
        if not rel:
            continue
        scores = cosine_scores(reps[q], reps[candidates])
        top = candidates[_rank_order(scores, candidates)[:k]]
        values.append(len(rel & set(top.tolist())) / len(rel))
    if not values:
        raise HetEmbedError("no query with non-empty ground truth")
    return float(np.mean(values)), len(values)


def top_k_relevant(query, candidates, reps, k, labels=None):
    """Top-``k`` candidates by cosine to ``query`` (the query itself excluded).

    Returns a list of ``(rank, node, label, score)`` tuples.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    candidates = candidates[candidates != query]
    scores = cosine_scores(reps[query], reps[candidates])
    order = _rank_order(scores, candidates)[:k]
    out = []
    for rank, i in enumerate(order, start=1):
        node = int(candidates[i])
        out.append((rank, node, labels[node] if labels is not None else str(node), float(scores[i])))
    return out


def export_projector_tsv(reps, labels, vectors_path, metadata_path, types=None, categories=None):
    """Write embedding-projector inputs: a vectors TSV and a ``label/type/category`` metadata TSV."""
    reps = np.asarray(reps, dtype=np.float64)
    with open(vectors_path, "w", encoding="utf-8") as fh:
        for row in reps:
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")
    with open(metadata_path, "w", encoding="utf-8") as fh:
        fh.write("label\ttype\tcategory\n")
        for i, label in enumerate(labels):
            t = types[i] if types is not None else ""
            c = categories.get(label, "") if categories is not None else ""
            fh.write(f"{label}\t{t}\t{c}\n")


def read_projector_tsv(vectors_path):
    with open(vectors_path, encoding="utf-8") as fh:
        return np.array([[float(x) for x in line.rstrip("\n").split("\t")] for line in fh if line.strip()])


def load_events(path, index, symmetric=True):
    """Read ``label_a<TAB>label_b`` events as index pairs.

    Events naming unknown nodes are dropped (they post-date the training
    graph); repeated events are kept once, unordered when ``symmetric``.
    """
    seen, out, dropped = set(), [], 0
    for lineno, fields in read_tsv(path):
        if len(fields) != 2:
            raise HetEmbedError(f"{path}:{lineno}: expected label_a<TAB>label_b")
        try:
            a, b = index(fields[0]), index(fields[1])
        except HetEmbedError:
            dropped += 1
            continue
        key = (min(a, b), max(a, b)) if symmetric else (a, b)
        if key not in seen:
            seen.add(key)
            out.append(key)
    if dropped:
        logger.info("%s: dropped %d events with unknown nodes", path, dropped)
    return out


def write_report(rows, dest):
    """CSV with columns task, metric, k, value, n_queries, seed; ``dest`` is a path or open file."""
    if hasattr(dest, "write"):
        _write_rows(rows, dest)
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        _write_rows(rows, fh)


def _write_rows(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["task", "metric", "k", "value", "n_queries", "seed"])
    for r in rows:
        w.writerow([r["task"], r["metric"], r.get("k", ""), repr(float(r["value"])), r["n_queries"], r["seed"]])
