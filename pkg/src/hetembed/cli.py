"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
Set ``HETEMBED_LOG`` (e.g. ``INFO`` or ``DEBUG``) for progress output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .evaluation import (
    build_ranking_queries,
    copath_pairs,
    export_projector_tsv,
    hit_ratio_at_k,
    link_prediction,
    load_events,
    recall_at_k,
    top_k_relevant,
    write_report,
)
from .exceptions import ConfigError, HetEmbedError, NumericalError
from .graph import apply_delta, load_graph, read_tsv
from .online import FrozenModel, update_delta
from .synth import generate, write_fixture
from .textenc import load_word_vectors
from .trainer import TrainedModel, train

logger = logging.getLogger("hetembed")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _add_graph_args(p):
    p.add_argument("--nodes", help="nodes TSV (label, type)")
    p.add_argument("--edges", help="edges TSV (src, relation, dst)")
    p.add_argument("--content", help="content TSV (label, text)")
    p.add_argument("--schema", help="schema TSV; default author/paper/venue")


def build_parser():
    parser = argparse.ArgumentParser(prog="hetembed", description="Content-aware heterogeneous network embedding.")
    parser.add_argument("--config", help="sectioned key=value config file; flags override it")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--workers", type=int, help="walk-generation processes")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress (same as HETEMBED_LOG=INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn embeddings for a graph")
    _add_graph_args(p)
    p.add_argument("--words", help="word vector file (required unless --variant hsg)")
    p.add_argument("--model", help="output model file")
    p.add_argument("--log", help="per-epoch loss CSV (default: <model>.log.csv)")
    p.add_argument("--variant", choices=["hsg", "hsg-sr", "se-hsg"])
    p.add_argument("--d", "--dim", dest="dim", type=int)
    p.add_argument("--tau", "--window", dest="window", type=int)
    p.add_argument("--walks", dest="walks_per_node", type=int, help="walks per start node")
    p.add_argument("--len", dest="walk_length", type=int, help="walk length")
    p.add_argument("--mode", choices=["metapath", "random"])
    p.add_argument("--schemes", help="comma-separated meta-path schemes, e.g. APA,APPA,APVPA")
    p.add_argument("--negatives", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", dest="max_epochs", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--t-max", type=int)

    p = sub.add_parser("update", help="add vectors for nodes arriving after training")
    _add_graph_args(p)
    p.add_argument("--model", help="trained model file")
    p.add_argument("--delta", help="directory with nodes.tsv, edges.tsv and optional content.tsv")
    p.add_argument("--out", help="embeddings file to write (trained vectors followed by new ones)")
    p.add_argument("--walks", dest="n_walks", type=int, help="rooted walks per new node")
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--schemes", help="online schemes, one per new-node type")

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("task", choices=["linkpred", "retrieval", "recommend", "search"])
    _add_graph_args(p)
    p.add_argument("--model")
    p.add_argument("--events", help="event TSV of label pairs after the split time")
    p.add_argument("--k", help="comma-separated cutoffs (default 5,10)")
    p.add_argument("--n-negatives", type=int, default=100, help="negatives per retrieval query")
    p.add_argument("--share-negatives", action="store_true", help="use one negative list for all queries")
    p.add_argument("--query", help="search query label")
    p.add_argument("--type", dest="target_type", help="search result node type")
    p.add_argument("--out", help="metric CSV (default: stdout)")

    p = sub.add_parser("search", help="top-k most similar nodes of a type")
    p.add_argument("--model")
    p.add_argument("--query", required=True)
    p.add_argument("--type", dest="target_type", required=True)
    p.add_argument("--k", type=int, default=5)

    p = sub.add_parser("synth", help="write a synthetic fixture")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--communities", dest="n_communities", type=int)
    p.add_argument("--authors", type=int, help="authors per community")
    p.add_argument("--papers", type=int, help="papers per community")
    p.add_argument("--venues", type=int, help="venues per community")
    p.add_argument("--cross-prob", type=float)
    p.add_argument("--cross-prob-venue", type=float)
    p.add_argument("--cross-prob-cite", type=float)
    p.add_argument("--vocab-size", type=int, help="private words per community")
    p.add_argument("--words-per-paper", type=int)
    p.add_argument("--text-noise", type=float)
    p.add_argument("--holdout", type=float)
    p.add_argument("--new-authors", type=int)

    p = sub.add_parser("export", help="write embeddings or projector files")
    p.add_argument("--model")
    p.add_argument("--out", required=True, help="embeddings TSV, or projector vectors TSV with --metadata")
    p.add_argument("--metadata", help="projector metadata TSV (label, type, category)")
    p.add_argument("--categories", help="label<TAB>category file")
    return parser


def _load_config(args):
    cfg = RunConfig.read(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    for key in ("nodes", "edges", "content", "schema", "words", "model", "delta", "events"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.paths[key] = value
    if getattr(args, "out", None) is not None:
        cfg.paths["output"] = args.out
    return cfg


def _existing(cfg, key, required=True):
    path = cfg.path(key, required=required)
    if path and not Path(path).exists():
        raise ConfigError(f"{key} file not found: {path}")
    return path


def _load_graph(cfg):
    schema = _existing(cfg, "schema", required=False)
    return load_graph(
        _existing(cfg, "nodes"),
        _existing(cfg, "edges"),
        _existing(cfg, "content", required=False),
        schema=schema,
    )


def cmd_train(args, cfg):
    cfg.override(
        "train",
        variant=args.variant,
        dim=args.dim,
        negatives=args.negatives,
        gamma=args.gamma,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        tol=args.tol,
        t_max=args.t_max,
    )
    cfg.override(
        "walk",
        window=args.window,
        walks_per_node=args.walks_per_node,
        walk_length=args.walk_length,
        mode=args.mode,
        schemes=args.schemes,
    )
    tc, wc = cfg.train_config(), cfg.walk_config()
    model_path = cfg.path("model", required=True)
    words = None
    if tc.uses_text:
        words_path = cfg.path("words")
        if not words_path:
            raise ConfigError(f"variant {tc.variant!r} needs --words")
        _existing(cfg, "words")
    g = _load_graph(cfg)
    if tc.uses_text:
        words = load_word_vectors(words_path)
    model = train(g, tc, wc, words=words)
    model.save(model_path)
    model.log.write_csv(args.log or f"{model_path}.log.csv")
    if not model.log.converged and np.isfinite(tc.tol):
        logger.warning("stopped after %d epochs without reaching tol=%g", model.log.n_epochs, tc.tol)
    print(f"trained {model.variant} on {g.n_nodes} nodes: loss {model.log.initial_loss:.6f} -> {model.log.final_loss:.6f}")
    return EXIT_OK


def _read_delta_dir(cfg):
    delta = cfg.path("delta", required=True)
    d = Path(delta)
    if not d.is_dir():
        raise ConfigError(f"delta directory not found: {delta}")
    return d / "nodes.tsv", d / "edges.tsv", d / "content.tsv"


def cmd_update(args, cfg):
    cfg.override(
        "online",
        n_walks=args.n_walks,
        learning_rate=args.learning_rate,
        tol=args.tol,
        max_iter=args.max_iter,
        schemes=args.schemes,
    )
    oc = cfg.online_config()
    nodes_p, edges_p, content_p = _read_delta_dir(cfg)
    model = TrainedModel.load(_existing(cfg, "model"))
    g = _load_graph(cfg)
    if g.labels != model.labels:
        raise HetEmbedError("graph files do not match the nodes of the trained model")
    new = apply_delta(g, nodes_p, edges_p, content_p)
    if not new:
        print("empty delta: nothing to update")
        return EXIT_OK
    frozen, results = update_delta(g, new, model, oc, FrozenModel(model))
    out = cfg.path("output", required=True)
    model.export_embeddings(out, extra=[(g.label(v), frozen.vector(g.label(v))) for v in new])
    for label, res in results.items():
        how = "encoded" if res is None else f"{res.n_sweeps} sweeps"
        print(f"{label}\t{how}")
    return EXIT_OK


def _ks(text, default=(5, 10)):
    if not text:
        return list(default)
    try:
        ks = [int(k) for k in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"--k must be comma-separated integers, got {text!r}") from None
    if any(k < 1 for k in ks):
        raise ConfigError("--k values must be >= 1")
    return ks


def _search_rows(model, query, target_type, k):
    if target_type not in model.schema.node_types:
        raise ConfigError(f"unknown node type {target_type!r}")
    q = model.index(query)
    cand = np.flatnonzero(model.types == model.schema.type_code(target_type))
    return top_k_relevant(q, cand, model.representations(), k, model.labels)


def _print_search(rows):
    print("rank\tlabel\tscore")
    for rank, _, label, score in rows:
        print(f"{rank}\t{label}\t{score:.6f}")


def cmd_eval(args, cfg):
    model = TrainedModel.load(_existing(cfg, "model"))
    reps = model.representations()
    if args.task == "search":
        if not args.query or not args.target_type:
            raise ConfigError("search needs --query and --type")
        _print_search(_search_rows(model, args.query, args.target_type, _ks(args.k, (5,))[0]))
        return EXIT_OK
    events_path = _existing(cfg, "events")
    rows = []
    seed = cfg.seed
    types = model.schema
    if args.task == "linkpred":
        g = _load_graph(cfg)
        train_links = copath_pairs(g, "author", "paper")
        test_links = load_events(events_path, model.index)
        authors = np.flatnonzero(model.types == types.type_code("author"))
        res = link_prediction(reps, train_links, test_links, authors, seed=seed)
        for metric in ("accuracy", "f1"):
            rows.append({"task": "linkpred", "metric": metric, "value": res[metric], "n_queries": res["n_test"], "seed": seed})
    elif args.task == "retrieval":
        pairs = load_events(events_path, model.index)
        papers = np.flatnonzero(model.types == types.type_code("paper"))
        queries = build_ranking_queries(pairs, papers, args.n_negatives, seed=seed, shared=args.share_negatives)
        if not queries:
            raise HetEmbedError("no retrieval events refer to known papers")
        for k in _ks(args.k):
            n_cand = 1 + max(len(q.negatives) for q in queries)
            if k > n_cand:
                raise ConfigError(f"k={k} exceeds the {n_cand} candidates per query")
            rows.append({"task": "retrieval", "metric": "hit_ratio", "k": k, "value": hit_ratio_at_k(queries, reps, k), "n_queries": len(queries), "seed": seed})
    else:
        pairs = load_events(events_path, model.index, symmetric=False)
        truth = {}
        for a, v in pairs:
            truth.setdefault(a, set()).add(v)
        venues = np.flatnonzero(model.types == types.type_code("venue"))
        for k in _ks(args.k):
            value, n = recall_at_k(truth, reps, venues, k)
            rows.append({"task": "recommend", "metric": "recall", "k": k, "value": value, "n_queries": n, "seed": seed})
    write_report(rows, cfg.path("output") or sys.stdout)
    return EXIT_OK


def cmd_search(args, cfg):
    model = TrainedModel.load(_existing(cfg, "model"))
    _print_search(_search_rows(model, args.query, args.target_type, args.k))
    return EXIT_OK


def cmd_synth(args, cfg):
    keys = (
        "n_communities", "authors", "papers", "venues", "cross_prob", "cross_prob_venue",
        "cross_prob_cite", "vocab_size", "words_per_paper", "text_noise", "holdout", "new_authors",
    )  # fmt: skip
    cfg.override("synth", **{k: getattr(args, k) for k in keys})
    sc = cfg.synth_config()
    out = Path(cfg.path("output", required=True))
    out.mkdir(parents=True, exist_ok=True)
    data = generate(sc)
    write_fixture(data, out, sc)
    print(f"wrote {data.graph.n_nodes} nodes, {data.graph.n_edges} edges to {out}")
    return EXIT_OK


def _read_categories(path):
    return {fields[0]: fields[1] for _, fields in read_tsv(path) if len(fields) >= 2}


def cmd_export(args, cfg):
    model = TrainedModel.load(_existing(cfg, "model"))
    out = cfg.path("output", required=True)
    if args.metadata:
        cats = _read_categories(args.categories) if args.categories else None
        type_names = [model.schema.node_types[t] for t in model.types]
        export_projector_tsv(model.representations(), model.labels, out, args.metadata, type_names, cats)
    else:
        model.export_embeddings(out)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "update": cmd_update,
    "eval": cmd_eval,
    "search": cmd_search,
    "synth": cmd_synth,
    "export": cmd_export,
}


def _setup_logging(verbose):
    level = os.environ.get("HETEMBED_LOG", "INFO" if verbose else "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except NumericalError as exc:
        print(f"hetembed: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"hetembed: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HetEmbedError, OSError) as exc:
        print(f"hetembed: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
