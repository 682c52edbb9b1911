"""Command line entry point: ``fictionkg <subcommand> ...``.

Exit status is 0 on success, 1 on validation/domain errors (including bad
arguments) and 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import core, embedding, graph, linkpred, topics, tsne

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _header(command: str, **params) -> str:
    fields = " ".join(f"{k}={v}" for k, v in params.items())
    return f"fictionkg {__version__} {command} {fields}".rstrip()


def _read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _parse_file(path, parser):
    """Run ``parser`` on a file's text, prefixing validation errors with the path."""
    text = _read_text(path)
    try:
        return parser(text)
    except core.KGError as exc:
        raise core.KGError(f"{path}: {exc}") from None


def _write(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_archive(path) -> core.KnowledgeGraph:
    return _parse_file(path, core.load_archive)


def _triple(value: str) -> tuple[str, str, str]:
    parts = value.split(",")
    if len(parts) != 3:
        raise core.KGError(f"--triple expects s,r,o, got {value!r}")
    return tuple(core.normalize_identifier(p) for p in parts)


def _format_stats(st: dict) -> str:
    return "".join(f"{k}: {v}\n" for k, v in st.items())


def _format_fact(f: core.Fact, kg: core.KnowledgeGraph) -> str:
    extra = []
    if f.episode is not None:
        extra.append(f"episode={f.episode}")
    if f.timestamp is not None:
        extra.append(f"timestamp={f.timestamp}")
    if f.revealed_by is not None:
        extra.append(f"revealed_by={f.revealed_by}")
    if kg.is_derived(f):
        extra.append("derived")
    return "\t".join([f.subject, f.predicate, f.object] + extra)


def cmd_ingest(args) -> int:
    ontology = None
    if args.ontology:
        ontology = _parse_file(args.ontology, core.parse_ontology)
    facts = _parse_file(args.facts, core.read_facts_csv)
    mode = core.STRICT if args.strict else core.PERMISSIVE
    try:
        kg = core.build_graph(facts, ontology, mode, args.closure)
    except core.KGError as exc:
        raise core.KGError(f"{args.facts}: {exc}") from None
    if args.reify:
        core.reify_annotated(kg)
    if args.output:
        _write(core.dump_archive(kg), args.output)
    sys.stdout.write(_format_stats(core.stats(kg)))
    return EXIT_OK


def cmd_stats(args) -> int:
    sys.stdout.write(_format_stats(core.stats(_load_archive(args.archive))))
    return EXIT_OK


def cmd_reify(args) -> int:
    kg = _load_archive(args.archive)
    label = core.reify(kg, _triple(args.triple), args.occurs_at, args.revealed_by)
    _write(core.dump_archive(kg), args.output or args.archive)
    print(label)
    return EXIT_OK


def cmd_query(args) -> int:
    kg = _load_archive(args.archive)
    for f in core.query(kg, args.subject, args.predicate, args.object):
        print(_format_fact(f, kg))
    return EXIT_OK


def cmd_subgraph(args) -> int:
    kg = _load_archive(args.archive)
    sub = graph.character_subgraph(kg, args.character, subject_only=not args.either_position)
    if args.format == "dot":
        _write(graph.export_dot(sub, args.suppress_temporal, name=args.character), args.output)
    else:
        facts = sub.facts
        if args.suppress_temporal:
            facts = [f for f in facts if f.predicate != core.OCCURS_AT]
        _write("".join(_format_fact(f, sub) + "\n" for f in facts), args.output)
    return EXIT_OK


def cmd_export(args) -> int:
    kg = _load_archive(args.archive)
    if args.dot:
        text = graph.export_dot(kg, args.suppress_temporal)
    else:
        text = core.export_ntriples(kg, args.base_iri)
    _write(text, args.output)
    return EXIT_OK


def _train_config(args) -> embedding.TrainConfig:
    values = {}
    if args.config:
        values.update(_parse_file(args.config, embedding.parse_config_file))
    flags = {
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "margin": args.margin,
        "batch_size": args.batch_size,
        "negative_per_positive": args.negatives,
        "seed": args.seed,
        "loss_variant": args.loss,
        "include_derived": args.include_derived or None,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        config = embedding.TrainConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise core.KGError(f"bad training option: {exc}") from None
    config.validate()
    return config


def _config_params(dim: int, config: embedding.TrainConfig) -> dict:
    return {"dim": dim, **config.as_dict()}


def cmd_embed(args) -> int:
    kg = _load_archive(args.archive)
    config = _train_config(args)
    model = embedding.init_model(kg, args.dim, config.seed)
    model, history = embedding.train(model, kg, config)
    header = [_header("embed", **_config_params(args.dim, config)),
              f"final_mean_loss={history[-1]!r}"]
    _write(embedding.export_embedding_csv(model, header=header), args.output)
    print(f"epochs {len(history)}  final mean loss {history[-1]:.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_project(args) -> int:
    model = _parse_file(args.embedding, embedding.parse_embedding_csv)
    vectors = model.entity_vecs
    if args.include_relations:
        vectors = np.vstack([vectors, model.relation_vecs])
    points, history = tsne.tsne_project(
        vectors, args.perplexity, args.iterations, args.seed, args.learning_rate
    )
    perplexity = args.perplexity if args.perplexity is not None else tsne.default_perplexity(len(vectors))
    header = [
        _header("project", perplexity=perplexity, iterations=args.iterations,
                learning_rate=args.learning_rate, seed=args.seed,
                include_relations=args.include_relations),
        f"final_kl={history[-1][1]!r}",
    ]
    text = embedding.export_embedding_csv(
        model, points, include_relations=args.include_relations, header=header
    )
    _write(text, args.output)
    return EXIT_OK


def cmd_topics(args) -> int:
    kg = _load_archive(args.archive)
    g = graph.underlying_graph(kg, include_derived=args.include_derived)
    corpus = topics.generate_corpus(g, args.n, args.len, args.seed)
    params = dict(n=args.n, len=args.len, r=args.r, iterations=args.iterations,
                  top=args.top, seed=args.seed, include_derived=args.include_derived)
    if args.corpus_out:
        _write(f"# {_header('topics', **params)}\n" + topics.format_corpus(corpus), args.corpus_out)
    model = topics.fit_topics(corpus, args.r, args.iterations, args.seed)
    top = topics.top_terms(model, min(args.top, len(model.vocabulary)))
    cov = topics.coverage_stats(corpus, g)
    header = [_header("topics", **params),
              f"coverage={cov['coverage']!r} mean_repetition={cov['mean_repetition']!r}"]
    _write(topics.format_topics(top, header=header), args.output)
    print(f"coverage {cov['coverage']:.4f}  mean_repetition {cov['mean_repetition']:.4f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    kg = _load_archive(args.archive)
    model = _parse_file(args.model, embedding.parse_embedding_csv)
    s, r, o = _triple(args.triple)
    flag = linkpred.predict_flag(model, s, r, o, args.threshold, known=kg.asserted_facts())
    ranking = linkpred.rank_tails(model, s, r, filter_known=kg.triple_set() if args.filtered else None,
                                  target=o)
    print(f"triple     {s},{r},{o}")
    print(f"score      {flag['score']:.6f}")
    print(f"threshold  {flag['threshold']:.6f}")
    print(f"plausible  {str(flag['plausible']).lower()}")
    print(f"tail_rank  {ranking.rank_of(o)} / {len(ranking.ranked)}")
    for label, score in ranking.ranked[: args.top]:
        print(f"  {label}\t{score:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    kg = _load_archive(args.archive)
    config = _train_config(args)
    train_facts, test_facts = linkpred.split(
        kg, args.split, config.seed, require_coverage=not args.allow_unseen
    )
    train_graph = core.build_graph(train_facts, kg.ontology)
    if config.include_derived:
        core.apply_ontology_closure(train_graph)
    model = embedding.init_model(kg, args.dim, config.seed)
    model, _ = embedding.train(model, train_graph, config)
    report = linkpred.evaluate(model, test_facts, kg.triple_set(), filtered=not args.raw)
    header = [_header("eval", split=args.split, allow_unseen=args.allow_unseen,
                      filtered=not args.raw, **_config_params(args.dim, config)),
              f"train={len(train_facts)} test={len(test_facts)}"]
    if args.output:
        _write(linkpred.report_csv(report, header), args.output)
    sys.stdout.write(f"# {header[0]}\n" + linkpred.format_report(report))
    return EXIT_OK


def _add_training_flags(p) -> None:
    p.add_argument("--dim", type=int, default=200, help="embedding dimension (default 200)")
    p.add_argument("--epochs", type=int, help="training epochs (default 200)")
    p.add_argument("--lr", type=float, help="learning rate (default 0.01)")
    p.add_argument("--margin", type=float, help="hinge margin (default 1.0)")
    p.add_argument("--batch-size", type=int, help="positives per batch (default 32)")
    p.add_argument("--negatives", type=int, help="corruptions per positive (default 5)")
    p.add_argument("--loss", choices=[embedding.HINGE, embedding.PAPER_LITERAL],
                   help="loss variant (default hinge)")
    p.add_argument("--include-derived", action="store_true",
                   help="train on ontology-derived facts too")
    p.add_argument("--config", help="key=value file of training options; flags override it")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fictionkg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fictionkg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="build a graph archive from a fact CSV")
    p.add_argument("facts", help="fact CSV (subject,predicate,object,episode,timestamp,revealed_by)")
    p.add_argument("--ontology", help="ontology declaration file")
    p.add_argument("--strict", action="store_true", help="reject relations missing from the ontology")
    p.add_argument("--closure", action="store_true", help="materialize symmetric/inverse facts")
    p.add_argument("--reify", action="store_true",
                   help="reify facts with episode or revealed_by annotations")
    p.add_argument("-o", "--output", help="archive path to write")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="print entity/relation/fact counts")
    p.add_argument("archive")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("reify", help="reify one fact with time and provenance")
    p.add_argument("archive")
    p.add_argument("--triple", required=True, help="s,r,o of an existing fact")
    p.add_argument("--occurs-at", help="time token, e.g. E06")
    p.add_argument("--revealed-by", help="character who revealed the fact")
    p.add_argument("-o", "--output", help="archive to write (default: update in place)")
    p.set_defaults(func=cmd_reify)

    p = sub.add_parser("query", help="list facts matching a pattern")
    p.add_argument("archive")
    p.add_argument("--subject")
    p.add_argument("--predicate")
    p.add_argument("--object")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("subgraph", help="character subgraph")
    p.add_argument("archive")
    p.add_argument("--character", required=True)
    p.add_argument("--either-position", action="store_true",
                   help="also keep facts with the character as object")
    p.add_argument("--suppress-temporal", action="store_true", help="drop occurs_at facts")
    p.add_argument("--format", choices=["facts", "dot"], default="facts")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_subgraph)

    p = sub.add_parser("export", help="export as DOT or N-Triples")
    p.add_argument("archive")
    fmt = p.add_mutually_exclusive_group(required=True)
    fmt.add_argument("--dot", action="store_true")
    fmt.add_argument("--ntriples", action="store_true")
    p.add_argument("--base-iri", default="http://example.org/kg")
    p.add_argument("--suppress-temporal", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("embed", help="train a TransE embedding")
    p.add_argument("archive")
    _add_training_flags(p)
    p.add_argument("-o", "--output", help="embedding CSV to write")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("project", help="t-SNE projection of an embedding CSV")
    p.add_argument("embedding")
    p.add_argument("--perplexity", type=float, help="default min(30, (n-1)/3)")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=200.0)
    p.add_argument("--include-relations", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("topics", help="random-walk topic extraction")
    p.add_argument("archive")
    p.add_argument("--n", type=int, default=1000, help="number of walk documents")
    p.add_argument("--len", type=int, default=50, help="steps per walk")
    p.add_argument("--r", type=int, default=25, help="number of topics")
    p.add_argument("--iterations", type=int, default=500, help="NMF iterations")
    p.add_argument("--top", type=int, default=10, help="tokens listed per topic")
    p.add_argument("--include-derived", action="store_true")
    p.add_argument("--corpus-out", help="write the walk corpus here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("predict", help="score one triple against a trained embedding")
    p.add_argument("archive")
    p.add_argument("model", help="embedding CSV from `embed`")
    p.add_argument("--triple", required=True, help="s,r,o")
    p.add_argument("--threshold", type=float,
                   help="plausibility threshold (default: median known-fact score)")
    p.add_argument("--filtered", action="store_true", help="filter known tails from the ranking")
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="train on a split and report hits@k / MRR")
    p.add_argument("archive")
    p.add_argument("--split", type=float, default=0.9, help="train fraction (default 0.9)")
    p.add_argument("--raw", action="store_true", help="raw instead of filtered ranking")
    p.add_argument("--allow-unseen", action="store_true",
                   help="do not require test entities/relations to appear in training")
    _add_training_flags(p)
    p.add_argument("-o", "--output", help="report CSV to write")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except core.KGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
