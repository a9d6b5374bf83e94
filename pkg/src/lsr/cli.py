"""Command-line surface for the sparse retrieval pipeline.

Machine-readable results go to stdout; progress and diagnostics to stderr.
Exit codes: 0 success, 1 usage error, 2 data/config error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import evalir, synth
from .encoder import EncoderParams
from .errors import LsrError
from .index import build_index, flops_metric, read_index, write_index
from .pipeline import (
    DataPaths,
    encode_records,
    expansion_report,
    run_sweep,
    train_from_files,
)
from .reps import read_reps, write_reps
from .retrieval import batch_search, write_run
from .textpipe import Vocabulary, build_vocab, load_corpus, load_queries
from .trainer import TrainConfig, config_from_dict, parse_config_file, write_history_csv


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _load_train_config(args) -> TrainConfig:
    raw = parse_config_file(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    config = config_from_dict(raw)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _add_common(sub) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    sub.add_argument("--seed", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="lsr", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("build-vocab", help="build a vocabulary from TSV corpora")
    _add_common(p)
    p.add_argument("--corpus", action="append", required=True,
                   help="corpus/queries TSV (repeatable)")
    p.add_argument("--max-size", type=int, default=4096)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--out", required=True)

    p = subs.add_parser("gen-synth", help="generate a synthetic synonym corpus")
    _add_common(p)
    p.add_argument("--n-docs", type=int, default=2000)
    p.add_argument("--n-queries", type=int, default=250)
    p.add_argument("--n-topics", type=int, default=200)
    p.add_argument("--vocab-terms", type=int, default=1600)
    p.add_argument("--synonym-ratio", type=float, default=1.0)
    p.add_argument("--doc-len", type=int, default=12)
    p.add_argument("--query-len", type=int, default=3)
    p.add_argument("--query-topics", type=int, default=0,
                   help="restrict queries to this many topics (0 = all)")
    p.add_argument("--out", required=True, help="output directory")

    p = subs.add_parser("train", help="train an encoder")
    _add_common(p)
    for flag in ("--corpus", "--queries", "--triples", "--qrels", "--vocab"):
        p.add_argument(flag, required=True)
    p.add_argument("--out", required=True, help="checkpoint path")

    p = subs.add_parser("encode", help="encode a TSV file into a rep cache")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True, help="doc_id<TAB>text TSV")
    p.add_argument("--out", required=True)

    p = subs.add_parser("index", help="build an inverted index from a rep cache")
    _add_common(p)
    p.add_argument("--reps", required=True)
    p.add_argument("--out", required=True)

    p = subs.add_parser("search", help="top-k retrieval to a TREC run file")
    _add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--query-reps", help="encoded query cache (SPLR)")
    p.add_argument("--queries", help="query TSV (needs --checkpoint/--vocab)")
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--run-tag", default="lsr")
    p.add_argument("--out", required=True)

    p = subs.add_parser("evaluate", help="score a run file against qrels")
    _add_common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default="mrr@10,recall@1000,ndcg@10")
    p.add_argument("--min-grade", type=int, default=1,
                   help="binarization threshold for MRR/recall")
    p.add_argument("--out", help="per-query CSV report")

    p = subs.add_parser("flops", help="empirical FLOPS metric of index + queries")
    _add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--query-reps", required=True)

    p = subs.add_parser("sweep", help="train/evaluate across lambda pairs")
    _add_common(p)
    for flag in ("--corpus", "--queries", "--triples", "--qrels", "--vocab"):
        p.add_argument(flag, required=True)
    p.add_argument("--eval-queries", help="held-out query TSV (default: --queries)")
    p.add_argument("--pairs", required=True,
                   help="comma-separated lambda_q:lambda_d pairs")
    p.add_argument("--recall-k", type=int, default=10)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", required=True, help="result CSV")

    p = subs.add_parser("inspect", help="show re-weighting/expansion for a text")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--text", required=True)
    return parser


def _cmd_build_vocab(args) -> int:
    def records():
        for path in args.corpus:
            yield from load_queries(path)

    vocab = build_vocab(records(), args.max_size, args.min_freq)
    vocab.save(args.out)
    _log(f"wrote vocabulary of {len(vocab)} terms to {args.out}")
    return 0


def _cmd_gen_synth(args) -> int:
    spec = synth.SynthSpec(
        seed=args.seed if args.seed is not None else 0,
        n_docs=args.n_docs,
        n_queries=args.n_queries,
        n_topics=args.n_topics,
        vocab_terms=args.vocab_terms,
        synonym_ratio=args.synonym_ratio,
        doc_len=args.doc_len,
        query_len=args.query_len,
        query_topics=args.query_topics,
    )
    paths = synth.write_files(synth.generate(spec), args.out)
    for name, path in paths.items():
        _log(f"wrote {name}: {path}")
    return 0


def _cmd_train(args) -> int:
    config = _load_train_config(args)
    paths = DataPaths(
        corpus=Path(args.corpus), queries=Path(args.queries),
        triples=Path(args.triples), qrels=Path(args.qrels),
        vocab=Path(args.vocab),
    )
    result = train_from_files(paths, config, log=_log)
    result.params.save(args.out)
    write_history_csv(result.history, str(args.out) + ".history.csv")
    _log(f"best checkpoint: step {result.best_step}, MRR@10 {result.best_mrr:.4f}")
    print(f"{result.best_mrr:.6f}")
    return 0


def _cmd_encode(args) -> int:
    params = EncoderParams.load(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    records = list(load_corpus(args.input))
    reps = encode_records(records, params, vocab)
    write_reps(args.out, len(vocab), reps)
    _log(f"encoded {len(reps)} items to {args.out}")
    return 0


def _cmd_index(args) -> int:
    vocab_size, items = read_reps(args.reps)
    idx = build_index(items, vocab_size=vocab_size)
    write_index(idx, args.out)
    _log(f"indexed {idx.doc_count} docs, {len(idx.postings)} posting lists")
    return 0


def _cmd_search(args) -> int:
    idx = read_index(args.index)
    if args.query_reps:
        _, queries = read_reps(args.query_reps)
    elif args.queries and args.checkpoint and args.vocab:
        params = EncoderParams.load(args.checkpoint)
        vocab = Vocabulary.load(args.vocab)
        queries = encode_records(list(load_queries(args.queries)), params, vocab)
    else:
        raise UsageError("need --query-reps or --queries with --checkpoint/--vocab")
    results = batch_search(idx, queries, args.k, run_tag=args.run_tag)
    write_run(results, args.out, run_tag=args.run_tag)
    _log(f"wrote run for {len(results)} queries to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    run = evalir.load_run(args.run)
    qrels = evalir.load_qrels(args.qrels)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    reports = evalir.evaluate_run(run, qrels, metrics, min_grade=args.min_grade)
    if args.out:
        evalir.write_report_csv(reports, args.out)
    for spec, report in reports.items():
        print(f"{spec},{report.mean:.6f}")
        if report.excluded:
            _log(f"{spec}: {len(report.excluded)} queries excluded from the mean")
        if report.missing:
            _log(f"{spec}: {len(report.missing)} qrels queries missing from run")
    return 0


def _cmd_flops(args) -> int:
    idx = read_index(args.index)
    _, queries = read_reps(args.query_reps)
    print(f"{flops_metric([rep for _, rep in queries], idx):.6f}")
    return 0


def _parse_pairs(text: str) -> list[tuple[float, float]]:
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise UsageError(f"--pairs expects lambda_q:lambda_d, got {chunk!r}")
        lq, ld = chunk.split(":", 1)
        try:
            pairs.append((float(lq), float(ld)))
        except ValueError as exc:
            raise UsageError(f"bad lambda pair {chunk!r}") from exc
    if not pairs:
        raise UsageError("--pairs is empty")
    return pairs


def _cmd_sweep(args) -> int:
    config = _load_train_config(args)
    paths = DataPaths(
        corpus=Path(args.corpus), queries=Path(args.queries),
        triples=Path(args.triples), qrels=Path(args.qrels),
        vocab=Path(args.vocab),
    )
    pairs = _parse_pairs(args.pairs)
    header = "lambda_q,lambda_d,reg_kind,mrr10,recall@{k},flops".format(k=args.recall_k)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        fh.flush()

        def on_row(row):
            line = (
                f"{row.lambda_q:g},{row.lambda_d:g},{row.reg_kind},"
                f"{row.mrr10:.6f},{row.recall:.6f},{row.flops:.6f}"
            )
            fh.write(line + "\n")
            fh.flush()  # partial results survive a failed later pair
            print(line)

        run_sweep(
            paths, config, pairs,
            eval_queries_path=Path(args.eval_queries) if args.eval_queries else None,
            recall_k=args.recall_k,
            parallel=args.parallel,
            on_row=on_row,
            log=_log,
        )
    return 0


def _cmd_inspect(args) -> int:
    params = EncoderParams.load(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    print(expansion_report(params, vocab, args.text))
    return 0


_COMMANDS = {
    "build-vocab": _cmd_build_vocab,
    "gen-synth": _cmd_gen_synth,
    "train": _cmd_train,
    "encode": _cmd_encode,
    "index": _cmd_index,
    "search": _cmd_search,
    "evaluate": _cmd_evaluate,
    "flops": _cmd_flops,
    "sweep": _cmd_sweep,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (LsrError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
