"""Table generation over a documents CSV.

Input is the document export shape (source,agent,round,text[,tokens]).
Each subcommand writes one CSV table; topics additionally accepts
--assignments for the per-document dump. Exit codes: 0 success, 2 bad
input or existing output without --overwrite.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .audit import AUDIT_CLASSES, fingerprints, keyword_audit
from .corpus import load_documents_csv
from .frequency import word_frequency
from .sentiment import sentiment
from .topics import lda_two_topics

EXIT_OK = 0
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


def _load(path):
    try:
        return load_documents_csv(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load documents: {exc}") from exc


def _open_out(path, overwrite):
    path = Path(path)
    if path.exists() and not overwrite:
        raise ConfigError(f"{path} exists; pass --overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_audit(args) -> int:
    table = keyword_audit(_load(args.documents))
    out = _open_out(args.out, args.overwrite)
    _write_rows(out, ("source",) + tuple(f"{c}_pct" for c in AUDIT_CLASSES),
                [(source,) + tuple(repr(row[c]) for c in AUDIT_CLASSES)
                 for source, row in sorted(table.items())])
    print(out)
    return EXIT_OK


FINGERPRINT_COLUMNS = ("fundamental_per_1000", "speculative_per_1000",
                       "trade_verbs_per_1000", "risk_profit_ratio")


def cmd_fingerprints(args) -> int:
    table = fingerprints(_load(args.documents))
    out = _open_out(args.out, args.overwrite)
    _write_rows(out, ("source",) + FINGERPRINT_COLUMNS,
                [(source,) + tuple(str(row[c]) for c in FINGERPRINT_COLUMNS)
                 for source, row in sorted(table.items())])
    print(out)
    return EXIT_OK


def cmd_topics(args) -> int:
    corpus = _load(args.documents)
    try:
        result = lda_two_topics(corpus, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = _open_out(args.out, args.overwrite)
    _write_rows(out, ("source", "topic", "share", "top_terms"),
                [(source, topic, repr(shares[topic]),
                  " ".join(result.top_terms[topic]))
                 for source, shares in sorted(result.proportions.items())
                 for topic in sorted(shares)])
    if args.assignments:
        assign_path = _open_out(args.assignments, args.overwrite)
        _write_rows(assign_path, ("source", "agent", "round", "topic"),
                    [(d.source, d.agent, d.round, topic)
                     for d, topic in zip(corpus.documents,
                                         result.assignments)])
    print(out)
    return EXIT_OK


def cmd_freq(args) -> int:
    rows = word_frequency(_load(args.documents))
    out = _open_out(args.out, args.overwrite)
    _write_rows(out, ("word", "count", "percent"),
                [(word, count, repr(pct)) for word, count, pct in rows])
    print(out)
    return EXIT_OK


def cmd_sentiment(args) -> int:
    corpus = _load(args.documents)
    scores, stats = sentiment(corpus)
    out = _open_out(args.out, args.overwrite)
    _write_rows(out, ("source", "mean", "sd", "n"),
                [(source, repr(row["mean"]), repr(row["sd"]), row["n"])
                 for source, row in sorted(stats.items())])
    if args.scores:
        scores_path = _open_out(args.scores, args.overwrite)
        _write_rows(scores_path, ("source", "agent", "round", "score"),
                    [(d.source, d.agent, d.round, repr(score))
                     for d, score in zip(corpus.documents, scores)])
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textlab", description="strategy-text analytics tables")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(cmd, handler):
        cmd.add_argument("documents", help="documents CSV")
        cmd.add_argument("--out", required=True, help="output CSV")
        cmd.add_argument("--overwrite", action="store_true")
        cmd.set_defaults(handler=handler)

    common(sub.add_parser("audit", help="speculative/fundamental/generic mix"),
           cmd_audit)
    common(sub.add_parser("fingerprints", help="keyword rates per 1000"),
           cmd_fingerprints)
    topics = sub.add_parser("topics", help="two-topic LDA shares")
    topics.add_argument("--seed", type=int, default=0)
    topics.add_argument("--assignments", help="also dump per-document topics")
    common(topics, cmd_topics)
    common(sub.add_parser("freq", help="ranked word counts"), cmd_freq)
    sent = sub.add_parser("sentiment", help="per-source sentiment stats")
    sent.add_argument("--scores", help="also dump per-document scores")
    common(sent, cmd_sentiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
