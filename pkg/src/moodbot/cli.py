"""Umbrella command line: training, filtering, evaluation, and serving.

Run ``moodbot <subcommand> --help`` for the options of each pipeline.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

logger = logging.getLogger(__name__)


def _add_schedule_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--squash", choices=["sigmoid", "tanh"], default="sigmoid",
                   help="cell candidate/output activation")
    p.add_argument("--checkpoint-dir", type=Path, default=None)


def _schedule(args):
    from .nn import TrainSchedule

    return TrainSchedule(
        initial_lr=args.lr,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        rng_seed=args.seed,
    )


def cmd_train_classifier(args) -> int:
    from .classifier import ClassifierConfig, evaluate, save_classifier, train_classifier
    from .text import load_embeddings, load_labeled_dataset

    table = load_embeddings(args.embeddings, cap=args.embedding_cap)
    train = load_labeled_dataset(args.train)
    val = load_labeled_dataset(args.val) if args.val else None
    cfg = ClassifierConfig(
        task_tag=args.task,
        bilstm_units=args.bilstm_units,
        lstm_units=args.lstm_units,
        squash=args.squash,
        schedule=_schedule(args),
    )
    model, history = train_classifier(train, val, cfg, table, checkpoint_dir=args.checkpoint_dir)
    save_classifier(model, args.out)
    last = history.records[-1]
    print(f"trained {args.task} classifier: {len(history.records)} epochs, "
          f"best epoch {history.best_epoch}, final val_loss {last.val_loss}")
    if val:
        report = evaluate(model, val)
        print(f"val precision={report.precision:.4f} recall={report.recall:.4f} "
              f"f1={report.f1:.4f} accuracy={report.accuracy:.4f}")
    print(f"model written to {args.out}")
    return 0


def cmd_eval_classifier(args) -> int:
    from .classifier import evaluate, load_classifier
    from .text import load_embeddings, load_labeled_dataset

    table = load_embeddings(args.embeddings, cap=args.embedding_cap)
    model = load_classifier(args.model, table)
    test = load_labeled_dataset(args.test)
    report = evaluate(model, test)
    print(json.dumps({
        "tp": report.tp, "fp": report.fp, "fn": report.fn, "tn": report.tn,
        "precision": report.precision, "recall": report.recall,
        "f1": report.f1, "accuracy": report.accuracy,
    }, indent=2))
    return 0


def cmd_filter_corpus(args) -> int:
    from .classifier import load_classifier
    from .corpus import FilterReport, iter_filter, model_score_fn, parse_conv_file, write_conv_file
    from .text import load_embeddings

    table = load_embeddings(args.embeddings, cap=args.embedding_cap)
    model = load_classifier(args.model, table)
    score_fn = model_score_fn(model)
    report = FilterReport(threshold=args.threshold)
    with open(args.infile, encoding="utf-8") as src, \
            open(args.out, "w", encoding="utf-8") as dst:
        retained = iter_filter(parse_conv_file(src), score_fn, args.threshold, report)
        write_conv_file(retained, dst)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(f"retained {report.retained}/{report.total_conversations} conversations "
          f"(threshold {args.threshold})")
    return 0


def cmd_train_seq2seq(args) -> int:
    from .corpus import conversations_to_pairs, parse_conv_file
    from .responder import ResponderConfig, save_responder, train_seq2seq
    from .text import TextCodec, load_embeddings

    table = load_embeddings(args.embeddings, cap=args.embedding_cap)
    with open(args.pairs, encoding="utf-8") as fh:
        pairs = conversations_to_pairs(parse_conv_file(fh))
    codec = TextCodec(table)
    usable = [(q, a) for q, a in pairs if codec.encode(q).indices and codec.encode(a).indices]
    skipped = len(pairs) - len(usable)
    if skipped:
        logger.warning("skipping %d pairs that empty after encoding", skipped)
    cfg = ResponderConfig(
        role=args.role,
        hidden_units=args.hidden_units,
        squash=args.squash,
        schedule=_schedule(args),
    )
    model, history = train_seq2seq(usable, cfg, table, checkpoint_dir=args.checkpoint_dir)
    save_responder(model, args.out)
    print(f"trained {args.role} responder on {len(usable)} pairs: "
          f"loss {history.records[0].train_loss:.4f} -> {history.records[-1].train_loss:.4f}")
    print(f"model written to {args.out}")
    return 0


def cmd_train_lm(args) -> int:
    from .corpus import parse_conv_file
    from .responder import ResponderConfig, save_responder, train_lm
    from .text import TextCodec, load_embeddings

    table = load_embeddings(args.embeddings, cap=args.embedding_cap)
    with open(args.corpus, encoding="utf-8") as fh:
        replies = [u for conv in parse_conv_file(fh) for u in conv.utterances]
    codec = TextCodec(table)
    usable = [r for r in replies if codec.encode(r).indices]
    cfg = ResponderConfig(
        role="lm",
        hidden_units=args.hidden_units,
        squash=args.squash,
        schedule=_schedule(args),
    )
    lm, history = train_lm(usable, cfg, table, checkpoint_dir=args.checkpoint_dir)
    save_responder(lm, args.out)
    print(f"trained reply LM on {len(usable)} utterances: "
          f"loss {history.records[0].train_loss:.4f} -> {history.records[-1].train_loss:.4f}")
    print(f"model written to {args.out}")
    return 0


def cmd_rcheck(args) -> int:
    from .harness import load_annotations, r_check

    report = r_check(load_annotations(args.annotations))
    fu, fr, fq = (float(x) for x in report.fractions)
    print(json.dumps({
        "total": report.total,
        "n_unqualified": report.n_unqualified,
        "n_regular": report.n_regular,
        "n_qualified": report.n_qualified,
        "fraction_unqualified": fu,
        "fraction_regular": fr,
        "fraction_qualified": fq,
        "r_check": float(report.r_check),
    }, indent=2))
    return 0


def cmd_trajectory(args) -> int:
    from .dialogue import KnowledgeStore
    from .harness import sentiment_trajectory, trajectory_csv

    store = KnowledgeStore(args.store)
    cohorts = None
    if args.cohorts:
        cohorts = json.loads(Path(args.cohorts).read_text(encoding="utf-8"))
    rows = sentiment_trajectory(store.records(), window_seconds=args.window_hours * 3600,
                                cohorts=cohorts)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            trajectory_csv(rows, fh)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        trajectory_csv(rows, sys.stdout)
    return 0


def cmd_export_knowledge(args) -> int:
    from .dialogue import KnowledgeStore

    store = KnowledgeStore(args.store)
    with open(args.out, "w", encoding="utf-8") as fh:
        n = store.export_conv(fh)
    print(f"exported {n} conversations to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .config import build_engine, load_config
    from .service import create_app

    cfg = load_config(args.config)
    engine = build_engine(cfg)
    app = create_app(engine, ui_dir=args.ui_dir)
    host = args.host or cfg.host
    port = args.port or cfg.port
    print(f"serving chat API on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def cmd_chat(args) -> int:
    from .config import build_engine, load_config

    engine = build_engine(load_config(args.config))
    session = engine.sessions.create()
    print(f"session {session.id}; empty line quits")
    while True:
        try:
            text = input("you> ").strip()
        except EOFError:
            break
        if not text:
            break
        turn = engine.respond(session, text)
        print(f"[{turn.bot_used}] bot> {turn.reply_text}")
        print(f"      mental={turn.mental_score:.3f} sentiment={turn.sentiment_score:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moodbot")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-classifier", help="train the sentiment or relatedness classifier")
    p.add_argument("--task", choices=["sentiment", "relatedness"], required=True)
    p.add_argument("--train", required=True, help="labeled TSV: '<label>\\t<text>'")
    p.add_argument("--val", default=None)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--embedding-cap", type=int, default=100000)
    p.add_argument("--out", required=True)
    p.add_argument("--bilstm-units", type=int, default=32)
    p.add_argument("--lstm-units", type=int, default=16)
    _add_schedule_args(p)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("eval-classifier", help="precision/recall/F1 on a labeled set")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--embedding-cap", type=int, default=100000)
    p.set_defaults(func=cmd_eval_classifier)

    p = sub.add_parser("filter-corpus", help="retain counseling-related conversations")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--embedding-cap", type=int, default=100000)
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--report", default=None, help="write a JSON filter report here")
    p.set_defaults(func=cmd_filter_corpus)

    p = sub.add_parser("train-seq2seq", help="train a casual or counseling responder")
    p.add_argument("--pairs", required=True, help="'.conv' file; utterances pair up Q/A")
    p.add_argument("--role", choices=["casual", "counseling"], required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--embedding-cap", type=int, default=100000)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden-units", type=int, default=64)
    _add_schedule_args(p)
    p.set_defaults(func=cmd_train_seq2seq)

    p = sub.add_parser("train-lm", help="train the reply-side language model")
    p.add_argument("--corpus", required=True, help="'.conv' file of reply material")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--embedding-cap", type=int, default=100000)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden-units", type=int, default=64)
    _add_schedule_args(p)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("rcheck", help="response-quality ratio from an annotation file")
    p.add_argument("--annotations", required=True, help="one 0/1/2 label per line")
    p.set_defaults(func=cmd_rcheck)

    p = sub.add_parser("trajectory", help="sentiment trajectory CSV from the knowledge store")
    p.add_argument("--store", required=True)
    p.add_argument("--window-hours", type=float, default=48.0)
    p.add_argument("--cohorts", default=None, help="JSON file mapping session_id to cohort")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("export-knowledge", help="replay the knowledge store as '.conv'")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_knowledge)

    p = sub.add_parser("serve", help="run the HTTP chat service")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--ui-dir", default=None, help="serve a built web client from this directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("chat", help="terminal chat against locally loaded models")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_chat)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
