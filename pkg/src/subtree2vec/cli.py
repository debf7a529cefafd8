"""``s2v`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data or validation
error, 3 numeric failure (non-finite loss).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import downstream, plotting
from .config import ConfigError, load_run_config
from .corpus import load_corpus, read_truth, write_programs
from .downstream import EmbeddingIndex, FinetuneError
from .interpret import explain as explain_program, render_heat
from .metrics import adjusted_rand_index, clone_metrics, mean_reciprocal_rank
from .minilang import ParseError, parse_minilang
from .synthetic import generate_corpus, generate_discriminative
from .trainer import (
    CheckpointError, NumericError, load_checkpoint, prepare_input, save_checkpoint, train,
)
from .trees import AstError, save_ast_file
from .vocab import SubtreeVocab, VocabError, build_vocab

log = logging.getLogger("subtree2vec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out(text: str, path=None):
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _report_dir(cfg):
    if cfg.report_dir:
        d = Path(cfg.report_dir)
        d.mkdir(parents=True, exist_ok=True)
        return d
    return None


def _fmt(x: float) -> str:
    return f"{x:.6f}"


# -- subcommands ----------------------------------------------------------------

def cmd_parse(args, cfg):
    for f in args.files:
        src = Path(f)
        ast = parse_minilang(src.read_text(encoding="utf-8"), src.stem)
        target = Path(args.out_dir) / f"{src.stem}.json" if args.out_dir else src.with_suffix(".json")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(save_ast_file(ast))
        print(f"{ast.source_id}\t{len(ast)}\t{target}")


def cmd_synth(args, cfg):
    gen = generate_discriminative if args.kind == "discriminative" else generate_corpus
    programs = gen(args.n_per_class, cfg.seed)
    write_programs(programs, args.out, as_ast=args.ast)
    print(f"# synth kind={args.kind} n_per_class={args.n_per_class} seed={cfg.seed}")
    for p in programs:
        print(f"{p.source_id}\t{p.label}")


def cmd_vocab(args, cfg):
    corpus = load_corpus(args.corpus)
    vocab = build_vocab(corpus.asts, cfg.min_count, cfg.label_mode, cfg.with_operators)
    _out(vocab.to_tsv(), args.out or cfg.vocab or None)


def cmd_pretrain(args, cfg):
    corpus = load_corpus(args.corpus)
    tcfg = cfg.train_config()
    if cfg.vocab and Path(cfg.vocab).exists():
        vocab = SubtreeVocab.from_tsv(Path(cfg.vocab).read_text(encoding="utf-8"))
        if vocab.kind != tcfg.label_mode:
            raise VocabError(f"vocabulary holds {vocab.kind} labels, config wants {tcfg.label_mode}")
    else:
        vocab = build_vocab(corpus.asts, tcfg.min_count, tcfg.label_mode, tcfg.with_operators)
    print(f"# pretrain D={tcfg.D} epochs={tcfg.epochs} lr={tcfg.learning_rate} "
          f"init_mode={tcfg.init_mode} label_mode={tcfg.label_mode} labels={len(vocab)} seed={tcfg.seed}")
    print("epoch\tloss")
    ckpt = train(corpus.asts, vocab, tcfg,
                 on_epoch=lambda e, loss: print(f"{e + 1}\t{_fmt(loss)}", flush=True))
    path = save_checkpoint(ckpt, cfg.checkpoint)
    print(f"# checkpoint\t{path}")
    rd = _report_dir(cfg)
    if rd:
        (rd / "pretrain.tsv").write_text(
            "epoch\tloss\n" + "".join(f"{i + 1}\t{_fmt(l)}\n" for i, l in enumerate(ckpt.epoch_losses)))
        plotting.plot_loss_curve(ckpt.epoch_losses, rd / "pretrain_loss.png")


def _embed(corpus, ckpt, jobs=1) -> EmbeddingIndex:
    c = ckpt.config
    asts = [prepare_input(a, c.label_mode) for a in corpus.asts]
    return downstream.embed_corpus(asts, ckpt.params, c.init_mode, c.aggregate_mode,
                                   corpus.languages, corpus.task_ids, jobs=jobs)


def cmd_embed(args, cfg):
    ckpt = load_checkpoint(args.ckpt or cfg.checkpoint)
    index = _embed(load_corpus(args.corpus), ckpt, cfg.jobs)
    _out(index.to_tsv(), args.out or cfg.index or None)


def _load_index(path) -> EmbeddingIndex:
    return EmbeddingIndex.from_tsv(Path(path).read_text(encoding="utf-8"))


def cmd_cluster(args, cfg):
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    index = _load_index(args.embeddings)
    result = downstream.kmeans(index, args.k, cfg.seed, args.max_iters)
    lines = [f"# cluster k={args.k} seed={cfg.seed} metric=ari inertia={_fmt(result.inertia)}"]
    lines += [f"{sid}\t{int(c)}" for sid, c in zip(index.ids(), result.labels)]
    if args.truth:
        truth = read_truth(Path(args.truth).read_text(encoding="utf-8"))
        ids = [i for i in index.ids() if i in truth]
        pred = dict(zip(index.ids(), result.labels.tolist()))
        ari = adjusted_rand_index([pred[i] for i in ids], [truth[i] for i in ids])
        lines.append(f"# ari\t{_fmt(ari)}")
    _out("\n".join(lines) + "\n", args.out)


def cmd_clone(args, cfg):
    if not -1 <= args.threshold <= 1:
        raise UsageError("--threshold must lie in [-1, 1]")
    index = _load_index(args.embeddings)
    truth = read_truth(Path(args.truth).read_text(encoding="utf-8")) if args.truth else None
    lines = [f"# clone threshold={args.threshold} metric=cosine"]
    pairs = []
    for a, b, cos in downstream.clone_pairs(index):
        predicted = cos >= args.threshold
        if predicted:
            lines.append(f"{a}\t{b}\t{_fmt(cos)}")
        if truth is not None:
            actual = a in truth and truth.get(a) == truth.get(b)
            pairs.append((predicted, actual))
    if truth is not None:
        p, r, f1 = clone_metrics(pairs)
        lines += [f"# precision\t{_fmt(p)}", f"# recall\t{_fmt(r)}", f"# f1\t{_fmt(f1)}"]
    _out("\n".join(lines) + "\n", args.out)


def cmd_search(args, cfg):
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    index = _load_index(args.embeddings)
    queries = _load_index(args.query)
    lines = [f"# search k={args.k} exclude_lang={args.exclude_lang} metric=mrr"]
    ranked_for_mrr = []
    for q in queries.entries:
        exclude = q.language if args.exclude_lang else None
        results = downstream.search(q.vector, index, args.k, exclude, exclude_ids=[q.source_id])
        for rank, (sid, score) in enumerate(results, start=1):
            lines.append(f"{q.source_id}\t{rank}\t{sid}\t{_fmt(score)}")
        if q.task_id:
            relevant = [e.source_id for e in index.entries
                        if e.task_id == q.task_id and e.source_id != q.source_id
                        and (exclude is None or e.language != exclude)]
            if relevant:
                ids = [sid for sid, _ in results]
                hits = [sid for sid in ids if sid in relevant]
                ranked_for_mrr.append((ids, hits[0] if hits else relevant[0]))
    if ranked_for_mrr:
        lines.append(f"# mrr\t{_fmt(mean_reciprocal_rank(ranked_for_mrr))}")
    _out("\n".join(lines) + "\n", args.out)


def cmd_finetune(args, cfg):
    ckpt = load_checkpoint(args.ckpt or cfg.checkpoint)
    items = load_corpus(args.corpus).labeled()
    result = downstream.finetune(ckpt, items, args.fraction, args.init, cfg.train_config(),
                                 test_ratio=args.test_ratio)
    lines = [f"# finetune init={args.init} fraction={args.fraction} seed={cfg.seed} "
             f"train={result.n_train} test={result.n_test} metric=accuracy"]
    lines += [f"{sid}\t{truth}\t{pred}" for sid, truth, pred in result.predictions]
    lines.append(f"# accuracy\t{_fmt(result.accuracy)}")
    _out("\n".join(lines) + "\n", args.report)
    if args.out:
        save_checkpoint(result.checkpoint, args.out)
    rd = _report_dir(cfg)
    if rd:
        plotting.plot_loss_curve(result.checkpoint.epoch_losses, rd / f"finetune_{args.init}_loss.png",
                                 title=f"fine-tuning loss ({args.init} init)")


def cmd_name(args, cfg):
    ckpt = load_checkpoint(args.ckpt or cfg.checkpoint)
    asts = load_corpus(args.corpus).asts
    result = downstream.train_name_model(ckpt, asts, args.fraction, args.init, cfg.train_config(),
                                         test_ratio=args.test_ratio)
    lines = [f"# name init={args.init} fraction={args.fraction} seed={cfg.seed} metric=subword_f1"]
    lines += [f"{sid}\t{truth}\t{pred}" for sid, truth, pred in result.predictions]
    lines += [f"# precision\t{_fmt(result.precision)}", f"# recall\t{_fmt(result.recall)}",
              f"# f1\t{_fmt(result.f1)}"]
    _out("\n".join(lines) + "\n", args.out)


def cmd_explain(args, cfg):
    ckpt = load_checkpoint(args.ckpt or cfg.checkpoint)
    snippet = load_corpus(args.file).snippets[0]
    cls = args.cls
    if cls.isdigit() and cls not in ckpt.head_labels:
        cls = int(cls)
    report = explain_program(ckpt, snippet.ast, cls)
    _out(report.to_json(), args.out)
    if args.svg:
        plotting.render_tree_svg(snippet.ast, report.display_scores, args.svg,
                                 title=f"{snippet.ast.source_id} ({report.correct_class})")
    rd = _report_dir(cfg)
    if rd:
        stem = snippet.ast.source_id.replace("/", "_")
        (rd / f"{stem}.heat.txt").write_text(
            render_heat(snippet.ast, report.display_scores, snippet.source), encoding="utf-8")
        plotting.plot_delta_vs_attention(report.records, rd / f"{stem}.delta.png",
                                         title=f"spearman = {report.correlation}")


def cmd_ablate(args, cfg):
    corpus = load_corpus(args.corpus)
    truth = read_truth(Path(args.truth).read_text(encoding="utf-8")) if args.truth else {
        s.ast.source_id: s.label for s in corpus.snippets}
    axis_values = {"init_mode": ("type", "token", "combine"),
                   "label_mode": ("subtree", "token", "method_name")}[args.axis]
    lines = [f"# ablate axis={args.axis} k={args.k} D={cfg.D} epochs={cfg.epochs} seed={cfg.seed} metric=ari",
             f"{args.axis}\tlabels\tfinal_loss\tari"]
    scores = {}
    for value in axis_values:
        tcfg = cfg.train_config()
        setattr(tcfg, args.axis, value)
        vocab = build_vocab(corpus.asts, tcfg.min_count, tcfg.label_mode, tcfg.with_operators)
        ckpt = train(corpus.asts, vocab, tcfg)
        index = _embed(corpus, ckpt, cfg.jobs)
        labels = downstream.kmeans(index, args.k, cfg.seed).labels
        ids = index.ids()
        ari = adjusted_rand_index([int(labels[i]) for i, s in enumerate(ids) if s in truth],
                                  [truth[s] for s in ids if s in truth])
        scores[value] = ari
        lines.append(f"{value}\t{len(vocab)}\t{_fmt(ckpt.final_loss)}\t{_fmt(ari)}")
    _out("\n".join(lines) + "\n", args.out)
    rd = _report_dir(cfg)
    if rd:
        plotting.plot_metric_bars(scores, rd / f"ablate_{args.axis}.png", title=f"{args.axis} ablation")


# -- argument parsing ---------------------------------------------------------

def _train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--lr", dest="learning_rate", type=float)
    g.add_argument("--dim", dest="D", type=int)
    g.add_argument("--conv-layers", dest="num_conv_layers", type=int)
    g.add_argument("--init-mode", dest="init_mode", choices=("type", "token", "combine"))
    g.add_argument("--label-mode", dest="label_mode", choices=("subtree", "token", "method_name"))
    g.add_argument("--aggregate-mode", dest="aggregate_mode", choices=("attention", "max"))
    g.add_argument("--min-count", dest="min_count", type=int)
    g.add_argument("--with-operators", dest="with_operators", action="store_const", const=True)
    g.add_argument("--deterministic", dest="deterministic", action="store_const", const=True)


OVERRIDE_KEYS = ("epochs", "batch_size", "learning_rate", "D", "num_conv_layers", "init_mode",
                 "label_mode", "aggregate_mode", "min_count", "with_operators", "deterministic",
                 "seed", "report_dir", "jobs", "checkpoint", "vocab")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value config file (default: $S2V_CONFIG)")
    common.add_argument("--seed", type=int)
    common.add_argument("--report-dir", dest="report_dir")
    common.add_argument("--jobs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="s2v", description="Self-supervised subtree-prediction code embeddings.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", parents=[common], help="MiniLang source to AST interchange files")
    p.add_argument("files", nargs="+")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("synth", parents=[common], help="write the seeded synthetic corpus")
    p.add_argument("out")
    p.add_argument("--kind", choices=("main", "discriminative"), default="main")
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--ast", action="store_true", help="write AST JSON instead of source")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("vocab", parents=[common], help="build the label vocabulary")
    p.add_argument("corpus")
    p.add_argument("--out")
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--label-mode", dest="label_mode", choices=("subtree", "token", "method_name"))
    p.add_argument("--with-operators", dest="with_operators", action="store_const", const=True)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("pretrain", parents=[common], help="train the encoder on subtree prediction")
    p.add_argument("corpus")
    p.add_argument("--out", dest="checkpoint")
    p.add_argument("--vocab")
    _train_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("embed", parents=[common], help="write code vectors as TSV")
    p.add_argument("corpus")
    p.add_argument("--ckpt")
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("cluster", parents=[common], help="k-means over code vectors")
    p.add_argument("embeddings")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--truth")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("clone", parents=[common], help="pairwise clone detection")
    p.add_argument("embeddings")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--truth")
    p.add_argument("--out")
    p.set_defaults(func=cmd_clone)

    p = sub.add_parser("search", parents=[common], help="code-to-code search")
    p.add_argument("embeddings")
    p.add_argument("--query", required=True, help="embedding TSV of query snippets")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--exclude-lang", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("finetune", parents=[common], help="fine-tune a classifier")
    p.add_argument("corpus")
    p.add_argument("--ckpt")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--init", choices=("pretrained", "random"), default="pretrained")
    p.add_argument("--test-ratio", type=float, default=0.3)
    p.add_argument("--out", help="write the fine-tuned classifier checkpoint here")
    p.add_argument("--report")
    _train_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("name", parents=[common], help="method-name prediction")
    p.add_argument("corpus")
    p.add_argument("--ckpt")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--init", choices=("pretrained", "random"), default="pretrained")
    p.add_argument("--test-ratio", type=float, default=0.3)
    p.add_argument("--out")
    _train_flags(p)
    p.set_defaults(func=cmd_name)

    p = sub.add_parser("explain", parents=[common], help="attention vs. deletion explanation")
    p.add_argument("file")
    p.add_argument("--ckpt")
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--svg")
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ablate", parents=[common], help="ARI across init or label modes")
    p.add_argument("corpus")
    p.add_argument("--axis", choices=("init_mode", "label_mode"), required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--truth")
    p.add_argument("--out")
    _train_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        overrides = {k: getattr(args, k, None) for k in OVERRIDE_KEYS}
        cfg = load_run_config(args.config, overrides)
        args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"s2v: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"s2v: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, AstError, VocabError, CheckpointError, FinetuneError,
            ValueError, KeyError, IndexError, OSError) as exc:
        print(f"s2v: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
