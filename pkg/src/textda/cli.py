"""Command line interface.

Subcommands: train, evaluate, analyze-filters, gradcheck, synth. Exit codes:
0 success, 1 usage or configuration error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import TrainConfig, parse_config_file
from .data import Vocab, build_vocab, load_corpus, load_pretrained_embeddings, pad_batch, save_corpus, split_dev
from .errors import ConfigError, DataError, NumericalError, TextdaError
from .evaluation import evaluate_corpus, filter_analysis, render_filter_report
from .losses import (
    bootstrap_loss,
    compose_total,
    entropy_min_loss,
    feature_adaptation_loss,
    mmd_rbf,
    rampup_weight,
    source_cross_entropy,
)
from .model import classify, encode_batch, load_checkpoint, save_checkpoint
from .rng import named_rng
from .synth import SyntheticSpec, generate_synthetic
from .trainer import train, write_history_csv


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the contract here is 1
    def error(self, message):
        raise ConfigError(message)


def _add_common(sub: argparse.ArgumentParser, out_required: bool) -> None:
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument("--out", required=out_required, help="output directory")
    sub.add_argument("--seed", type=int, help="override the config seed")


def build_parser() -> _Parser:
    parser = _Parser(prog="textda", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", parents=[], help="train a model on a source/target domain pair")
    _add_common(p, out_required=True)
    p.add_argument("--source", required=True, help="labeled source corpus (JSONL)")
    p.add_argument("--target", required=True, help="unlabeled target corpus (JSONL)")
    p.add_argument("--source-unlabeled", help="optional extra unlabeled source corpus")
    p.add_argument("--test", help="optional labeled target test corpus")
    p.add_argument("--embeddings", help="optional pretrained embedding text file")
    p.add_argument("--scheme", choices=("amazon5", "imdb10"), help="rating scheme for rating-labeled corpora")
    p.add_argument("--runs", type=int, default=1, help="number of seeds (seed, seed+1, ...)")
    p.add_argument("--dump-ensemble", action="store_true", help="dump the ensemble matrix each epoch")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("evaluate", help="score a checkpoint on a labeled corpus")
    _add_common(p, out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--scheme", choices=("amazon5", "imdb10"))
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("analyze-filters", help="top activating trigrams per class filter")
    _add_common(p, out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", action="append", required=True, metavar="[TAG=]PATH",
                   help="corpus to scan; repeatable, tag defaults to the file stem")
    p.add_argument("--scheme", choices=("amazon5", "imdb10"))
    p.add_argument("--k-filters", type=int, default=10)
    p.add_argument("--k-trigrams", type=int, default=5)
    p.set_defaults(func=cmd_analyze_filters)

    p = subs.add_parser("gradcheck", help="finite-difference check of every loss component")
    _add_common(p, out_required=False)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = subs.add_parser("synth", help="generate a synthetic domain-pair task")
    _add_common(p, out_required=True)
    p.add_argument("--shift", type=float, default=0.7)
    p.add_argument("--train-docs", type=int, default=2000)
    p.add_argument("--test-docs", type=int, default=1000)
    p.add_argument("--source-unlabeled-docs", type=int, default=0)
    p.add_argument("--sentiment-rate", type=float, default=0.35)
    p.add_argument("--len-min", type=int, default=8)
    p.add_argument("--len-max", type=int, default=30)
    p.set_defaults(func=cmd_synth)

    return parser


def _load_train_config(args) -> TrainConfig:
    mapping = parse_config_file(args.config) if args.config else {}
    cfg = TrainConfig.from_strings(mapping)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise DataError(f"input file not found: {p}")


def _load_vocab_for_checkpoint(vocab_path, header: dict) -> Vocab:
    vocab = Vocab.load(vocab_path)
    if len(vocab) != header["vocab_size"]:
        raise DataError(
            f"vocab size mismatch: checkpoint expects {header['vocab_size']}, file has {len(vocab)}")
    if vocab.content_hash() != header["vocab_hash"]:
        raise DataError(
            f"vocab hash mismatch: checkpoint expects {header['vocab_hash']}, "
            f"file {vocab_path} hashes to {vocab.content_hash()}")
    return vocab


def cmd_train(args) -> int:
    cfg = _load_train_config(args)
    if args.runs < 1:
        raise ConfigError(f"--runs must be >= 1, got {args.runs}")
    _require_files(args.source, args.target, args.source_unlabeled, args.test, args.embeddings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    source = load_corpus(args.source, "source", args.scheme)
    target = load_corpus(args.target, "target", args.scheme)
    source_unlabeled = (
        load_corpus(args.source_unlabeled, "source", args.scheme) if args.source_unlabeled else None)
    test = load_corpus(args.test, "target", args.scheme) if args.test else None

    pools = [source, target] + ([source_unlabeled] if source_unlabeled else [])
    vocab = build_vocab(pools, cfg.vocab_size)
    vocab.save(out / "vocab.txt")
    vocab_hash = vocab.content_hash()

    run_reports = []
    for k in range(args.runs):
        run_cfg = dataclasses.replace(cfg, seed=cfg.seed + k)
        run_dir = out if args.runs == 1 else out / f"run{k:02d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        train_split, dev = split_dev(source, run_cfg.n_dev, named_rng(run_cfg.seed, "split"))
        embeddings, found = load_pretrained_embeddings(
            args.embeddings, vocab, run_cfg.embedding_dim, named_rng(run_cfg.seed, "embeddings"))
        params, history = train(
            run_cfg, vocab, embeddings, train_split, target, dev,
            source_unlabeled=source_unlabeled,
            dump_ensemble_dir=run_dir if args.dump_ensemble else None,
        )
        ckpt_path = run_dir / "model.ckpt"
        save_checkpoint(params, vocab_hash, ckpt_path)
        write_history_csv(history, run_dir / "history.csv")
        entry = {
            "seed": run_cfg.seed,
            "best_epoch": history.best_epoch,
            "dev_error": history.epochs[history.best_epoch - 1].dev_error,
            "checkpoint": str(ckpt_path),
            "history": str(run_dir / "history.csv"),
            "pretrained_tokens_found": found,
            "test": None,
        }
        if test is not None:
            report = evaluate_corpus(params, vocab, test, run_cfg.max_doc_len, run_cfg.eval_batch)
            entry["test"] = {"accuracy": report.accuracy, "macro_f1": report.macro_f1}
            print(f"run {k}: seed {run_cfg.seed} best_epoch {history.best_epoch} "
                  f"dev_error {entry['dev_error']:.4f} "
                  f"test_accuracy {report.accuracy:.4f} test_macro_f1 {report.macro_f1:.4f}")
        else:
            print(f"run {k}: seed {run_cfg.seed} best_epoch {history.best_epoch} "
                  f"dev_error {entry['dev_error']:.4f}")
        run_reports.append(entry)

    aggregate = None
    if test is not None:
        accs = [r["test"]["accuracy"] for r in run_reports]
        f1s = [r["test"]["macro_f1"] for r in run_reports]
        aggregate = {
            "accuracy_mean": float(np.mean(accs)),
            "accuracy_std": float(np.std(accs)),
            "macro_f1_mean": float(np.mean(f1s)),
            "macro_f1_std": float(np.std(f1s)),
        }
        print(f"aggregate over {args.runs} run(s): "
              f"accuracy {aggregate['accuracy_mean']:.4f} macro_f1 {aggregate['macro_f1_mean']:.4f}")

    report = {
        "command": "train",
        "config": cfg.to_dict(),
        "data": {
            "source": str(args.source),
            "target": str(args.target),
            "source_unlabeled": str(args.source_unlabeled) if args.source_unlabeled else None,
            "test": str(args.test) if args.test else None,
            "scheme": args.scheme,
            "n_source": len(source),
            "n_target": len(target),
            "vocab": str(out / "vocab.txt"),
            "vocab_hash": vocab_hash,
        },
        "runs": run_reports,
        "aggregate": aggregate,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_train_config(args)
    _require_files(args.checkpoint, args.vocab, args.test)
    params, header = load_checkpoint(args.checkpoint)
    vocab = _load_vocab_for_checkpoint(args.vocab, header)
    test = load_corpus(args.test, "target", args.scheme)
    report = evaluate_corpus(params, vocab, test, cfg.max_doc_len, cfg.eval_batch)
    print(report.summary())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"command": "evaluate", "checkpoint": str(args.checkpoint),
                   "test": str(args.test), **report.to_dict()}
        (out / "eval_report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                              encoding="utf-8")
    return 0


def cmd_analyze_filters(args) -> int:
    cfg = _load_train_config(args)
    _require_files(args.checkpoint, args.vocab)
    params, header = load_checkpoint(args.checkpoint)
    vocab = _load_vocab_for_checkpoint(args.vocab, header)
    corpora = []
    for value in args.corpus:
        tag, sep, path = value.partition("=")
        if not sep:
            tag, path = Path(value).stem, value
        _require_files(path)
        corpora.append(load_corpus(path, tag, args.scheme))
    report = filter_analysis(params, vocab, corpora, args.k_filters, args.k_trigrams,
                             cfg.max_doc_len, cfg.eval_batch)
    text = render_filter_report(report)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "filters.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (out / "filters.txt").write_text(text, encoding="utf-8")
    return 0


def _gradcheck_fixture(cfg: TrainConfig, corrupt: bool):
    """Toy problem (V=20, d=4, h=6, C=3, 4-document batches) plus builders for
    each loss component on it."""
    V, d, h, C, window = 20, 4, 6, 3, 3
    rng = named_rng(cfg.seed, "gradcheck")
    E = rng.uniform(-0.5, 0.5, (V, d))
    E[0] = 0.0
    params = {
        "E": E,
        "W": rng.uniform(-0.5, 0.5, (h, window * d)),
        "b": rng.uniform(-0.1, 0.1, h),
        "F_w": rng.uniform(-0.5, 0.5, (C, h)),
        "F_b": rng.uniform(-0.1, 0.1, C),
    }

    def docs(lengths):
        return [rng.integers(2, V, size=n).astype(np.int64) for n in lengths]

    enc_s, enc_t, enc_u = docs([5, 3, 7, 4]), docs([6, 4, 3, 5]), docs([4, 5, 2, 6])
    y = np.eye(C)[rng.integers(0, C, 4)]
    z_tilde = np.eye(C)[rng.integers(0, C, 4)]
    mats = {name: pad_batch(enc, np.arange(4))
            for name, enc in (("s", enc_s), ("t", enc_t), ("u", enc_u))}
    weights = cfg.effective_weights()
    w_t = rampup_weight(cfg.epochs, cfg.epochs, weights.lambda3)

    def encode(tape, leaves, which):
        mat, lengths = mats[which]
        return encode_batch(tape, leaves, mat, lengths, dropout_rate=0.0, training=False)

    def build(component):
        def fn(tape, leaves):
            if corrupt:
                tape.record(lambda: leaves["W"].grad.__iadd__(1e-3))
            enc_bs = encode(tape, leaves, "s")
            if component == "L":
                return source_cross_entropy(y, classify(tape, leaves, enc_bs.xi))
            if component == "J":
                return feature_adaptation_loss(enc_bs.xi, encode(tape, leaves, "t").xi, cfg.l1_eps)
            if component == "MMD":
                return mmd_rbf(enc_bs.xi, encode(tape, leaves, "t").xi, sigma=1.0)
            if component == "Gamma":
                return entropy_min_loss(classify(tape, leaves, encode(tape, leaves, "t").xi))
            if component == "Omega":
                return bootstrap_loss(z_tilde, classify(tape, leaves, encode(tape, leaves, "u").xi))
            # composed total, every component active
            L = source_cross_entropy(y, classify(tape, leaves, enc_bs.xi))
            enc_bt = encode(tape, leaves, "t")
            if cfg.distance_loss == "mmd-rbf":
                J = mmd_rbf(enc_bs.xi, enc_bt.xi, sigma=1.0)
            else:
                J = feature_adaptation_loss(enc_bs.xi, enc_bt.xi, cfg.l1_eps)
            Gamma = entropy_min_loss(classify(tape, leaves, enc_bt.xi))
            Omega = bootstrap_loss(z_tilde, classify(tape, leaves, encode(tape, leaves, "u").xi))
            return compose_total(L, J, Gamma, Omega, weights, w_t)

        return fn

    return params, build


def cmd_gradcheck(args) -> int:
    cfg = _load_train_config(args)
    params, build = _gradcheck_fixture(cfg, args.corrupt_gradient)
    results = {}
    failed = []
    for component in ("L", "J", "Gamma", "Omega", "MMD", "total"):
        report = ad.grad_check(build(component), params, h=1e-5, tol=1e-4)
        results[component] = {"passed": report.passed, "max_rel_error": report.max_rel_error}
        status = "PASS" if report.passed else "FAIL"
        print(f"{component:6s} {status}  max rel error {report.max_rel_error:.3e}")
        if not report.passed:
            failed.append(component)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"command": "gradcheck", "tol": 1e-4, "h": 1e-5,
                   "passed": not failed, "components": results}
        (out / "gradcheck.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
    if failed:
        raise NumericalError(f"gradient check failed for: {', '.join(failed)}")
    print("gradient check passed for all components")
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_train=args.train_docs,
        n_test=args.test_docs,
        n_source_unlabeled=args.source_unlabeled_docs,
        shift=args.shift,
        sentiment_rate=args.sentiment_rate,
        len_min=args.len_min,
        len_max=args.len_max,
        seed=args.seed if args.seed is not None else 0,
    )
    corpora = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, corpus in corpora.items():
        path = out / f"{name}.jsonl"
        save_corpus(corpus, path)
        counts = corpus.label_counts()
        print(f"{path}: {len(corpus)} docs " +
              " ".join(f"{label}={counts[label]}" for label in sorted(counts)))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except TextdaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
