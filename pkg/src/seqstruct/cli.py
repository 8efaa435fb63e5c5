"""Command-line entry point: ``seqstruct <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from seqstruct import config as cfgmod
from seqstruct import data, protocol, report, rules, synth
from seqstruct.metrics import evaluate_split, mean_jaccard
from seqstruct.models import ModelHParams, build_model, load_model, train

log = logging.getLogger("seqstruct")


def _column(value: str):
    return int(value) if value.lstrip("-").isdigit() else value


def _add_schema(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input schema")
    g.add_argument("--user-col", type=_column, default=0, help="column index or header name")
    g.add_argument("--item-col", type=_column, default=1)
    g.add_argument("--time-col", type=_column, default=2)
    g.add_argument("--event-col", type=_column, default=None)
    g.add_argument("--delimiter", default=",")
    g.add_argument("--header", action="store_true", help="first line is a header")
    g.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")


def _schema(args) -> data.Schema:
    delim = "\t" if args.delimiter in ("\\t", "tab") else args.delimiter
    return data.Schema(
        user=args.user_col,
        item=args.item_col,
        timestamp=args.time_col,
        event_type=args.event_col,
        delimiter=delim,
        has_header=args.header,
        fail_fast=not args.lenient,
    )


def _add_preprocess(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("preprocessing")
    g.add_argument("--event-type", default=None, help="keep only rows with this event label")
    g.add_argument("--k-core", type=int, default=5)
    g.add_argument("--min-interactions", type=int, default=None, help="user-only filter instead of k-core")
    g.add_argument("--no-dedup", action="store_true", help="keep consecutive repeats")


def _preprocess_config(args) -> data.PreprocessConfig:
    k_core = None if args.min_interactions is not None else args.k_core
    return data.PreprocessConfig(
        event_type=args.event_type,
        k_core=k_core,
        min_interactions=args.min_interactions,
        dedup=not args.no_dedup,
    )


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _print_json(obj) -> None:
    print(report.dumps(obj))


# subcommands


def cmd_stats(args) -> int:
    log_ = data.read_log(args.input, _schema(args))
    if args.preprocess:
        log_ = data.preprocess(log_, _preprocess_config(args))
    _print_json({**data.compute_stats(log_).to_dict(), "skipped_rows": log_.skipped_rows})
    return 0


def cmd_preprocess(args) -> int:
    log_ = data.preprocess(data.read_log(args.input, _schema(args)), _preprocess_config(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_canonical(log_, out)
    _print_json(data.compute_stats(log_).to_dict())
    return 0


def cmd_split(args) -> int:
    log_ = data.read_canonical(args.input)
    bundle = protocol.build_split(log_, q=args.q, val_user_fraction=args.val_fraction, seed=args.seed)
    protocol.save_split(bundle, args.out)
    _print_json({"boundary_ts": bundle.boundary_ts, **bundle.counts})
    return 0


def cmd_rules(args) -> int:
    log_ = data.read_canonical(args.input)
    n = args.order
    stats = rules.rule_shuffle_delta(log_, n, args.min_support, args.min_confidence, args.seeds)
    _print_json(stats.to_dict())
    if args.dump:
        table = rules.count_ngrams(log_.sequences(), n, log_.n_items)
        Path(args.dump).write_text(report.dumps(rules.list_rules(table, args.min_support, args.min_confidence)) + "\n")
    return 0


def cmd_train(args) -> int:
    split = protocol.load_split(args.split)
    overrides = {k: v for k, v in vars(args).items() if k in {f for f in ModelHParams.__dataclass_fields__} and v is not None}
    overrides["architecture"] = args.arch
    hp = ModelHParams(**overrides)
    model = build_model(hp, split.n_items + 1)
    train(model, split, hp)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out)
    _print_json({"best_epoch": model.best_epoch, "epochs_run": len(model.history), "parameters": model.num_parameters()})
    return 0


def cmd_evaluate(args) -> int:
    split = protocol.load_split(args.split)
    model = load_model(args.model)
    instances = split.val_instances if args.on == "val" else split.test_instances
    original = evaluate_split(model, instances, args.k)
    out = {"hr": original.hr, "ndcg": original.ndcg, "n_evaluated": original.n_evaluated, "skipped": original.skipped}
    if args.shuffle_seed is not None:
        shuffled = evaluate_split(model, instances, args.k, shuffle_seed=args.shuffle_seed)
        out.update(
            hr_shuffled=shuffled.hr,
            ndcg_shuffled=shuffled.ndcg,
            jaccard=mean_jaccard(original, shuffled, args.k),
            shuffle_seed=args.shuffle_seed,
        )
    _print_json(out)
    return 0


def cmd_analyze(args) -> int:
    cfg = cfgmod.load_config(args.config)
    result = report.run_analysis(cfg, args.out)
    failed = [e["name"] for e in result["datasets"] if e["status"] != "ok"]
    for e in result["datasets"]:
        if e["status"] == "ok":
            print(f"{e['name']}: {e['verdict']} ({e['verdict_reason']})")
        else:
            print(f"{e['name']}: FAILED at {e['stage']}: {e['error']}")
    print(f"report written to {cfg.resolve_output(args.out)}")
    return 1 if failed else 0


def cmd_synth(args) -> int:
    overrides = {k: getattr(args, k) for k in ("n_users", "n_items", "length", "dominant_prob") if getattr(args, k) is not None}
    config = synth.SynthConfig(kind=args.kind, seed=args.seed, **overrides)
    log_ = synth.generate(config)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    synth.write_log(log_, args.out)
    _print_json({"config": asdict(config), **data.compute_stats(log_).to_dict()})
    return 0


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(cfgmod.OUTPUT_ENV) or cfgmod.DEFAULT_OUTPUT)


def cmd_verify(args) -> int:
    problems = report.verify(_out_dir(args))
    for p in problems:
        print(p)
    print("ok" if not problems else f"{len(problems)} mismatches")
    return 1 if problems else 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    rep = json.loads((out / "report.json").read_text())
    report.emit_report(rep, out, formats=("jsonl", "md", "csv"))
    print(report.render_markdown(rep))
    failed = [e for e in rep["datasets"] if e["status"] != "ok"]
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqstruct", description="Shuffle-based diagnostics of sequential structure in interaction logs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset statistics of a raw log")
    p.add_argument("--input", required=True)
    p.add_argument("--preprocess", action="store_true", help="apply the preprocessing pipeline first")
    _add_schema(p)
    _add_preprocess(p)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("preprocess", help="filter, sort and dedup a raw log into canonical TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_schema(p)
    _add_preprocess(p)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("split", help="temporal + leave-one-out split of a canonical log")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=float, default=0.9)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("rules", help="sequential rule counts before and after shuffling")
    p.add_argument("--input", required=True, help="canonical log")
    p.add_argument("--order", type=int, choices=(2, 3), default=2, help="n-gram length")
    p.add_argument("--min-support", type=int, default=5)
    p.add_argument("--min-confidence", type=float, default=0.1)
    p.add_argument("--seeds", type=_seeds, default=[0, 1, 2, 3, 4])
    p.add_argument("--dump", default=None, help="write qualifying rules to this JSON file")
    p.set_defaults(fn=cmd_rules)

    p = sub.add_parser("train", help="train one model on a saved split")
    p.add_argument("--split", required=True)
    p.add_argument("--arch", choices=("attention", "recurrent"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    for name, typ in (("hidden", int), ("blocks", int), ("heads", int), ("rnn_layers", int), ("max_len", int),
                      ("batch", int), ("lr", float), ("dropout", float), ("patience", int), ("max_epochs", int)):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="HR/NDCG of a checkpoint, optionally on shuffled inputs")
    p.add_argument("--split", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--on", choices=("val", "test"), default="test")
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("analyze", help="full analysis from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help=f"output directory (default: config, then ${cfgmod.OUTPUT_ENV})")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("synth", help="write a synthetic interaction log")
    p.add_argument("--kind", choices=("markov", "exchangeable"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-users", type=int, default=None)
    p.add_argument("--n-items", type=int, default=None)
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--dominant-prob", type=float, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("verify", help="re-derive report aggregates from per-seed artifacts")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("report", help="re-render tables from an existing report.json")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:  # config, parse, split and I/O errors
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
