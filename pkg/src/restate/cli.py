"""Command-line surface for the whole pipeline.

Subcommands: datagen, extract-constraints, train, rewrite, evaluate,
inspect-flags. Every run that writes files also drops a resolved-config
snapshot next to them, so any artifact can be regenerated from its
snapshot alone. Exit codes: 0 success, 2 validation problem (bad
arguments, malformed or misaligned inputs), 3 runtime failure (I/O,
checkpoint mismatch, training divergence).

Environment overrides: RESTATE_SEED, RESTATE_MODE, RESTATE_THRESHOLD_A,
RESTATE_THRESHOLD_B, RESTATE_STYLE, RESTATE_STYLE_TRIGGER,
RESTATE_DECODER and RESTATE_BEAM replace the defaults of the matching
options; explicit command-line flags always win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__, datagen
from .decode import run_decoder
from .evaluation import IdMismatch, build_report, text_table
from .flags import SatisfierConfig, replay_flags
from .flags import trace as flag_trace
from .model import (CheckpointVersionMismatch, ModelConfig, NonFiniteLoss,
                    Seq2SeqModel, TrainingConfig, TrainingExample,
                    example_from_record, train)
from .similarity import HashedNgramEmbedder, SpanSimilarity
from .treebank import extract_constraints, parse_bracketed
from .vocab import Vocabulary, tokenize

ENV_PREFIX = "RESTATE_"
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class MissingParse(ValueError):
    """Raised when an input record has neither parses nor constraints."""


def _env(option, fallback, cast=str):
    """Default for an option, overridable via RESTATE_<OPTION>."""
    raw = os.environ.get(ENV_PREFIX + option.upper().replace("-", "_"))
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError:
        raise ValueError("environment override %s%s=%r is not a valid %s"
                         % (ENV_PREFIX, option.upper().replace("-", "_"),
                            raw, cast.__name__))


def _read_jsonl(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def _write_jsonl(records, path):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _snapshot(args, path):
    """Record the fully resolved configuration next to the outputs."""
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    payload = {"command": args.command, "version": __version__,
               "resolved": resolved}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _satisfier(args):
    return SatisfierConfig(threshold_a=args.threshold_a,
                           threshold_b=args.threshold_b,
                           mode=args.mode,
                           style_enabled=args.style == "on",
                           style_trigger=args.style_trigger)


def _scorer_for(config):
    if config.mode == "semantic":
        return SpanSimilarity(HashedNgramEmbedder())
    return None


def _add_satisfier_args(p):
    p.add_argument("--mode", choices=("semantic", "lexical", "off"),
                   default=_env("mode", "semantic"),
                   help="constraint satisfaction rule (default %(default)s)")
    p.add_argument("--threshold-a", type=float,
                   default=_env("threshold-a", 0.8, float),
                   help="similarity floor a flip must exceed")
    p.add_argument("--threshold-b", type=float,
                   default=_env("threshold-b", 0.3, float),
                   help="similarity jump a flip must exceed")
    p.add_argument("--style", choices=("on", "off"),
                   default=_env("style", "off"),
                   help="track narrative-style flags (default %(default)s)")
    p.add_argument("--style-trigger",
                   choices=("first_person", "second_person"),
                   default=_env("style-trigger", "first_person"),
                   help="pronoun lexicon that drops style flags when emitted")


def _add_seed_arg(p):
    p.add_argument("--seed", type=int, default=_env("seed", 0, int),
                   help="root random seed (default %(default)s)")


def _instance_from_record(rec):
    """Accept a corpus record, extracting constraints if absent."""
    for key in ("id", "question", "answer", "context"):
        if key not in rec:
            raise MissingParse("record is missing %r" % key)
    d = dict(rec)
    if "constraints" not in d:
        if not d.get("question_parse") or not d.get("answer_parse"):
            raise MissingParse(
                "record %s carries neither constraints nor parses" % d["id"])
        cons = extract_constraints(parse_bracketed(d["question_parse"]),
                                   parse_bracketed(d["answer_parse"]))
        d["constraints"] = [{"tokens": list(c.tokens), "start": c.start,
                             "end": c.end, "label": c.label,
                             "source": c.source} for c in cons]
    for key, default in (("category", ""), ("polarity", ""), ("target", ""),
                         ("question_parse", ""), ("answer_parse", ""),
                         ("domain", ""), ("split", "")):
        d.setdefault(key, default)
    return datagen.instance_from_json(d)


def _filter_split(records, split):
    if not split or split == "all":
        return records
    return [r for r in records if r.get("split") == split]


# ---------------------------------------------------------------------------
# subcommands


def _parse_mix(text):
    mix = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise datagen.InvalidMix("mix entries look like category=share,"
                                     " got %r" % part)
        cat, share = part.split("=", 1)
        try:
            mix[cat.strip()] = float(share)
        except ValueError:
            raise datagen.InvalidMix("share %r is not a number" % share)
    return mix


def cmd_datagen(args):
    sizes = (args.train_size, args.dev_size, args.test_size)
    mix = _parse_mix(args.mix) if args.mix else None
    instances = datagen.build_corpus(args.seed, sizes, mix,
                                     args.first_person_rate)
    os.makedirs(args.out, exist_ok=True)
    files = {}
    for name in datagen.SPLIT_NAMES:
        path = os.path.join(args.out, name + ".jsonl")
        datagen.write_corpus(datagen.split_of(instances, name), path)
        files[name] = os.path.basename(path)
    counts = {}
    for inst in instances:
        counts[inst.category] = counts.get(inst.category, 0) + 1
    manifest = {"seed": args.seed, "sizes": list(sizes),
                "first_person_rate": args.first_person_rate,
                "category_counts": counts, "files": files}
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _snapshot(args, os.path.join(args.out, "config.json"))
    print("wrote %d instances to %s" % (len(instances), args.out))
    return EXIT_OK


def cmd_extract_constraints(args):
    records = _read_jsonl(args.input)
    out = []
    for rec in records:
        inst = _instance_from_record(rec)
        out.append({"id": inst.id,
                    "constraints": [{"tokens": list(c.tokens),
                                     "start": c.start, "end": c.end,
                                     "label": c.label, "source": c.source}
                                    for c in inst.constraints]})
    _write_jsonl(out, args.out)
    _snapshot(args, args.out + ".config.json")
    print("extracted constraints for %d records -> %s"
          % (len(out), args.out))
    return EXIT_OK


def cmd_train(args):
    records = _read_jsonl(args.input)
    all_mrs = [datagen.model_record(_instance_from_record(r))
               for r in records]
    keep = {r["id"] for r in _filter_split(records, args.split)}
    model_records = [mr for mr in all_mrs if mr["id"] in keep]
    if not model_records:
        raise ValueError("no records in split %r" % args.split)
    # the vocabulary covers the whole file, not just the training split,
    # so later rewriting of held-out records never meets an unknown token
    pool_lists = []
    for mr in all_mrs:
        pool_lists.append(mr["x_tokens"])
        pool_lists.append(mr["target_tokens"])
    vocab = Vocabulary.build(pool_lists)
    config = _satisfier(args)
    scorer = _scorer_for(config)
    examples = []
    for rec in model_records:
        if config.mode == "off":
            examples.append(TrainingExample(rec["x_tokens"],
                                            rec["target_tokens"], None))
        else:
            examples.append(example_from_record(rec, config, scorer))
    model_cfg = ModelConfig(dim=args.dim, heads=args.heads,
                            enc_layers=args.enc_layers,
                            dec_layers=args.dec_layers, ff=args.ff,
                            max_len=args.max_len, seed=args.seed)
    model = Seq2SeqModel(model_cfg, vocab)
    train_cfg = TrainingConfig(lr=args.lr, batch_size=args.batch_size,
                               epochs=args.epochs, seed=args.seed)
    log_rows = train(model, examples, train_cfg)
    model.save(args.out)
    log_path = args.out + ".loss.txt"
    with open(log_path, "w") as fh:
        for epoch, step, loss in log_rows:
            fh.write("%d\t%d\t%.10f\n" % (epoch, step, loss))
    _snapshot(args, args.out + ".config.json")
    final = log_rows[-1][2] if log_rows else float("nan")
    print("trained on %d examples, final mean loss %.4f -> %s"
          % (len(examples), final, args.out))
    return EXIT_OK


def cmd_rewrite(args):
    model = Seq2SeqModel.load(args.checkpoint)
    records = _filter_split(_read_jsonl(args.input), args.split)
    if not records:
        raise ValueError("no records to rewrite in split %r" % args.split)
    config = _satisfier(args)
    scorer = _scorer_for(config)
    trace_dir = args.out + ".traces" if args.trace else None
    if trace_dir:
        os.makedirs(trace_dir, exist_ok=True)
    reports = []
    for rec in records:
        inst = _instance_from_record(rec)
        mr = datagen.model_record(inst)
        result = run_decoder(args.decoder, model, mr["x_tokens"],
                             mr["constraint_rows"], config, scorer=scorer,
                             beam_size=args.beam, alpha=args.alpha,
                             max_len=args.max_len)
        trace_path = None
        if trace_dir:
            trace_path = os.path.join(trace_dir, inst.id + ".tsv")
            with open(trace_path, "w") as fh:
                fh.write(flag_trace(result.tracker.m, fmt="tsv"))
        reports.append({
            "id": inst.id,
            "output_tokens": result.tokens,
            "score": result.score,
            "constraints_satisfied": int(sum(result.satisfied)),
            "flag_trace_path": trace_path,
            "normalized_score": result.normalized_score,
            "finished": result.finished,
            "unsatisfiable": result.unsatisfiable,
            "mode": config.mode,
            "decoder": args.decoder,
        })
    _write_jsonl(reports, args.out)
    _snapshot(args, args.out + ".config.json")
    print("rewrote %d records -> %s" % (len(reports), args.out))
    return EXIT_OK


def cmd_evaluate(args):
    outputs = _read_jsonl(args.outputs)
    gold = _filter_split(_read_jsonl(args.gold), args.split)
    instances = [_instance_from_record(r) for r in gold]
    report = build_report(outputs, instances)
    with open(args.out, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    table = text_table({args.system: report})
    with open(args.out + ".txt", "w") as fh:
        fh.write(table)
    _snapshot(args, args.out + ".config.json")
    print(table, end="")
    return EXIT_OK


def cmd_inspect_flags(args):
    records = _read_jsonl(args.input)
    match = [r for r in records if r.get("id") == args.id]
    if not match:
        raise ValueError("no record with id %r in %s" % (args.id, args.input))
    inst = _instance_from_record(match[0])
    mr = datagen.model_record(inst)
    if args.output:
        output_tokens = tokenize(args.output)
    else:
        output_tokens = mr["target_tokens"]
    if not output_tokens:
        raise ValueError("record has no target and no --output was given")
    config = _satisfier(args)
    m = replay_flags(mr["x_tokens"], [tuple(r) for r in mr["constraint_rows"]],
                     output_tokens, config, scorer=_scorer_for(config))
    text = flag_trace(m, fmt=args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        _snapshot(args, args.out + ".config.json")
        print("wrote flag trace -> %s" % args.out)
    else:
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="restate",
        description="rewrite polar question-answer pairs into standalone"
                    " statements",
        epilog="environment overrides: RESTATE_SEED, RESTATE_MODE,"
               " RESTATE_THRESHOLD_A, RESTATE_THRESHOLD_B, RESTATE_STYLE,"
               " RESTATE_STYLE_TRIGGER, RESTATE_DECODER, RESTATE_BEAM")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    _add_seed_arg(p)
    p.add_argument("--train-size", type=int, default=1000)
    p.add_argument("--dev-size", type=int, default=100)
    p.add_argument("--test-size", type=int, default=400)
    p.add_argument("--mix", default="",
                   help="category shares, e.g. explanation=0.4,condition=0.6")
    p.add_argument("--first-person-rate", type=float, default=0.3)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("extract-constraints",
                       help="extract constraint phrases from parses")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--out", required=True, help="constraints JSONL")
    p.set_defaults(func=cmd_extract_constraints)

    p = sub.add_parser("train", help="train a rewriter")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--split", default="train",
                   help="split to train on, or 'all' (default train)")
    _add_seed_arg(p)
    _add_satisfier_args(p)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--enc-layers", type=int, default=2)
    p.add_argument("--dec-layers", type=int, default=2)
    p.add_argument("--ff", type=int, default=128)
    p.add_argument("--max-len", type=int, default=96)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rewrite", help="decode statements for a corpus")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--checkpoint", required=True, help="model .npz")
    p.add_argument("--out", required=True, help="decode reports JSONL")
    p.add_argument("--split", default="",
                   help="restrict to one split (default: every record)")
    _add_satisfier_args(p)
    p.add_argument("--decoder", choices=("greedy", "beam", "cbs"),
                   default=_env("decoder", "greedy"))
    p.add_argument("--beam", type=int, default=_env("beam", 4, int),
                   help="beam width for beam/cbs decoding")
    p.add_argument("--alpha", type=float, default=0.7,
                   help="length-normalization exponent")
    p.add_argument("--max-len", type=int, default=48,
                   help="decode budget in tokens")
    p.add_argument("--trace", action="store_true",
                   help="write a flag-matrix trace file per instance")
    p.set_defaults(func=cmd_rewrite)

    p = sub.add_parser("evaluate", help="score decode reports against gold")
    p.add_argument("--outputs", required=True, help="decode reports JSONL")
    p.add_argument("--gold", required=True, help="corpus JSONL")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--split", default="",
                   help="restrict gold to one split before aligning")
    p.add_argument("--system", default="system",
                   help="row label in the text table")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect-flags",
                       help="replay and print a flag matrix for one record")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--id", required=True, help="record id to inspect")
    p.add_argument("--output", default="",
                   help="output text to replay (default: the gold target)")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.add_argument("--out", default="", help="write the trace here instead"
                                             " of stdout")
    _add_satisfier_args(p)
    p.set_defaults(func=cmd_inspect_flags)
    return parser


def main(argv=None):
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
    except ValueError as exc:  # bad environment override
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse already printed its message
        return 0 if exc.code is None else int(exc.code)
    try:
        return args.func(args)
    except (datagen.InvalidMix, MissingParse, IdMismatch, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, CheckpointVersionMismatch, NonFiniteLoss,
            FloatingPointError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
