"""Command line entry point: prepare, train, generate, evaluate, ablate.

Exit codes: 0 success, 1 contract violation or failed run, 2 configuration
error. Each command leaves a JSON run manifest next to its output.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .beam import generate as generate_one
from .corpus import Vocabulary, prepare, read_samples
from .errors import ConfigurationError, ContractViolation, DistractorGenError
from .metrics import (evaluate_run, format_table, read_generations,
                      references_from_samples)
from .model import VARIANTS
from .text import LexiconTagger

logger = logging.getLogger("distractorgen")

EXIT_OK, EXIT_CONTRACT, EXIT_CONFIG = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _WarningCounter(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.count = 0

    def emit(self, record):
        self.count += 1


def _resolve(path):
    """Relative input paths are taken from DG_DATA_ROOT when it is set."""
    if path is None:
        return None
    p = Path(path)
    root = os.environ.get("DG_DATA_ROOT")
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _write_json_atomic(path: Path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def _write_lines_atomic(path: Path, lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")
    tmp.replace(path)


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


# ---------------------------------------------------------------------------
# commands

def cmd_prepare(args):
    tagger = LexiconTagger.from_file(_resolve(args.pos_lexicon)) if args.pos_lexicon else None
    summary = prepare(_resolve(args.input), args.output, _resolve(args.embeddings),
                      seed=args.seed, min_weighted_freq=args.min_weighted_freq,
                      tagger=tagger, max_vocab=args.max_vocab,
                      embedding_dim=args.embedding_dim)
    logger.info("prepared %d samples (%d rejects)", summary["kept"], summary["rejects"])
    return {"seed": args.seed, "summary": summary}


def _load_prepared(data_dir: Path):
    for name in ("train.jsonl", "dev.jsonl", "vocab.txt", "embeddings.npy"):
        if not (data_dir / name).is_file():
            raise ConfigurationError(f"{data_dir / name} not found; run prepare first")
    vocab = Vocabulary.load(data_dir / "vocab.txt")
    emb = np.load(data_dir / "embeddings.npy")
    if emb.shape[0] != len(vocab):
        raise ConfigurationError("embedding rows do not match the vocabulary")
    return (read_samples(data_dir / "train.jsonl"), read_samples(data_dir / "dev.jsonl"),
            vocab, emb)


def run_training(config, data_dir: Path, out: Path):
    from .plotting import plot_training_curve
    from .training import format_config, train

    train_s, dev_s, vocab, emb = _load_prepared(data_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(config), encoding="utf-8")
    result = train(train_s, dev_s, vocab, config, embeddings=emb, out_dir=out)
    plot_training_curve(result.history, result.validations, out / "training_curve.png")
    return result


def cmd_train(args):
    from .training import config_hash, load_config

    config = load_config(_resolve(args.config))
    if args.seed is not None:
        config.seed = args.seed
    result = run_training(config, _resolve(args.data), Path(args.out))
    return {"seed": config.seed, "config_hash": config_hash(config),
            "best": result.best.format() if result.best else None}


def _one_per_question(samples):
    seen = OrderedDict()
    for s in samples:
        seen.setdefault(s.question_id, s)
    return list(seen.values())


def run_generation(checkpoint: Path, data: Path, out: Path, beam: int, max_len: int,
                   dump_attention: bool = False, limit=None):
    from .training import load_checkpoint

    if beam < 1:
        raise ConfigurationError(f"--beam must be at least 1, got {beam}")
    if max_len < 1:
        raise ConfigurationError(f"--max-len must be at least 1, got {max_len}")
    model, vocab, _ = load_checkpoint(checkpoint)
    questions = _one_per_question(read_samples(data))
    if limit:
        questions = questions[:limit]
    lines, dumps = [], []
    for s in questions:
        res = generate_one(model, s, vocab, k=beam, max_len=max_len)
        lines.append(json.dumps({
            "id": s.question_id,
            "distractors": [" ".join(d) for d in res.distractors],
            "log_likelihoods": [None if x is None else round(x, 6) for x in res.log_likelihoods],
            "diverse": res.diverse,
        }, ensure_ascii=False))
        if dump_attention:
            dumps.append(_attention_record(model, s, vocab, res))
    _write_lines_atomic(out, lines)
    if dump_attention:
        from .plotting import plot_static_attention
        _write_lines_atomic(_sidecar(out, ".attention.jsonl"),
                            [json.dumps(d, ensure_ascii=False) for d in dumps])
        plot_static_attention(dumps, _sidecar(out, ".attention.png"))
    return len(lines)


@torch.no_grad()
def _attention_record(model, sample, vocab, res):
    from .model import make_batch

    batch = make_batch([sample], vocab, model.config, with_targets=False)
    ctx = model.source_context(batch)
    rec = {"id": sample.question_id, "gamma": None, "tau": None}
    if ctx.static is not None:
        n = int(ctx.encoded.sentence_mask[0].sum())
        rec["gamma"] = [round(float(x), 6) for x in ctx.static.distribution[0, :n]]
        rec["tau"] = round(float(ctx.static.temperature[0]), 6)
    top = res.hypotheses[0]
    rec["d1"] = res.distractors[0]
    rec["d1_attention"] = [[round(float(x), 6) for x in a] for a in top.attention]
    return rec


def cmd_generate(args):
    n = run_generation(_resolve(args.checkpoint), _resolve(args.data), Path(args.out),
                       args.beam, args.max_len, args.dump_attention, args.limit)
    return {"questions": n}


def run_evaluation(hyp: Path, ref: Path, out: Path, system: str = "model",
                   rouge_measure: str = "recall"):
    from .plotting import plot_metric_reports

    report = evaluate_run(read_generations(hyp), references_from_samples(read_samples(ref)),
                          system=system, rouge_measure=rouge_measure)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.format_table(), encoding="utf-8")
    _write_lines_atomic(_sidecar(out, ".jsonl"), [json.dumps(r) for r in report.to_records()])
    plot_metric_reports({system: report}, _sidecar(out, ".png"))
    return report


def cmd_evaluate(args):
    report = run_evaluation(_resolve(args.hyp), _resolve(args.ref), Path(args.out),
                            args.system, args.rouge_measure)
    sys.stdout.write(report.format_table())
    return {"rows": len(report.rows)}


def cmd_ablate(args):
    from .plotting import plot_metric_reports
    from .training import load_config

    base = load_config(_resolve(args.config))
    if args.seed is not None:
        base.seed = args.seed
    data = _resolve(args.data)
    out = Path(args.out)
    eval_split = data / f"{args.split}.jsonl"
    if not eval_split.is_file():
        raise ConfigurationError(f"{eval_split} not found")
    reports = OrderedDict()
    try:
        for variant in VARIANTS:
            sub = out / variant
            config = type(base)(**{**base.to_dict(), "variant": variant})
            run_training(config, data, sub)
            run_generation(sub / "best.pt", eval_split, sub / "generated.jsonl",
                           args.beam, args.max_len)
            reports[variant] = run_evaluation(sub / "generated.jsonl", eval_split,
                                              sub / "report.txt", system=variant)
    finally:
        if reports:
            out.mkdir(parents=True, exist_ok=True)
            (out / "comparison.txt").write_text(format_table(reports), encoding="utf-8")
            _write_lines_atomic(out / "comparison.jsonl",
                                [json.dumps(r) for rep in reports.values()
                                 for r in rep.to_records()])
            plot_metric_reports(reports, out / "comparison.png")
    sys.stdout.write(format_table(reports))
    return {"variants": list(reports)}


# ---------------------------------------------------------------------------
# parser and dispatch

def build_parser():
    p = _Parser(prog="distractorgen", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("prepare", help="build splits, vocabulary and embeddings")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--min-weighted-freq", type=int, default=5)
    sp.add_argument("--pos-lexicon", help="token<TAB>tag file; default is a suffix tagger")
    sp.add_argument("--max-vocab", type=int, default=50000)
    sp.add_argument("--embedding-dim", type=int, default=300)
    sp.set_defaults(func=cmd_prepare, out_dir="output")

    sp = sub.add_parser("train", help="train one model variant")
    sp.add_argument("--config", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_train, out_dir="out")

    sp = sub.add_parser("generate", help="decode three distractors per question")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--beam", type=int, default=50)
    sp.add_argument("--max-len", type=int, default=15)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dump-attention", action="store_true")
    sp.add_argument("--limit", type=int)
    sp.set_defaults(func=cmd_generate, out_file="out")

    sp = sub.add_parser("evaluate", help="BLEU/ROUGE report against gold distractors")
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--system", default="model")
    sp.add_argument("--rouge-measure", choices=("recall", "f1"), default="recall")
    sp.set_defaults(func=cmd_evaluate, out_file="out")

    sp = sub.add_parser("ablate", help="train/generate/evaluate seq2seq, hred and full")
    sp.add_argument("--config", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split", default="test", choices=("dev", "test"))
    sp.add_argument("--beam", type=int, default=50)
    sp.add_argument("--max-len", type=int, default=15)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_ablate, out_dir="out")
    return p


def _manifest_path(args):
    if getattr(args, "out_dir", None):
        return Path(getattr(args, args.out_dir)) / "run_manifest.json"
    return _sidecar(Path(getattr(args, args.out_file)), ".manifest.json")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    counter = _WarningCounter()
    logging.getLogger().addHandler(counter)
    flags = {k: v for k, v in vars(args).items()
             if k not in ("func", "out_dir", "out_file") and not callable(v)}
    manifest = {
        "command": args.command,
        "flags": flags,
        "config_hash": hashlib.sha256(json.dumps(flags, sort_keys=True, default=str)
                                      .encode("utf-8")).hexdigest()[:16],
        "seed": flags.get("seed"),
        "tool_version": __version__,
        "data_root": os.environ.get("DG_DATA_ROOT"),
    }
    start = time.time()
    code = EXIT_OK
    try:
        manifest["result"] = args.func(args)
    except ConfigurationError as exc:
        code = EXIT_CONFIG
        manifest["error"] = str(exc)
    except (ContractViolation, DistractorGenError) as exc:
        code = EXIT_CONTRACT
        manifest["error"] = str(exc)
    except Exception as exc:  # still leave a manifest behind
        logger.exception("unexpected failure")
        code = EXIT_CONTRACT
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    finally:
        logging.getLogger().removeHandler(counter)
    result = manifest.get("result")
    if isinstance(result, dict):
        for key in ("config_hash", "seed"):
            if result.get(key) is not None:
                manifest[key] = result[key]
    if "error" in manifest:
        print(f"distractorgen {args.command}: {manifest['error']}", file=sys.stderr)
    manifest["exit_code"] = code
    manifest["wall_clock_seconds"] = round(time.time() - start, 3)
    manifest["warnings"] = counter.count
    try:
        _write_json_atomic(_manifest_path(args), manifest)
    except OSError as exc:
        print(f"could not write run manifest: {exc}", file=sys.stderr)
    return code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
