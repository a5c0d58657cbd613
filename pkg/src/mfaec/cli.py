"""Command-line entry point: ``mfaec {gen-data,align,train,eval,ablate}``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import align as al
from .harness import (
    ablate,
    evaluate,
    load_checkpoint,
    load_train_config,
    save_checkpoint,
    train,
    write_metrics_csv,
)
from .kvconfig import from_kv, read_kv
from .synthdata import CorpusSpec, CorruptionSpec, build_examples, write_corpus


def _read_token_file(path) -> dict[str, list[str]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            uid, _, text = line.partition("\t")
            if uid in out:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {uid!r}")
            out[uid] = text.split()
    return out


def cmd_gen_data(args):
    spec_kv = read_kv(args.spec) if args.spec else {}
    corrupt_kv = read_kv(args.corrupt) if args.corrupt else {}
    if args.seed is not None:
        spec_kv["seed"] = corrupt_kv["seed"] = str(args.seed)
    spec = from_kv(CorpusSpec, spec_kv)
    corrupt_kv.setdefault("vocab_size", str(spec.vocab_size))
    corrupt_kv.setdefault("seed", str(spec.seed))
    corruption = from_kv(CorruptionSpec, corrupt_kv)
    write_corpus(build_examples(spec, corruption, args.n), args.out)


def cmd_align(args):
    hyps, refs = _read_token_file(args.hyp), _read_token_file(args.ref)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for uid, ref in refs.items():
            if uid not in hyps:
                raise ValueError(f"utterance {uid!r} missing from {args.hyp}")
            try:
                labeling = al.label_edits(hyps[uid], ref)
            except al.UnalignableError:
                print(f"{uid}\tUNALIGNABLE\t", file=out)
                continue
            print(al.format_alignment(uid, labeling), file=out)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_train(args):
    cfg = load_train_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.eval_data:
        cfg.eval_data = args.eval_data
    result = train(cfg, args.data or cfg.train_data)
    save_checkpoint(result.checkpoint, args.out)
    if args.metrics:
        rows = [m.row(cfg.run_id, cfg.mode, cfg.seed) for m in result.metrics]
        write_metrics_csv(args.metrics, rows, cfg.model.n_emotions)
    if result.metrics:
        print(f"final epoch {result.metrics[-1].epoch}: UAR {result.metrics[-1].uar:.4f}")


def cmd_eval(args):
    ckpt = load_checkpoint(args.ckpt, strip_aux=args.strip_aux)
    report = evaluate(ckpt, args.data, mode=args.mode, workers=args.workers)
    meta = ckpt.meta
    row = report.row(meta.get("run_id", "eval"), args.mode or ckpt.mode, meta.get("seed", 0))
    if args.metrics:
        write_metrics_csv(args.metrics, [row], ckpt.config.n_emotions)
    print(f"UAR {report.uar:.4f}")
    print("confusion (rows = gold):")
    for r in report.confusion:
        print("  " + " ".join(f"{v:5d}" for v in r))


def cmd_ablate(args):
    cfg = load_train_config(args.config)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    table = ablate(cfg, modes, seeds, args.data or cfg.train_data,
                   args.eval_data or cfg.eval_data, out_csv=args.out)
    print(table.format())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfaec", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--spec", help="corpus spec (key = value)")
    p.add_argument("--corrupt", help="corruption spec (key = value)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("align", help="label ASR hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True)
    p.add_argument("--data")
    p.add_argument("--eval-data")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics")
    p.add_argument("--mode")
    p.add_argument("--strip-aux", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate ablation modes over seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--modes", default="full,no-aed,no-aec,no-mf")
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--data")
    p.add_argument("--eval-data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as err:  # every failure maps to a nonzero exit
        print(f"mfaec {args.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
