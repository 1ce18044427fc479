"""Command line entry point: ``kanspoof <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import KanSpoofError
from ..metrics import TdcfParams, compute_eer, compute_min_tdcf, read_scores
from . import config as cfgio
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import CorpusSpec, generate_corpus, load_corpus, save_corpus
from .evaluation import evaluate
from .training import TrainConfig, train

log = logging.getLogger("kanspoof")


def _tdcf(path):
    return None if path is None else cfgio.load(path, TdcfParams)


def cmd_gen_data(args):
    spec = cfgio.load(args.spec, CorpusSpec) if args.spec else CorpusSpec()
    corpus = generate_corpus(spec, args.seed)
    out = save_corpus(corpus, args.out)
    sizes = ", ".join(f"{split} {len(trials)}" for split, trials in corpus.splits.items())
    print(f"wrote corpus to {out} ({sizes})")


def cmd_train(args):
    config = cfgio.load(args.config, TrainConfig)
    corpus = load_corpus(args.data, ["train", "dev"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfgio.dumps(config), encoding="utf-8")
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:

        def record(entry):
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()

        result = train(config, corpus, epoch_callback=record)
    ckpt = Checkpoint.from_model(result.model, config, result.best_epoch, result.best_dev_loss, result.members)
    save_checkpoint(out / "model.ckpt", ckpt)
    print(
        f"trained {result.epochs_run - 1} epochs; best epoch {result.best_epoch} "
        f"dev loss {result.best_dev_loss:.5f}; checkpoint {out / 'model.ckpt'}"
    )


def _print_report(report):
    print(f"trials {report['trials']}")
    print(f"eer {report['eer']:.6f} ({100 * report['eer']:.2f}%)")
    if "threshold" in report:
        print(f"threshold {report['threshold']:.17g}")
    if "min_tdcf" in report:
        print(f"min_tdcf {report['min_tdcf']:.6f}")


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.data, [args.split])
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / f"scores_{args.split}_{args.mode}.txt"
    report, _ = evaluate(ckpt, corpus, args.split, args.mode, _tdcf(args.tdcf_params), out)
    print(f"scores {out}")
    _print_report(report)


def cmd_metrics(args):
    scores = read_scores(args.scores, args.labels)
    eer, threshold = compute_eer(scores)
    report = {"trials": len(scores), "eer": eer, "threshold": threshold}
    params = _tdcf(args.tdcf_params)
    if params is not None:
        report["min_tdcf"] = compute_min_tdcf(scores, params)
    _print_report(report)


def cmd_gradcheck(args):
    from .gradcheck import run

    failed = False
    for name, (err, bound) in run(args.module, args.configs).items():
        ok = err < bound
        failed |= not ok
        print(f"{name} max_rel_error {err:.3e} bound {bound:.0e} {'ok' if ok else 'FAIL'}")
    if failed:
        raise KanSpoofError("gradient check exceeded its bound")


def build_parser():
    parser = argparse.ArgumentParser(prog="kanspoof", description="GR-KAN speech spoofing detection toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic bonafide/spoof corpus")
    p.add_argument("--spec", help="corpus spec file (key = value); defaults when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a detector on a generated corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a corpus split with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="eval")
    p.add_argument("--mode", choices=("fix", "var"), default="fix")
    p.add_argument("--tdcf-params")
    p.add_argument("--out", help="score file (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="EER / min t-DCF of an existing score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--tdcf-params")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("gradcheck", help="finite-difference audit of layer gradients")
    p.add_argument("--module", choices=("all", "kan", "grkan", "model"), default="all")
    p.add_argument("--configs", type=int, default=10, help="random configurations per module")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (KanSpoofError, OSError) as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"kanspoof {args.command}: error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
