"""Score one corpus split with a checkpoint and summarize the metrics."""

from __future__ import annotations

from pathlib import Path

from ..errors import InputError
from ..metrics import TdcfParams, compute_eer, compute_min_tdcf, write_scores
from .checkpoint import Checkpoint
from .corpus import Corpus
from .training import score_trials


def evaluate(ckpt: Checkpoint, corpus: Corpus, split="eval", mode="fix", tdcf_params: TdcfParams | None = None, out=None):
    """Score ``split`` in ``mode`` ('fix' or 'var').

    Writes ``out`` (score file) and its ``.labels`` companion when ``out`` is
    given.  Returns a report dict with the trial count, EER, its threshold
    and, when ``tdcf_params`` is supplied, the min t-DCF.
    """
    if split not in corpus.splits:
        raise InputError(f"corpus has no {split!r} split (available: {sorted(corpus.splits)})")
    model = ckpt.build_model()
    scores = score_trials(model, ckpt.config, corpus.trials(split), mode, ckpt.members or None)
    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_scores(out, scores, out.with_name(out.name + ".labels"))
    eer, threshold = compute_eer(scores)
    report = {"split": split, "mode": mode, "trials": len(scores), "eer": eer, "threshold": threshold}
    if tdcf_params is not None:
        report["min_tdcf"] = compute_min_tdcf(scores, tdcf_params)
    return report, scores
