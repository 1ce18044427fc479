"""Countermeasure scoring: DET operating points, EER, min t-DCF and score files.

A trial is accepted as bonafide iff ``score >= threshold``.  Thresholds are
``-inf``, the midpoints between adjacent distinct scores, and ``+inf``, so
every distinct operating point appears exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ContractError, MetricError, ParseError

LABELS = ("bonafide", "spoof")


@dataclass
class TrialScores:
    trial_ids: list
    scores: np.ndarray
    labels: list

    def __post_init__(self):
        self.trial_ids = [str(t) for t in self.trial_ids]
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.labels = list(self.labels)
        if not len(self.trial_ids) == len(self.scores) == len(self.labels):
            raise ContractError("trial ids, scores and labels must have equal length")
        if len(set(self.trial_ids)) != len(self.trial_ids):
            raise ContractError("trial ids must be unique")
        if not np.all(np.isfinite(self.scores)):
            raise ContractError("scores must be finite")
        bad = [label for label in self.labels if label not in LABELS]
        if bad:
            raise ContractError(f"unknown label {bad[0]!r}; expected one of {LABELS}")

    @classmethod
    def from_arrays(cls, bonafide, spoof):
        bonafide, spoof = list(bonafide), list(spoof)
        ids = [f"b{i}" for i in range(len(bonafide))] + [f"s{i}" for i in range(len(spoof))]
        return cls(ids, bonafide + spoof, ["bonafide"] * len(bonafide) + ["spoof"] * len(spoof))

    def __len__(self):
        return len(self.trial_ids)

    def __eq__(self, other):
        if not isinstance(other, TrialScores):
            return NotImplemented
        return (
            self.trial_ids == other.trial_ids
            and self.labels == other.labels
            and np.array_equal(self.scores, other.scores)
        )

    @property
    def is_bonafide(self):
        return np.array([label == "bonafide" for label in self.labels], dtype=bool)

    def split(self):
        mask = self.is_bonafide
        return self.scores[mask], self.scores[~mask]


def _class_scores(scores: TrialScores):
    bonafide, spoof = scores.split()
    if len(bonafide) == 0 or len(spoof) == 0:
        raise MetricError(f"need both classes, got {len(bonafide)} bonafide and {len(spoof)} spoof trials")
    return bonafide, spoof


def _operating_counts(scores: TrialScores):
    """Thresholds with (spoof accepted, bonafide rejected) counts, plus class sizes."""
    bonafide, spoof = _class_scores(scores)
    distinct = np.unique(scores.scores)
    thresholds = np.concatenate([[-np.inf], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf]])
    bona_sorted = np.sort(bonafide)
    spoof_sorted = np.sort(spoof)
    misses = np.searchsorted(bona_sorted, thresholds, side="left")
    false_alarms = len(spoof) - np.searchsorted(spoof_sorted, thresholds, side="left")
    return thresholds, false_alarms, misses, len(spoof), len(bonafide)


def det_curve(scores: TrialScores):
    """List of (threshold, false-alarm rate, miss rate), thresholds ascending."""
    thresholds, fa, miss, n_spoof, n_bona = _operating_counts(scores)
    return [(float(t), int(f) / n_spoof, int(m) / n_bona) for t, f, m in zip(thresholds, fa, miss)]


def compute_eer(scores: TrialScores):
    """Equal error rate and the threshold where it occurs.

    Without an exact crossing, the EER is the exact intersection of the DET
    segment joining the two operating points that bracket it with the line
    FA = miss; the threshold is interpolated the same way (or the finite
    neighbouring threshold when one side is a sentinel).
    """
    thresholds, fa, miss, n_spoof, n_bona = _operating_counts(scores)
    far = [Fraction(int(f), n_spoof) for f in fa]
    mr = [Fraction(int(m), n_bona) for m in miss]
    j = next(i for i in range(len(far)) if far[i] <= mr[i])
    if far[j] == mr[j]:
        eer, t = far[j], thresholds[j]
        if not np.isfinite(t):
            t = scores.scores.min() if t < 0 else scores.scores.max()
        return float(eer), float(t)
    d0, d1 = far[j - 1] - mr[j - 1], far[j] - mr[j]
    eer = (mr[j] * far[j - 1] - mr[j - 1] * far[j]) / (d0 - d1)
    t0, t1 = thresholds[j - 1], thresholds[j]
    if np.isfinite(t0) and np.isfinite(t1):
        s = float(d0 / (d0 - d1))
        t = t0 + s * (t1 - t0)
    elif np.isfinite(t0) or np.isfinite(t1):
        t = t0 if np.isfinite(t0) else t1
    else:
        t = float(scores.scores[0])
    return float(eer), float(t)


@dataclass
class TdcfParams:
    """Cost model for the normalized tandem detection cost.

    The priors and costs default to the ASVspoof 2021 LA evaluation
    constants.  The ASV operating point is an illustrative fixed input;
    supply the real ASV error rates for the system the CM protects.
    """

    p_target: float = 0.9405
    p_nontarget: float = 0.0095
    p_spoof: float = 0.05
    c_miss: float = 1.0
    c_fa: float = 10.0
    asv_p_miss: float = 0.01
    asv_p_fa: float = 0.01
    asv_p_spoof_fa: float = 0.30

    def validate(self):
        priors = (self.p_target, self.p_nontarget, self.p_spoof)
        if any(p <= 0 for p in priors) or not math.isclose(sum(priors), 1.0, abs_tol=1e-9):
            raise ContractError(f"priors must be positive and sum to 1, got {priors}")
        if self.c_miss <= 0 or self.c_fa <= 0:
            raise ContractError("costs must be positive")
        for name in ("asv_p_miss", "asv_p_fa", "asv_p_spoof_fa"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        c1, c2 = self.weights()
        if c1 <= 0 or c2 <= 0:
            raise ContractError(f"cost weights must be positive, got C1={c1:.4g}, C2={c2:.4g}")
        return self

    def weights(self):
        """(C1, C2): cost per unit CM miss rate and per unit CM false-alarm rate."""
        c1 = self.p_target * self.c_miss - (
            self.p_target * self.c_miss * self.asv_p_miss + self.p_nontarget * self.c_fa * self.asv_p_fa
        )
        c2 = self.c_fa * self.p_spoof * self.asv_p_spoof_fa
        return c1, c2


def tdcf_curve(scores: TrialScores, params: TdcfParams | None = None):
    """Normalized t-DCF at every DET operating point."""
    params = (params or TdcfParams()).validate()
    c1, c2 = params.weights()
    _, fa, miss, n_spoof, n_bona = _operating_counts(scores)
    return (c1 * (miss / n_bona) + c2 * (fa / n_spoof)) / min(c1, c2)


def compute_min_tdcf(scores: TrialScores, params: TdcfParams | None = None):
    """Minimum over thresholds of (C1 * P_miss + C2 * P_fa) / min(C1, C2)."""
    return float(np.min(tdcf_curve(scores, params)))


# -- files -----------------------------------------------------------------------
def write_scores(path, scores: TrialScores, labels_path=None):
    """Write ``trial_id score`` lines; optionally the companion label file."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tid, s in zip(scores.trial_ids, scores.scores):
            fh.write(f"{tid} {float(s):.17g}\n")
    if labels_path is not None:
        write_labels(labels_path, scores.trial_ids, scores.labels)


def write_labels(path, trial_ids, labels):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tid, label in zip(trial_ids, labels):
            fh.write(f"{tid} {label}\n")


def _read_pairs(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected 2 fields, got {len(parts)}", path, lineno)
            yield lineno, parts[0], parts[1]


def read_labels(path):
    labels = {}
    for lineno, tid, label in _read_pairs(path):
        if label not in LABELS:
            raise ParseError(f"unknown label {label!r}", path, lineno)
        if tid in labels:
            raise ParseError(f"duplicate trial id {tid!r}", path, lineno)
        labels[tid] = label
    return labels


def read_scores(path, labels_path):
    """Join a score file with its label file into :class:`TrialScores` (score-file order)."""
    labels = read_labels(labels_path)
    ids, values, classes = [], [], []
    seen = set()
    for lineno, tid, raw in _read_pairs(path):
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(f"score {raw!r} is not a number", path, lineno) from None
        if not math.isfinite(value):
            raise ParseError(f"score {raw!r} is not finite", path, lineno)
        if tid in seen:
            raise ParseError(f"duplicate trial id {tid!r}", path, lineno)
        if tid not in labels:
            raise ParseError(f"trial {tid!r} has no label", path, lineno)
        seen.add(tid)
        ids.append(tid)
        values.append(value)
        classes.append(labels[tid])
    return TrialScores(ids, values, classes)
