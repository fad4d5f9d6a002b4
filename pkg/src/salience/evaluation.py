"""Decision thresholds, classification metrics, and pairwise preference.

Predictions are ``score >= threshold``. AUC is the rank statistic
P(score_pos > score_neg) + 0.5 * P(tie) over all positive/negative pairs.

Threshold selection defaults to an exhaustive sweep over midpoints between
consecutive sorted unique scores (plus sentinels outside the range), which
is a global F1 maximum because F1 is piecewise constant in the threshold.
A bisection mode is kept for compatibility with setups that halve the
score interval toward the better-scoring side; it is not sound in general
because F1 is not unimodal in the threshold.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import Triple
from .errors import EvalError

BISECTION_ITERATIONS = 30


@dataclass(frozen=True)
class EvalReport:
    """Headline classification metrics at a fixed threshold."""

    f1: float
    accuracy: float
    auc: float
    threshold: float
    counts: tuple[int, int, int, int]  # (tp, fp, tn, fn)

    def to_dict(self) -> dict:
        return {
            "f1": self.f1,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "threshold": self.threshold,
            "counts": {
                "tp": self.counts[0],
                "fp": self.counts[1],
                "tn": self.counts[2],
                "fn": self.counts[3],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def format_table(self) -> str:
        tp, fp, tn, fn = self.counts
        lines = [
            f"{'metric':<12}{'value':>12}",
            f"{'f1':<12}{self.f1:>12.6f}",
            f"{'accuracy':<12}{self.accuracy:>12.6f}",
            f"{'auc':<12}{self.auc:>12.6f}",
            f"{'threshold':<12}{self.threshold:>12.6f}",
            f"counts      tp={tp} fp={fp} tn={tn} fn={fn}",
        ]
        return "\n".join(lines)


def _validate_scores_labels(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    if len(scores) != len(labels):
        raise EvalError(f"scores ({len(scores)}) and labels ({len(labels)}) differ in length")
    if len(scores) == 0:
        raise EvalError("need at least one instance")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if not np.all(np.isfinite(s)):
        raise EvalError("scores must be finite")
    if not np.all(np.isin(y, (0, 1))):
        raise EvalError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def f1_score(scores: Sequence[float], labels: Sequence[int], threshold: float) -> float:
    """F1 of the positive class; 0 when precision+recall is undefined."""
    s, y = _validate_scores_labels(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def auc_score(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based AUC with half credit for ties; 0.5 for single-class input."""
    s, y = _validate_scores_labels(scores, labels)
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        warnings.warn("AUC undefined for single-class labels; returning 0.5", stacklevel=2)
        return 0.5
    ranks = rankdata(s, method="average")
    rank_sum_pos = float(np.sum(ranks[y == 1]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _sweep_candidates(s: np.ndarray) -> np.ndarray:
    uniq = np.unique(s)
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return np.concatenate(([uniq[0] - 1.0], mids, [uniq[-1] + 1.0]))


def select_threshold(
    dev_scores: Sequence[float], dev_labels: Sequence[int], method: str = "sweep"
) -> float:
    """Pick the decision threshold maximizing dev F1.

    ``sweep`` checks every candidate (global maximum, smallest threshold on
    ties). ``bisection`` halves the score interval toward the half whose
    midpoint scores better, 30 iterations.
    """
    s, y = _validate_scores_labels(dev_scores, dev_labels)
    n_pos = int(np.sum(y == 1))
    if n_pos == len(y):
        warnings.warn("all labels positive; threshold placed below the minimum score", stacklevel=2)
        return float(s.min() - 1.0)
    if n_pos == 0:
        warnings.warn("all labels negative; returning the midpoint of the score range", stacklevel=2)
        return float((s.min() + s.max()) / 2.0)

    if method == "sweep":
        candidates = _sweep_candidates(s)
        f1s = np.array([f1_score(s, y, t) for t in candidates])
        best = np.flatnonzero(f1s == f1s.max())
        return float(candidates[best[0]])
    if method == "bisection":
        lo, hi = float(s.min()), float(s.max())
        for _ in range(BISECTION_ITERATIONS):
            mid = (lo + hi) / 2.0
            if f1_score(s, y, (lo + mid) / 2.0) >= f1_score(s, y, (mid + hi) / 2.0):
                hi = mid
            else:
                lo = mid
        return (lo + hi) / 2.0
    raise EvalError(f"unknown threshold method {method!r}")


def classification_metrics(
    scores: Sequence[float], labels: Sequence[int], threshold: float
) -> EvalReport:
    s, y = _validate_scores_labels(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    accuracy = (tp + tn) / len(y)
    return EvalReport(
        f1=f1_score(s, y, threshold),
        accuracy=accuracy,
        auc=auc_score(s, y),
        threshold=float(threshold),
        counts=(tp, fp, tn, fn),
    )


@dataclass(frozen=True)
class PreferencePair:
    """A human judgment that one triple outranks another on a dimension."""

    better: Triple
    worse: Triple
    dimension: str = "salience"

    def __post_init__(self) -> None:
        if self.dimension not in ("salience", "necessity", "sufficiency"):
            raise EvalError(f"unknown preference dimension {self.dimension!r}")
        if self.better == self.worse:
            raise EvalError("preference pair must involve two distinct triples")


@dataclass
class PprefReport:
    """Pairwise-preference precision plus the pairs that could not be scored."""

    precision: float
    pairs_evaluated: int
    excluded: list[tuple[int, str]]

    def __float__(self) -> float:
        return self.precision


def ppref_precision(
    scores: Mapping[tuple[str, str, str], object] | Callable[[Triple], object],
    pairs: Sequence[PreferencePair],
) -> PprefReport:
    """Fraction of pairs whose better triple scores strictly higher on the
    pair's dimension; ties earn nothing. Unscorable pairs are excluded and
    reported."""
    if not pairs:
        raise EvalError("need at least one preference pair")

    def lookup(triple: Triple):
        if callable(scores):
            return scores(triple)
        return scores.get(triple.key())

    correct = 0
    evaluated = 0
    excluded: list[tuple[int, str]] = []
    for i, pair in enumerate(pairs):
        a = lookup(pair.better)
        b = lookup(pair.worse)
        if a is None or b is None:
            missing = pair.better.key() if a is None else pair.worse.key()
            excluded.append((i, f"unscorable triple {missing}"))
            continue
        va = getattr(a, pair.dimension)
        vb = getattr(b, pair.dimension)
        evaluated += 1
        if va > vb:
            correct += 1
    if evaluated == 0:
        raise EvalError("no scorable preference pairs")
    return PprefReport(precision=correct / evaluated, pairs_evaluated=evaluated, excluded=excluded)
