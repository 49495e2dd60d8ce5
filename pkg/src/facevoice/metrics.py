"""Verification and matching metrics.

Scores mean "higher is more same-speaker"; a trial counts as accepted when its
score is greater than or equal to the threshold. The false-positive rate is the
fraction of different-speaker trials accepted, the false-negative rate the
fraction of same-speaker trials rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class ScoredTrials:
    """Verification trial scores with ground-truth same-speaker labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=bool)
        if scores.ndim != 1 or labels.ndim != 1:
            raise InvalidArgumentError("scores and labels must be 1-D")
        if scores.shape != labels.shape:
            raise InvalidArgumentError(
                f"scores and labels lengths differ: {scores.shape} vs {labels.shape}"
            )
        if scores.size < 1:
            raise InvalidArgumentError("need at least one trial")
        if not np.all(np.isfinite(scores)):
            raise InvalidArgumentError("scores must be finite")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.labels))

    @property
    def n_negative(self) -> int:
        return int(self.labels.size - self.n_positive)


def _require_both_classes(trials: ScoredTrials) -> None:
    if trials.n_positive == 0 or trials.n_negative == 0:
        raise InvalidArgumentError(
            "need at least one positive and one negative trial, got "
            f"{trials.n_positive} positives / {trials.n_negative} negatives"
        )


def roc_curve(trials: ScoredTrials) -> list[tuple[float, float, float]]:
    """Operating points ``(threshold, fpr, fnr)`` sorted by ascending threshold.

    One point per distinct score value plus sentinels at -inf (accept all) and
    +inf (reject all).
    """
    _require_both_classes(trials)
    pos = np.sort(trials.scores[trials.labels])
    neg = np.sort(trials.scores[~trials.labels])
    thresholds = np.unique(trials.scores)

    points = [(-math.inf, 1.0, 0.0)]
    for t in thresholds:
        fpr = (neg.size - np.searchsorted(neg, t, side="left")) / neg.size
        fnr = np.searchsorted(pos, t, side="left") / pos.size
        points.append((float(t), float(fpr), float(fnr)))
    points.append((math.inf, 0.0, 1.0))
    return points


def eer(trials: ScoredTrials) -> tuple[float, float]:
    """Equal error rate and the threshold where it occurs.

    Walks the ROC curve for the crossing of the false-positive and
    false-negative rates and linearly interpolates between the two points that
    straddle it. fpr - fnr is non-increasing along the curve, so the first sign
    change is the crossing; the result is deterministic.
    """
    curve = roc_curve(trials)
    diffs = [fpr - fnr for _, fpr, fnr in curve]
    for k, d in enumerate(diffs):
        if d == 0.0:
            return curve[k][1], curve[k][0]
        if d < 0.0:
            t_lo, fpr_lo, fnr_lo = curve[k - 1]
            t_hi, fpr_hi, fnr_hi = curve[k]
            lam = diffs[k - 1] / (diffs[k - 1] - diffs[k])
            rate = fpr_lo + lam * (fpr_hi - fpr_lo)
            if math.isinf(t_lo):
                threshold = t_hi
            elif math.isinf(t_hi):
                threshold = t_lo
            else:
                threshold = t_lo + lam * (t_hi - t_lo)
            return rate, threshold
    raise AssertionError("ROC curve had no fpr/fnr crossing")  # pragma: no cover


def auc(trials: ScoredTrials) -> float:
    """Area under the ROC curve via the rank-sum statistic.

    Equals the probability that a random positive outscores a random negative,
    ties counting one half; O(n log n).
    """
    _require_both_classes(trials)
    scores = trials.scores
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]

    # Midranks: every member of a tie group gets the group's average 1-based rank.
    new_group = np.empty(scores.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = sorted_scores[1:] != sorted_scores[:-1]
    group_id = np.cumsum(new_group) - 1
    first = np.nonzero(new_group)[0]
    counts = np.diff(np.append(first, scores.size))
    midrank_of_group = first + (counts + 1) / 2.0
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = midrank_of_group[group_id]

    n_pos = trials.n_positive
    n_neg = trials.n_negative
    u = ranks[trials.labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def matching_accuracy(outcomes: list[tuple[int, int]], n_c: int | None = None) -> float:
    """Fraction of matching trials where the predicted gallery index is correct."""
    if not outcomes:
        raise InvalidArgumentError("need at least one matching outcome")
    if n_c is not None:
        for predicted, true in outcomes:
            if not (0 <= predicted < n_c and 0 <= true < n_c):
                raise InvalidArgumentError(
                    f"outcome ({predicted}, {true}) out of range for gallery size {n_c}"
                )
    hits = sum(1 for predicted, true in outcomes if predicted == true)
    return hits / len(outcomes)


@dataclass
class MetricsReport:
    """Evaluation results plus the run metadata needed to reproduce them.

    ``eer``/``auc``/``eer_threshold`` are None for matching-only reports and
    ``matching_accuracy`` is empty for verification-only ones. ``n_trials``
    holds one count per evaluated task, e.g. ``{"verification": 2000}`` or
    ``{"matching_2": 1000}``.
    """

    eer: float | None = None
    auc: float | None = None
    eer_threshold: float | None = None
    matching_accuracy: dict[int, float] = field(default_factory=dict)
    n_trials: dict[str, int] = field(default_factory=dict)
    seed: int | None = None
    config_digest: str | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, rate in (("eer", self.eer), ("auc", self.auc)):
            if rate is not None and not (0.0 <= rate <= 1.0):
                raise InvalidArgumentError(f"{name} must be in [0, 1], got {rate}")
        for n_c, acc in self.matching_accuracy.items():
            if not (0.0 <= acc <= 1.0):
                raise InvalidArgumentError(
                    f"matching accuracy for n_c={n_c} must be in [0, 1], got {acc}"
                )

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "eer": self.eer,
            "auc": self.auc,
            "eer_threshold": self.eer_threshold,
            "matching_accuracy": {str(k): v for k, v in sorted(self.matching_accuracy.items())},
            "n_trials": dict(sorted(self.n_trials.items())),
            "seed": self.seed,
            "config_digest": self.config_digest,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "MetricsReport":
        return cls(
            eer=doc.get("eer"),
            auc=doc.get("auc"),
            eer_threshold=doc.get("eer_threshold"),
            matching_accuracy={int(k): v for k, v in doc.get("matching_accuracy", {}).items()},
            n_trials=dict(doc.get("n_trials", {})),
            seed=doc.get("seed"),
            config_digest=doc.get("config_digest"),
            metadata=doc.get("metadata", {}),
        )


def report_json(report: MetricsReport) -> str:
    """Deterministic JSON serialization (sorted keys, no whitespace drift)."""
    return json.dumps(report.to_json_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def write_report_json(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_json(report))


def load_report_json(path) -> MetricsReport:
    with open(path, "r", encoding="utf-8") as fh:
        return MetricsReport.from_json_dict(json.load(fh))


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv(report: MetricsReport) -> str:
    """Flatten the report to a single header+row CSV for run aggregation."""
    columns: list[tuple[str, Any]] = [
        ("eer", report.eer),
        ("auc", report.auc),
        ("eer_threshold", report.eer_threshold),
    ]
    for n_c in sorted(report.matching_accuracy):
        columns.append((f"acc_{n_c}", report.matching_accuracy[n_c]))
    for key in sorted(report.n_trials):
        columns.append((f"n_{key}", report.n_trials[key]))
    columns.append(("seed", report.seed))
    columns.append(("config_digest", report.config_digest))
    header = ",".join(name for name, _ in columns)
    row = ",".join(_csv_cell(value) for _, value in columns)
    return header + "\n" + row + "\n"


def write_report_csv(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report_csv(report))


def matching_curve_csv(accuracy_by_gallery_size: dict[int, float]) -> str:
    """Two-column ``n_c,accuracy`` CSV, ascending by gallery size (plot-ready)."""
    lines = ["n_c,accuracy"]
    for n_c in sorted(accuracy_by_gallery_size):
        lines.append(f"{n_c},{repr(float(accuracy_by_gallery_size[n_c]))}")
    return "\n".join(lines) + "\n"


def write_matching_curve_csv(accuracy_by_gallery_size: dict[int, float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(matching_curve_csv(accuracy_by_gallery_size))
