"""Scalar error metrics and the Error Time Window accuracy framework.

The Error Time Window (ETW) is a rectangular acceptance window centred
on a document's true production date.  Throughout this module ``alpha``
is the HALF-width of that window, in centuries: a prediction is correct
for a given alpha iff it falls inside ``[truth - alpha, truth + alpha]``,
so the window spans ``2 * alpha``.  The boundary is inclusive, which
keeps accuracy at alpha 0 equal to the exact-hit rate.  Callers holding
a full window span should halve it first (the CLI exposes
``--alpha-is-full-width`` for this).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .model import Century

# Grid arithmetic tolerance: far below any meaningful date resolution
# (1e-9 centuries is a ten-millionth of a year).
_GRID_EPS = 1e-9


@dataclass(frozen=True)
class EtwSweep:
    """Inclusive alpha grid: alpha_min, alpha_min + step, ... <= alpha_max."""

    alpha_min: Century
    alpha_max: Century
    alpha_step: Century

    def __post_init__(self) -> None:
        if self.alpha_min < 0:
            raise ValueError("alpha_min must be >= 0")
        if self.alpha_step <= 0:
            raise ValueError("alpha_step must be > 0")
        if self.alpha_min > self.alpha_max:
            raise ValueError("alpha_min must not exceed alpha_max")

    def alphas(self) -> list[Century]:
        count = int(math.floor((self.alpha_max - self.alpha_min) / self.alpha_step + _GRID_EPS)) + 1
        return [self.alpha_min + i * self.alpha_step for i in range(count)]


@dataclass(frozen=True)
class EtwConfig:
    """Window configuration: a single alpha and/or a sweep grid."""

    alpha: Century = 0.0
    sweep: EtwSweep | None = None

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass(frozen=True)
class EtwResult:
    """Accuracy at one window half-width: positives / (positives + negatives)."""

    alpha: Century
    positives: int
    negatives: int
    accuracy: float


@dataclass(frozen=True)
class Quartiles:
    min: float
    q1: float
    median: float
    q3: float
    max: float


@dataclass(frozen=True)
class DocumentStats:
    """Per-document prediction distribution summary.

    ``mean`` and the quartiles describe the raw predictions; ``mae`` and
    ``sigma`` describe the absolute errors against the ground truth.
    """

    doc_id: str
    n_predictions: int
    mean: Century
    mae: Century
    sigma: Century
    quartiles: Quartiles
    ground_truth: Century


def _check_pairs(preds: Sequence[Century], truths: Sequence[Century]) -> None:
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(truths)} truths")
    if not preds:
        raise ValueError("empty input: need at least one (prediction, truth) pair")
    for v in preds:
        if not math.isfinite(v):
            raise ValueError(f"non-finite prediction {v!r}")
    for v in truths:
        if not math.isfinite(v):
            raise ValueError(f"non-finite truth {v!r}")


def mae(preds: Sequence[Century], truths: Sequence[Century]) -> Century:
    """Mean absolute error in centuries."""
    _check_pairs(preds, truths)
    return math.fsum(abs(p - t) for p, t in zip(preds, truths)) / len(preds)


def mse(preds: Sequence[Century], truths: Sequence[Century]) -> float:
    """Mean squared error in centuries squared."""
    _check_pairs(preds, truths)
    return math.fsum((p - t) ** 2 for p, t in zip(preds, truths)) / len(preds)


def etw_contains(pred: Century, truth: Century, alpha: Century) -> bool:
    """True iff the prediction falls inside [truth - alpha, truth + alpha]."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return abs(pred - truth) <= alpha


def etw_accuracy(preds: Sequence[Century], truths: Sequence[Century], alpha: Century) -> EtwResult:
    """Fraction of predictions inside the window of half-width ``alpha``."""
    _check_pairs(preds, truths)
    positives = sum(1 for p, t in zip(preds, truths) if etw_contains(p, t, alpha))
    negatives = len(preds) - positives
    return EtwResult(
        alpha=alpha,
        positives=positives,
        negatives=negatives,
        accuracy=positives / (positives + negatives),
    )


def etw_sweep(
    preds: Sequence[Century], truths: Sequence[Century], sweep: EtwSweep
) -> list[EtwResult]:
    """Accuracy curve over the alpha grid, ordered by alpha.

    Accuracy is nondecreasing in alpha and reaches 1.0 at any alpha at
    least as large as the maximum absolute error.
    """
    alphas = sweep.alphas()
    if not alphas:
        raise ValueError("empty alpha grid")
    return [etw_accuracy(preds, truths, a) for a in alphas]


def quantile(sorted_values: Sequence[float], p: float) -> float:
    """Quantile by linear interpolation between closest ranks.

    ``sorted_values`` must be in ascending order.  This is the common
    spreadsheet/statistics default (inclusive method).
    """
    if not sorted_values:
        raise ValueError("empty input")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"quantile position {p} outside [0, 1]")
    n = len(sorted_values)
    if n == 1:
        return sorted_values[0]
    h = p * (n - 1)
    lo = int(math.floor(h))
    if lo >= n - 1:
        return sorted_values[n - 1]
    frac = h - lo
    return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo])


def _std(values: Sequence[float], mode: str) -> float:
    n = len(values)
    mean_v = math.fsum(values) / n
    ss = math.fsum((v - mean_v) ** 2 for v in values)
    if mode == "population":
        return math.sqrt(ss / n)
    if mode == "sample":
        return math.sqrt(ss / (n - 1)) if n > 1 else 0.0
    raise ValueError(f"unknown sigma mode {mode!r}")


def per_document_stats(
    predictions: Mapping[str, Sequence[Century]],
    truths: Mapping[str, Century],
    sigma_mode: str = "population",
) -> list[DocumentStats]:
    """Distribution statistics per document, ordered by doc_id.

    ``mae`` is the mean absolute error of the document's predictions and
    ``sigma`` the standard deviation of those absolute errors
    (population by default, groups can be very small).  Quartiles of the
    raw predictions use linear interpolation; the extremes are plain
    min/max with no outlier fencing.
    """
    stats: list[DocumentStats] = []
    for doc_id in sorted(predictions):
        preds = list(predictions[doc_id])
        if not preds:
            raise ValueError(f"document {doc_id!r} has no predictions")
        if doc_id not in truths:
            raise ValueError(f"unknown doc_id {doc_id!r}: no ground truth supplied")
        truth = truths[doc_id]
        errors = [abs(p - truth) for p in preds]
        ordered = sorted(preds)
        stats.append(
            DocumentStats(
                doc_id=doc_id,
                n_predictions=len(preds),
                mean=math.fsum(preds) / len(preds),
                mae=math.fsum(errors) / len(errors),
                sigma=_std(errors, sigma_mode),
                quartiles=Quartiles(
                    min=ordered[0],
                    q1=quantile(ordered, 0.25),
                    median=quantile(ordered, 0.5),
                    q3=quantile(ordered, 0.75),
                    max=ordered[-1],
                ),
                ground_truth=truth,
            )
        )
    return stats
