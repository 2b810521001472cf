"""Pluggable dating predictors and the reference feature pipeline.

The deliberately simple feature pipeline (Otsu binarisation, 4x4 ink
density zones, two global statistics) exists so experiment runs are
bit-reproducible; it makes no claim to the accuracy of a trained visual
model.  Predictors consume these 18-dim vectors, or any fixed-length
vectors supplied by the caller.

A predictor is fit once, may be further fit on more data
(``continue_fit``, used by the transfer protocol), and then predicts a
century float per line.  Prediction is deterministic after fitting.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Sequence

from .model import Century

FeatureVector = tuple[float, ...]

N_ZONES = 4  # 4x4 grid
FEATURE_LENGTH = N_ZONES * N_ZONES + 2

_FALLBACK_THRESHOLD = 127


class NotFittedError(RuntimeError):
    """Raised when predict or continue_fit is called before fit."""


def otsu_threshold(image: Sequence[Sequence[int]]) -> int:
    """Otsu's threshold for an 8-bit grayscale image.

    Maximises the between-class variance over all cut points; pixels at
    or below the threshold are foreground (ink).  Constant or empty
    images have no meaningful cut and fall back to 127.
    """
    histogram = [0] * 256
    total = 0
    for row in image:
        for px in row:
            histogram[px] += 1
            total += 1
    if total == 0:
        return _FALLBACK_THRESHOLD

    sum_all = sum(i * h for i, h in enumerate(histogram))
    w0 = 0
    sum0 = 0
    best_t = _FALLBACK_THRESHOLD
    best_var = -1.0
    for t in range(256):
        w0 += histogram[t]
        if w0 == 0:
            continue
        w1 = total - w0
        if w1 == 0:
            break
        sum0 += t * histogram[t]
        mu0 = sum0 / w0
        mu1 = (sum_all - sum0) / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_var = var
            best_t = t
    if best_var <= 0:
        return _FALLBACK_THRESHOLD
    return best_t


def extract_features(image: Sequence[Sequence[int]]) -> FeatureVector:
    """18-dim feature vector: 16 zone ink densities + 2 global statistics.

    The image is binarised at Otsu's threshold (ink = intensity at or
    below it) and split into a 4x4 zone grid, remainder pixels going to
    the last row/column of zones; each zone contributes its ink-pixel
    fraction, in row-major order.  Appended are the global ink fraction
    and the global intensity standard deviation normalised by 255.
    Degenerate images (empty, constant) use the fallback threshold and
    produce defined values instead of failing.
    """
    height = len(image)
    width = len(image[0]) if height else 0
    n_pixels = height * width
    if n_pixels == 0:
        return tuple([0.0] * FEATURE_LENGTH)

    threshold = otsu_threshold(image)
    base_h = height // N_ZONES
    base_w = width // N_ZONES

    features: list[float] = []
    for zi in range(N_ZONES):
        r0 = zi * base_h
        r1 = (zi + 1) * base_h if zi < N_ZONES - 1 else height
        for zj in range(N_ZONES):
            c0 = zj * base_w
            c1 = (zj + 1) * base_w if zj < N_ZONES - 1 else width
            ink = 0
            count = 0
            for r in range(r0, r1):
                row = image[r]
                for c in range(c0, c1):
                    count += 1
                    if row[c] <= threshold:
                        ink += 1
            features.append(ink / count if count else 0.0)

    total_ink = 0
    total_sum = 0
    for row in image:
        for px in row:
            total_sum += px
            if px <= threshold:
                total_ink += 1
    mean_px = total_sum / n_pixels
    var_px = 0.0
    for row in image:
        for px in row:
            var_px += (px - mean_px) ** 2
    features.append(total_ink / n_pixels)
    features.append(math.sqrt(var_px / n_pixels) / 255)
    return tuple(features)


class Predictor(ABC):
    """Behavioural contract shared by all dating predictors."""

    @abstractmethod
    def fit(self, features: Sequence[FeatureVector], dates: Sequence[Century]) -> None:
        """Train from scratch, replacing any previous state."""

    @abstractmethod
    def continue_fit(self, features: Sequence[FeatureVector], dates: Sequence[Century]) -> None:
        """Extend an already fitted predictor with more data."""

    @abstractmethod
    def predict(self, features: FeatureVector) -> Century:
        """Predict the date of one line; requires a prior fit."""


def _check_training(features: Sequence[FeatureVector], dates: Sequence[Century]) -> None:
    if len(features) != len(dates):
        raise ValueError(f"{len(features)} feature vectors vs {len(dates)} dates")
    if not dates:
        raise ValueError("empty training set")


class MeanPredictor(Predictor):
    """Sanity baseline: always predicts the mean of the training dates."""

    def __init__(self) -> None:
        self._dates: list[Century] | None = None

    def fit(self, features: Sequence[FeatureVector], dates: Sequence[Century]) -> None:
        _check_training(features, dates)
        self._dates = list(dates)

    def continue_fit(self, features: Sequence[FeatureVector], dates: Sequence[Century]) -> None:
        if self._dates is None:
            raise NotFittedError("continue_fit before fit")
        _check_training(features, dates)
        self._dates.extend(dates)

    def predict(self, features: FeatureVector) -> Century:
        if self._dates is None:
            raise NotFittedError("predict before fit")
        return math.fsum(self._dates) / len(self._dates)


class KnnPredictor(Predictor):
    """K-nearest-neighbour regression on feature vectors.

    Euclidean distance, ties broken by lower insertion index, prediction
    is the arithmetic mean of the k neighbours' dates.  ``continue_fit``
    appends to the training memory, so with a zero-size continuation the
    predictor is exactly its pretrained state.
    """

    def __init__(self, k: int) -> None:
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self._memory: list[tuple[FeatureVector, Century]] | None = None

    def fit(self, features: Sequence[FeatureVector], dates: Sequence[Century]) -> None:
        _check_training(features, dates)
        self._memory = [(tuple(f), d) for f, d in zip(features, dates)]

    def continue_fit(self, features: Sequence[FeatureVector], dates: Sequence[Century]) -> None:
        if self._memory is None:
            raise NotFittedError("continue_fit before fit")
        if len(features) != len(dates):
            raise ValueError(f"{len(features)} feature vectors vs {len(dates)} dates")
        self._memory.extend((tuple(f), d) for f, d in zip(features, dates))

    def predict(self, features: FeatureVector) -> Century:
        if self._memory is None:
            raise NotFittedError("predict before fit")
        if self.k > len(self._memory):
            raise ValueError(f"k={self.k} exceeds training size {len(self._memory)}")
        query = tuple(features)
        dim = len(self._memory[0][0])
        if len(query) != dim:
            raise ValueError(f"query has {len(query)} dims, training data has {dim}")
        scored = sorted(
            (
                (math.fsum((a - b) ** 2 for a, b in zip(vec, query)), idx)
                for idx, (vec, _) in enumerate(self._memory)
            ),
        )
        neighbours = [self._memory[idx][1] for _, idx in scored[: self.k]]
        return math.fsum(neighbours) / self.k
