"""Date conventions, dataset manifests, and shared validation.

Dates are carried as plain floats measured in centuries: ``value * 100``
is the signed calendar year, and negative values are BCE (``-1.55`` is
155 BCE).  There is no year zero; all conversions reject it.  This keeps
error magnitudes in the familiar "centuries" scale (an error of 0.55 is
55 years) while ordering BCE and CE dates correctly.

All types in this module are immutable after construction and all
operations are pure, so they are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

Century = float
"""Signed date scalar in centuries (1.00 == 100 years, negative == BCE)."""

SPLIT_PARTS = ("train", "val", "test")


class YearZeroError(ValueError):
    """Raised when a conversion would produce or consume calendar year 0."""


def _require_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite, got {value!r}")
    return value


def year_to_century(year: int) -> Century:
    """Convert a signed calendar year to a century float (150 -> 1.50)."""
    if year == 0:
        raise YearZeroError("there is no year 0 in the dating convention")
    return year / 100


def century_to_year(value: Century) -> int:
    """Convert a century float back to the nearest signed calendar year.

    Ties round away from zero so BCE and CE behave symmetrically.  A
    result of year 0 violates the convention and raises
    :class:`YearZeroError`.
    """
    _require_finite(value, "century value")
    scaled = value * 100
    if scaled >= 0:
        year = math.floor(scaled + 0.5)
    else:
        year = math.ceil(scaled - 0.5)
    if year == 0:
        raise YearZeroError(f"{value!r} rounds to year 0, which does not exist")
    return int(year)


@dataclass(frozen=True)
class DateInterval:
    """Closed date interval in centuries; ``lo == hi`` is a point answer."""

    lo: Century
    hi: Century

    def __post_init__(self) -> None:
        _require_finite(self.lo, "interval lo")
        _require_finite(self.hi, "interval hi")
        if self.lo > self.hi:
            raise ValueError(f"interval lo {self.lo} exceeds hi {self.hi}")

    def contains(self, value: Century) -> bool:
        return self.lo <= value <= self.hi


def interval_midpoint(interval: DateInterval) -> Century:
    """Midpoint of a date interval, the default point rule for ranges."""
    return (interval.lo + interval.hi) / 2


@dataclass(frozen=True)
class LineRecord:
    """One pre-cut text line of a document.

    Exactly one source must be set: ``image`` (path to a grayscale PGM)
    or ``features`` (a precomputed feature vector).  This is checked by
    :func:`validate_manifest`, not by the constructor.
    """

    line_id: str
    image: str | None = None
    features: tuple[float, ...] | None = None


@dataclass(frozen=True)
class DatedDocument:
    """A manuscript with a securely known production year."""

    doc_id: str
    ground_truth_year: int
    dataset: str = ""
    lines: tuple[LineRecord, ...] = ()

    @property
    def ground_truth(self) -> Century:
        return year_to_century(self.ground_truth_year)


@dataclass(frozen=True)
class DatasetManifest:
    """A named collection of dated documents, optionally pre-split.

    ``split_labels`` maps ``(doc_id, line_id)`` to one of ``train``,
    ``val`` or ``test``; when present it must cover every line exactly
    once.
    """

    name: str
    documents: tuple[DatedDocument, ...] = ()
    split_labels: Mapping[tuple[str, str], str] | None = None

    def line_keys(self) -> list[tuple[str, str]]:
        """All (doc_id, line_id) pairs in manifest order."""
        return [(d.doc_id, ln.line_id) for d in self.documents for ln in d.lines]

    def truth_by_line(self) -> dict[tuple[str, str], Century]:
        """Ground-truth century for every line (the document's date)."""
        out: dict[tuple[str, str], Century] = {}
        for doc in self.documents:
            truth = doc.ground_truth
            for line in doc.lines:
                out[(doc.doc_id, line.line_id)] = truth
        return out


@dataclass(frozen=True)
class Violation:
    """One machine-readable manifest rule violation."""

    doc_id: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.doc_id}: {self.rule}: {self.detail}"


def validate_manifest(manifest: DatasetManifest) -> list[Violation]:
    """Check every manifest invariant; an empty list means valid.

    Rules reported: duplicate-doc-id, year-zero, no-lines,
    duplicate-line-id, source-missing, source-conflict,
    feature-not-finite, feature-length, split-unknown-label,
    split-unknown-line, split-missing-line.
    """
    violations: list[Violation] = []
    seen_docs: set[str] = set()
    feature_length: int | None = None

    for doc in manifest.documents:
        if doc.doc_id in seen_docs:
            violations.append(
                Violation(doc.doc_id, "duplicate-doc-id", "doc_id appears more than once")
            )
        seen_docs.add(doc.doc_id)
        if doc.ground_truth_year == 0:
            violations.append(
                Violation(doc.doc_id, "year-zero", "ground_truth_year 0 does not exist")
            )
        if not doc.lines:
            violations.append(Violation(doc.doc_id, "no-lines", "document has no lines"))
        seen_lines: set[str] = set()
        for line in doc.lines:
            if line.line_id in seen_lines:
                violations.append(
                    Violation(
                        doc.doc_id,
                        "duplicate-line-id",
                        f"line_id {line.line_id!r} appears more than once",
                    )
                )
            seen_lines.add(line.line_id)
            has_image = line.image is not None
            has_features = line.features is not None
            if not has_image and not has_features:
                violations.append(
                    Violation(
                        doc.doc_id,
                        "source-missing",
                        f"line {line.line_id!r} has neither image nor features",
                    )
                )
            elif has_image and has_features:
                violations.append(
                    Violation(
                        doc.doc_id,
                        "source-conflict",
                        f"line {line.line_id!r} has both image and features",
                    )
                )
            if line.features is not None:
                if any(not math.isfinite(v) for v in line.features):
                    violations.append(
                        Violation(
                            doc.doc_id,
                            "feature-not-finite",
                            f"line {line.line_id!r} has non-finite feature values",
                        )
                    )
                if feature_length is None:
                    feature_length = len(line.features)
                elif len(line.features) != feature_length:
                    violations.append(
                        Violation(
                            doc.doc_id,
                            "feature-length",
                            f"line {line.line_id!r} has {len(line.features)} features, "
                            f"expected {feature_length}",
                        )
                    )

    if manifest.split_labels is not None:
        all_lines = set(manifest.line_keys())
        for key, label in manifest.split_labels.items():
            if label not in SPLIT_PARTS:
                violations.append(
                    Violation(
                        key[0],
                        "split-unknown-label",
                        f"line {key[1]!r} labelled {label!r}, expected one of {SPLIT_PARTS}",
                    )
                )
            if key not in all_lines:
                violations.append(
                    Violation(
                        key[0],
                        "split-unknown-line",
                        f"split label for unknown line {key[1]!r}",
                    )
                )
        for key in sorted(all_lines - set(manifest.split_labels)):
            violations.append(
                Violation(key[0], "split-missing-line", f"line {key[1]!r} has no split label")
            )

    return violations
