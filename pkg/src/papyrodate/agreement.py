"""Human-expert interval evaluation and inter-rater agreement indices.

Experts answer each line image with a closed date interval (possibly a
point) or abstain.  Interval answers are reduced to point values by a
configurable rule, abstentions are penalised by a substitution policy
when computing inclusive MAE, and agreement across experts is summarised
by four indices: mean pairwise MAE (reported in years), mean pairwise
Spearman and Pearson correlation, and Fleiss' kappa over a discretised
time axis (default step 25 years).

Unit convention: errors and point values are centuries everywhere
except the pairwise MAE index, which is scaled to years for reporting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .model import Century, DateInterval, interval_midpoint

LineKey = tuple[str, str]

POINT_RULES = ("midpoint", "nearest")

# Tolerance for grid boundary comparisons, in years. Far below one day;
# absorbs float dust from century/year conversions so integer-year data
# behaves exactly.
_YEAR_EPS = 1e-6


class UndefinedCorrelationError(ValueError):
    """Raised when a correlation is undefined (zero variance input)."""


class DegenerateKappaError(ValueError):
    """Raised when Fleiss' kappa is undefined (expected agreement is 1)."""


@dataclass(frozen=True)
class ExpertResponse:
    """One expert's answer for one line; ``answer=None`` is an abstention."""

    expert_id: str
    doc_id: str
    line_id: str
    answer: DateInterval | None

    @property
    def key(self) -> LineKey:
        return (self.doc_id, self.line_id)


@dataclass(frozen=True)
class SubstitutionPolicy:
    """How abstentions are penalised in the inclusive MAE.

    Kinds:

    * ``per-item-max`` (default): an abstained item costs the maximum
      absolute error observed on that item across the raters who did
      answer it; items nobody answered fall back to the maximum error
      observed anywhere in the response set.
    * ``dataset-max``: the largest possible error for the item, i.e. the
      distance from the truth to the farthest bound of the time grid.
    * ``constant``: a fixed error of ``constant`` centuries.
    """

    kind: str = "per-item-max"
    constant: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("per-item-max", "dataset-max", "constant"):
            raise ValueError(f"unknown substitution policy kind {self.kind!r}")
        if self.kind == "constant":
            if self.constant is None or self.constant < 0:
                raise ValueError("constant policy requires a nonnegative constant")
        elif self.constant is not None:
            raise ValueError(f"policy {self.kind!r} does not take a constant")


@dataclass(frozen=True)
class TimeGrid:
    """Discretised time axis: ``n_bins`` bins of ``step`` years from ``origin``."""

    origin: int
    n_bins: int
    step: int = 25

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ValueError("grid step must be > 0")
        if self.n_bins < 1:
            raise ValueError("grid needs at least one bin")

    @property
    def end(self) -> int:
        return self.origin + self.step * self.n_bins

    def bin_bounds(self, b: int) -> tuple[int, int]:
        """Year span (lo, hi) of bin ``b``."""
        lo = self.origin + b * self.step
        return lo, lo + self.step


def grid_covering(
    answers: Iterable[DateInterval],
    truths: Iterable[Century],
    step: int = 25,
) -> TimeGrid:
    """Tightest multiple-of-step grid covering all answers and truths."""
    years: list[float] = []
    for interval in answers:
        years.append(interval.lo * 100)
        years.append(interval.hi * 100)
    for truth in truths:
        years.append(truth * 100)
    if not years:
        raise ValueError("cannot build a grid from no answers and no truths")
    origin = int(math.floor((min(years) + _YEAR_EPS) / step)) * step
    end = int(math.ceil((max(years) - _YEAR_EPS) / step)) * step
    if end <= origin:
        end = origin + step
    return TimeGrid(origin=origin, n_bins=(end - origin) // step, step=step)


@dataclass(frozen=True)
class ExpertMae:
    """Per-expert MAE with and without substituted abstentions, in centuries."""

    mae_incl: Century
    mae_excl: Century
    n_empty: int


@dataclass(frozen=True)
class AgreementReport:
    """The four agreement indices.  ``fleiss_kappa`` is None when degenerate."""

    mean_pairwise_mae_years: float
    mean_pairwise_spearman: float
    mean_pairwise_pearson: float
    fleiss_kappa: float | None


def point_value(answer: DateInterval, truth: Century, rule: str = "midpoint") -> Century:
    """Reduce an interval answer to a point value in centuries.

    ``midpoint`` ignores the truth; ``nearest`` clamps the truth into
    the interval, so the resulting error is the distance from the truth
    to the nearest interval point (zero when the truth lies inside).
    """
    if rule == "midpoint":
        return interval_midpoint(answer)
    if rule == "nearest":
        return min(max(truth, answer.lo), answer.hi)
    raise ValueError(f"unknown point rule {rule!r}")


def group_by_expert(
    responses: Sequence[ExpertResponse],
) -> dict[str, dict[LineKey, DateInterval | None]]:
    """Group responses by expert, enforcing one answer per (expert, line)."""
    grouped: dict[str, dict[LineKey, DateInterval | None]] = {}
    for resp in responses:
        per_expert = grouped.setdefault(resp.expert_id, {})
        if resp.key in per_expert:
            raise ValueError(
                f"duplicate response from {resp.expert_id!r} for line {resp.key!r}"
            )
        per_expert[resp.key] = resp.answer
    return grouped


def expert_errors(
    responses: Mapping[LineKey, DateInterval | None],
    truths: Mapping[LineKey, Century],
    point_rule: str = "midpoint",
) -> dict[LineKey, Century | None]:
    """Absolute error per roster line for one expert; None marks abstentions.

    The roster is the key set of ``truths``.  Lines the expert never
    answered count as abstentions; answers for lines outside the roster
    are an error.
    """
    for key in responses:
        if key not in truths:
            raise ValueError(f"response for unknown line {key!r}")
    errors: dict[LineKey, Century | None] = {}
    for key in truths:
        answer = responses.get(key)
        if answer is None:
            errors[key] = None
        else:
            errors[key] = abs(point_value(answer, truths[key], point_rule) - truths[key])
    return errors


def expert_point_values(
    responses: Mapping[LineKey, DateInterval | None],
    truths: Mapping[LineKey, Century],
    point_rule: str = "midpoint",
) -> dict[LineKey, Century]:
    """Point values for the lines one expert answered (abstentions omitted)."""
    for key in responses:
        if key not in truths:
            raise ValueError(f"response for unknown line {key!r}")
    return {
        key: point_value(answer, truths[key], point_rule)
        for key, answer in responses.items()
        if answer is not None
    }


def substitution_errors(
    errors_by_expert: Mapping[str, Mapping[LineKey, Century | None]],
    policy: SubstitutionPolicy,
    truths: Mapping[LineKey, Century] | None = None,
    grid: TimeGrid | None = None,
) -> dict[LineKey, Century]:
    """Resolve the substitution error value for every roster item."""
    keys: set[LineKey] = set()
    for errors in errors_by_expert.values():
        keys.update(errors)

    if policy.kind == "constant":
        assert policy.constant is not None
        return {key: policy.constant for key in keys}

    if policy.kind == "dataset-max":
        if truths is None or grid is None:
            raise ValueError("dataset-max policy needs truths and a time grid")
        out: dict[LineKey, Century] = {}
        for key in keys:
            truth_year = truths[key] * 100
            out[key] = max(abs(truth_year - grid.origin), abs(truth_year - grid.end)) / 100
        return out

    # per-item-max
    observed_all: list[Century] = []
    per_item: dict[LineKey, Century] = {}
    for errors in errors_by_expert.values():
        for key, err in errors.items():
            if err is None:
                continue
            observed_all.append(err)
            if key not in per_item or err > per_item[key]:
                per_item[key] = err
    if not observed_all:
        raise ValueError("no answered lines anywhere: cannot derive substitution errors")
    fallback = max(observed_all)
    return {key: per_item.get(key, fallback) for key in keys}


def expert_mae(
    errors: Mapping[LineKey, Century | None],
    policy: SubstitutionPolicy,
    all_errors: Mapping[str, Mapping[LineKey, Century | None]] | None = None,
    truths: Mapping[LineKey, Century] | None = None,
    grid: TimeGrid | None = None,
) -> ExpertMae:
    """MAE excluding and including substituted abstentions.

    ``all_errors`` (every expert's error map) is required by the
    per-item-max policy; ``truths`` and ``grid`` by dataset-max.  With
    no abstentions the inclusive and exclusive values are identical by
    construction.
    """
    answered = [err for err in errors.values() if err is not None]
    if not answered:
        raise ValueError("all lines abstained: MAE is undefined")
    n_empty = len(errors) - len(answered)
    mae_excl = math.fsum(answered) / len(answered)
    if n_empty == 0:
        return ExpertMae(mae_incl=mae_excl, mae_excl=mae_excl, n_empty=0)

    if policy.kind == "per-item-max":
        if all_errors is None:
            raise ValueError("per-item-max policy needs all experts' errors")
        subs = substitution_errors(all_errors, policy)
    else:
        subs = substitution_errors({"": errors}, policy, truths=truths, grid=grid)
    substituted = [subs[key] for key, err in errors.items() if err is None]
    mae_incl = math.fsum(answered + substituted) / len(errors)
    return ExpertMae(mae_incl=mae_incl, mae_excl=mae_excl, n_empty=n_empty)


def _pairs(ids: Sequence[str]) -> list[tuple[str, str]]:
    ordered = sorted(ids)
    return [(a, b) for i, a in enumerate(ordered) for b in ordered[i + 1 :]]


def pairwise_mae(values_by_expert: Mapping[str, Mapping[LineKey, Century]]) -> float:
    """Mean over unordered expert pairs of the MAE on commonly answered lines.

    Reported in years.  Pairs with no common answered line are excluded
    with a warning.
    """
    if len(values_by_expert) < 2:
        raise ValueError("pairwise MAE needs at least two experts")
    pair_maes: list[float] = []
    for a, b in _pairs(list(values_by_expert)):
        common = sorted(set(values_by_expert[a]) & set(values_by_expert[b]))
        if not common:
            warnings.warn(f"experts {a!r} and {b!r} share no answered lines; pair skipped")
            continue
        diffs = [abs(values_by_expert[a][k] - values_by_expert[b][k]) for k in common]
        pair_maes.append(math.fsum(diffs) / len(diffs))
    if not pair_maes:
        raise ValueError("no expert pair shares any answered line")
    return 100 * math.fsum(pair_maes) / len(pair_maes)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation coefficient, clamped to [-1, 1]."""
    if len(x) != len(y):
        raise ValueError("x and y must have the same length")
    if len(x) < 2:
        raise ValueError("correlation needs at least two points")
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxx = math.fsum((v - mx) ** 2 for v in x)
    syy = math.fsum((v - my) ** 2 for v in y)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("zero variance input")
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation: Pearson of average-ranked data (ties share ranks)."""
    if len(x) != len(y):
        raise ValueError("x and y must have the same length")
    if len(x) < 2:
        raise ValueError("correlation needs at least two points")
    return pearson(_average_ranks(x), _average_ranks(y))


def mean_pairwise_corr(
    values_by_expert: Mapping[str, Mapping[LineKey, Century]],
    method: str = "pearson",
) -> float:
    """Unweighted mean correlation over unordered expert pairs.

    Each pair is correlated on the lines both experts answered.  Pairs
    with fewer than two common lines or an undefined correlation are
    excluded with a warning.
    """
    if method == "pearson":
        corr = pearson
    elif method == "spearman":
        corr = spearman
    else:
        raise ValueError(f"unknown correlation method {method!r}")
    if len(values_by_expert) < 2:
        raise ValueError("pairwise correlation needs at least two experts")
    coefficients: list[float] = []
    for a, b in _pairs(list(values_by_expert)):
        common = sorted(set(values_by_expert[a]) & set(values_by_expert[b]))
        if len(common) < 2:
            warnings.warn(
                f"experts {a!r} and {b!r} share fewer than two answered lines; pair skipped"
            )
            continue
        xs = [values_by_expert[a][k] for k in common]
        ys = [values_by_expert[b][k] for k in common]
        try:
            coefficients.append(corr(xs, ys))
        except UndefinedCorrelationError:
            warnings.warn(f"correlation undefined for pair ({a!r}, {b!r}); pair skipped")
    if not coefficients:
        raise ValueError("no expert pair yields a defined correlation")
    return math.fsum(coefficients) / len(coefficients)


def discretize_answer(answer: DateInterval, grid: TimeGrid) -> list[int]:
    """Binary coverage vector over the grid bins.

    A bin is 1 iff the answer covers part of its year span.  Partial
    coverage means overlap of positive length, so an answer equal to one
    bin's span marks that bin alone; a degenerate point answer has no
    length and instead marks every bin whose closed span touches it,
    which is two bins when it sits exactly on a boundary.
    """
    lo_year = answer.lo * 100
    hi_year = answer.hi * 100
    if lo_year < grid.origin - _YEAR_EPS or hi_year > grid.end + _YEAR_EPS:
        raise ValueError(
            f"answer [{answer.lo}, {answer.hi}] outside grid years [{grid.origin}, {grid.end}]"
        )
    point = hi_year - lo_year <= _YEAR_EPS
    bits: list[int] = []
    for b in range(grid.n_bins):
        bin_lo, bin_hi = grid.bin_bounds(b)
        if point:
            covered = bin_lo - _YEAR_EPS <= lo_year and hi_year <= bin_hi + _YEAR_EPS
        else:
            covered = min(hi_year, bin_hi) - max(lo_year, bin_lo) > _YEAR_EPS
        bits.append(1 if covered else 0)
    return bits


def fleiss_kappa(labels: Sequence[Sequence[int]]) -> float:
    """Fleiss' kappa for binary labels, items in rows and raters in columns.

    Chance agreement uses the category proportions pooled over all
    items.  When the expected agreement is 1 (every rater always in the
    same single category) kappa is undefined and
    :class:`DegenerateKappaError` is raised.
    """
    if not labels:
        raise ValueError("no items")
    n_raters = len(labels[0])
    if n_raters < 2:
        raise ValueError("Fleiss' kappa needs at least two raters")
    for row in labels:
        if len(row) != n_raters:
            raise ValueError("every item must be rated by the same number of raters")
        for label in row:
            if label not in (0, 1):
                raise ValueError(f"labels must be binary 0/1, got {label!r}")

    n_items = len(labels)
    total_ones = 0
    agreement_sum = 0.0
    for row in labels:
        ones = sum(row)
        zeros = n_raters - ones
        total_ones += ones
        agreement_sum += (ones * ones + zeros * zeros - n_raters) / (n_raters * (n_raters - 1))
    p_observed = agreement_sum / n_items
    p1 = total_ones / (n_items * n_raters)
    p0 = 1 - p1
    p_expected = p0 * p0 + p1 * p1
    if p_expected >= 1.0:
        raise DegenerateKappaError("expected agreement is 1; kappa is undefined")
    return (p_observed - p_expected) / (1 - p_expected)


def rater_document_bits(
    responses: Mapping[LineKey, DateInterval | None],
    doc_lines: Mapping[str, Sequence[LineKey]],
    grid: TimeGrid,
) -> dict[str, list[int]]:
    """One binary coverage vector per document for a single rater.

    A document's vector is the bitwise OR of the rater's discretised
    line answers; abstaining on every line yields an all-zero vector
    (the rater asserts no interval).
    """
    out: dict[str, list[int]] = {}
    for doc_id, keys in doc_lines.items():
        bits = [0] * grid.n_bins
        for key in keys:
            answer = responses.get(key)
            if answer is None:
                continue
            for b, bit in enumerate(discretize_answer(answer, grid)):
                if bit:
                    bits[b] = 1
        out[doc_id] = bits
    return out


def _doc_lines(truths: Mapping[LineKey, Century]) -> dict[str, list[LineKey]]:
    docs: dict[str, list[LineKey]] = {}
    for key in sorted(truths):
        docs.setdefault(key[0], []).append(key)
    return docs


def agreement_report(
    responses: Sequence[ExpertResponse],
    truths: Mapping[LineKey, Century],
    grid: TimeGrid | None = None,
    policy: SubstitutionPolicy = SubstitutionPolicy(),
    point_rule: str = "midpoint",
) -> AgreementReport:
    """Assemble the four agreement indices for a response set.

    Pairwise indices use pairwise deletion (lines both experts
    answered); kappa uses one item per (document, bin) with abstaining
    raters contributing all-zero rows.  The substitution ``policy``
    therefore never feeds these indices (substituted constants would
    fabricate agreement); it is accepted so callers can carry one
    evaluation configuration around, and applies to the per-expert
    tables, see :func:`expert_summaries`.  A degenerate kappa is
    reported as None rather than a number.
    """
    grouped = group_by_expert(responses)
    if len(grouped) < 2:
        raise ValueError("agreement needs at least two experts")

    values_by_expert = {
        expert: expert_point_values(answers, truths, point_rule)
        for expert, answers in sorted(grouped.items())
    }
    mae_years = pairwise_mae(values_by_expert)
    rho = mean_pairwise_corr(values_by_expert, "spearman")
    r = mean_pairwise_corr(values_by_expert, "pearson")

    if grid is None:
        all_answers = [
            answer for answers in grouped.values() for answer in answers.values() if answer
        ]
        grid = grid_covering(all_answers, truths.values())

    doc_lines = _doc_lines(truths)
    bits_by_expert = {
        expert: rater_document_bits(answers, doc_lines, grid)
        for expert, answers in sorted(grouped.items())
    }
    experts = sorted(bits_by_expert)
    labels: list[list[int]] = []
    for doc_id in sorted(doc_lines):
        for b in range(grid.n_bins):
            labels.append([bits_by_expert[e][doc_id][b] for e in experts])
    try:
        kappa: float | None = fleiss_kappa(labels)
    except DegenerateKappaError:
        kappa = None

    return AgreementReport(
        mean_pairwise_mae_years=mae_years,
        mean_pairwise_spearman=rho,
        mean_pairwise_pearson=r,
        fleiss_kappa=kappa,
    )


def expert_summaries(
    responses: Sequence[ExpertResponse],
    truths: Mapping[LineKey, Century],
    policy: SubstitutionPolicy = SubstitutionPolicy(),
    point_rule: str = "midpoint",
    grid: TimeGrid | None = None,
) -> list[tuple[str, ExpertMae]]:
    """Per-expert (mae_incl, mae_excl, n_empty) rows, ordered by expert id."""
    grouped = group_by_expert(responses)
    errors_by_expert = {
        expert: expert_errors(answers, truths, point_rule)
        for expert, answers in grouped.items()
    }
    if policy.kind == "dataset-max" and grid is None:
        all_answers = [
            answer for answers in grouped.values() for answer in answers.values() if answer
        ]
        grid = grid_covering(all_answers, truths.values())
    return [
        (
            expert,
            expert_mae(
                errors_by_expert[expert],
                policy,
                all_errors=errors_by_expert,
                truths=truths,
                grid=grid,
            ),
        )
        for expert in sorted(errors_by_expert)
    ]
