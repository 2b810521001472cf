#!/usr/bin/env python3
"""Independent oracle computations for the committed fixtures.

Run from this directory after ``gen_fixtures.py``.  Everything here is
computed with deliberately different code paths from the package under
test (per-threshold rescans instead of cumulative histograms, explicit
pair enumeration, counting-based ranks, exact fractions for kappa) and
no papyrodate imports, so the committed JSON files act as independent
expected values.
"""

import csv
import json
import math
from fractions import Fraction
from pathlib import Path

HERE = Path(__file__).parent
GRID_STEP = 25


# --- feature oracle: straight pixel loops over the committed PGM ---

def read_pgm(path):
    data = path.read_bytes()
    # fixed simple header layout as written by gen_fixtures
    magic, dims, maxval, rest = data.split(b"\n", 3)
    assert magic == b"P5" and maxval == b"255"
    width, height = (int(v) for v in dims.split())
    pixels = rest[: width * height]
    return [[pixels[r * width + c] for c in range(width)] for r in range(height)]


def otsu_by_rescan(image):
    flat = [px for row in image for px in row]
    total = len(flat)
    best_t, best_var = 127, -1.0
    for t in range(256):
        low = [px for px in flat if px <= t]
        high = [px for px in flat if px > t]
        if not low or not high:
            continue
        mu0 = sum(low) / len(low)
        mu1 = sum(high) / len(high)
        var = len(low) * len(high) * (mu0 - mu1) ** 2
        if var > best_var:
            best_var = var
            best_t = t
    if best_var <= 0:
        return 127
    return best_t


def feature_oracle():
    image = read_pgm(HERE / "sample_line.pgm")
    height, width = len(image), len(image[0])
    t = otsu_by_rescan(image)
    base_h, base_w = height // 4, width // 4
    features = []
    for zi in range(4):
        r0 = zi * base_h
        r1 = (zi + 1) * base_h if zi < 3 else height
        for zj in range(4):
            c0 = zj * base_w
            c1 = (zj + 1) * base_w if zj < 3 else width
            zone = [image[r][c] for r in range(r0, r1) for c in range(c0, c1)]
            features.append(sum(1 for px in zone if px <= t) / len(zone))
    flat = [px for row in image for px in row]
    features.append(sum(1 for px in flat if px <= t) / len(flat))
    mean_px = sum(flat) / len(flat)
    var = 0.0
    for px in flat:
        var += (px - mean_px) ** 2
    features.append(math.sqrt(var / len(flat)) / 255)
    return {"threshold": t, "features": features}


# --- agreement oracle: explicit pair loops over the committed CSVs ---

def load_responses():
    answers = {}
    with open(HERE / "responses.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["doc_id"], row["line_id"])
            if row["lo_year"] == "":
                answers.setdefault(row["expert_id"], {})[key] = None
            else:
                answers.setdefault(row["expert_id"], {})[key] = (
                    int(row["lo_year"]),
                    int(row["hi_year"]),
                )
    return answers


def load_truths():
    with open(HERE / "truth_experts.csv", newline="") as fh:
        return {row["doc_id"]: int(row["year"]) for row in csv.DictReader(fh)}


def midpoint_centuries(interval):
    lo, hi = interval
    return (lo + hi) / 2 / 100


def raw_moment_pearson(xs, ys):
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxx = sum(v * v for v in xs)
    syy = sum(v * v for v in ys)
    sxy = sum(a * b for a, b in zip(xs, ys))
    num = n * sxy - sx * sy
    den = math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))
    return num / den


def counting_ranks(values):
    ranks = []
    for v in values:
        less = sum(1 for o in values if o < v)
        equal = sum(1 for o in values if o == v)
        ranks.append(less + (equal + 1) / 2)
    return ranks


def agreement_oracle():
    answers = load_responses()
    truth_years = load_truths()
    experts = sorted(answers)
    roster = sorted({key for per in answers.values() for key in per})
    truth_c = {key: truth_years[key[0]] / 100 for key in roster}

    # point values (midpoint rule) and absolute errors per expert
    points = {
        e: {k: midpoint_centuries(a) for k, a in answers[e].items() if a is not None}
        for e in experts
    }
    errors = {
        e: {k: abs(points[e][k] - truth_c[k]) for k in points[e]} for e in experts
    }

    # mean pairwise MAE in years
    pair_maes = []
    for i, a in enumerate(experts):
        for b in experts[i + 1 :]:
            common = sorted(set(points[a]) & set(points[b]))
            assert common
            pair_maes.append(
                sum(abs(points[a][k] - points[b][k]) for k in common) / len(common)
            )
    mean_pairwise_mae_years = 100 * sum(pair_maes) / len(pair_maes)

    # mean pairwise correlations
    pearson_vals, spearman_vals = [], []
    for i, a in enumerate(experts):
        for b in experts[i + 1 :]:
            common = sorted(set(points[a]) & set(points[b]))
            xs = [points[a][k] for k in common]
            ys = [points[b][k] for k in common]
            pearson_vals.append(raw_moment_pearson(xs, ys))
            spearman_vals.append(
                raw_moment_pearson(counting_ranks(xs), counting_ranks(ys))
            )
    mean_pearson = sum(pearson_vals) / len(pearson_vals)
    mean_spearman = sum(spearman_vals) / len(spearman_vals)

    # time grid over answer endpoints and truths (integer years, exact)
    all_years = [y for per in answers.values() for a in per.values() if a for y in a]
    all_years += list(truth_years.values())
    origin = math.floor(min(all_years) / GRID_STEP) * GRID_STEP
    end = math.ceil(max(all_years) / GRID_STEP) * GRID_STEP
    n_bins = (end - origin) // GRID_STEP

    # per-document coverage bits (OR over the expert's answered lines)
    docs = sorted(truth_years)
    doc_keys = {d: [k for k in roster if k[0] == d] for d in docs}
    bits = {}
    for e in experts:
        for d in docs:
            row = [0] * n_bins
            for k in doc_keys[d]:
                a = answers[e].get(k)
                if a is None:
                    continue
                lo, hi = a
                for b in range(n_bins):
                    bin_lo = origin + b * GRID_STEP
                    bin_hi = bin_lo + GRID_STEP
                    if lo == hi:
                        covered = bin_lo <= lo <= bin_hi
                    else:
                        covered = min(hi, bin_hi) - max(lo, bin_lo) > 0
                    if covered:
                        row[b] = 1
            bits[(e, d)] = row

    # Fleiss' kappa by exact pair counting
    n_raters = len(experts)
    items = [(d, b) for d in docs for b in range(n_bins)]
    total_pairs_agreeing = Fraction(0)
    ones_total = 0
    for d, b in items:
        ones = sum(bits[(e, d)][b] for e in experts)
        zeros = n_raters - ones
        agreeing = ones * (ones - 1) // 2 + zeros * (zeros - 1) // 2
        total_pairs_agreeing += Fraction(agreeing, n_raters * (n_raters - 1) // 2)
        ones_total += ones
    p_bar = total_pairs_agreeing / len(items)
    p1 = Fraction(ones_total, len(items) * n_raters)
    p_e = p1 * p1 + (1 - p1) * (1 - p1)
    kappa = float((p_bar - p_e) / (1 - p_e))

    # per-expert MAE with per-item-max substitution
    per_item_max = {}
    for e in experts:
        for k, err in errors[e].items():
            if k not in per_item_max or err > per_item_max[k]:
                per_item_max[k] = err
    global_max = max(v for per in errors.values() for v in per.values())
    expert_rows = []
    for e in experts:
        answered = [errors[e][k] for k in roster if k in errors[e]]
        unanswered = [k for k in roster if k not in errors[e]]
        substituted = [per_item_max.get(k, global_max) for k in unanswered]
        mae_excl = sum(answered) / len(answered)
        mae_incl = sum(answered + substituted) / len(roster)
        expert_rows.append(
            {
                "expert_id": e,
                "mae_incl": mae_incl,
                "mae_excl": mae_excl,
                "n_empty": len(unanswered),
            }
        )

    return {
        "grid": {"origin": origin, "step": GRID_STEP, "n_bins": n_bins},
        "indices": {
            "mean_pairwise_mae_years": mean_pairwise_mae_years,
            "mean_pairwise_spearman": mean_spearman,
            "mean_pairwise_pearson": mean_pearson,
            "fleiss_kappa": kappa,
        },
        "experts": expert_rows,
    }


if __name__ == "__main__":
    (HERE / "oracle_features.json").write_text(
        json.dumps(feature_oracle(), indent=2) + "\n"
    )
    print("wrote oracle_features.json")
    (HERE / "oracle_agreement.json").write_text(
        json.dumps(agreement_oracle(), indent=2) + "\n"
    )
    print("wrote oracle_agreement.json")
