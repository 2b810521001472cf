"""Command-line surface tying the library together.

Subcommands: ``validate``, ``eval``, ``agree``, ``experiment`` and
``compare``.  Exit codes are uniform: 0 success, 1 domain or validation
failure, 2 I/O failure (unreadable or unparseable input files; argparse
usage errors also exit 2).  Set ``PAPYRODATE_NO_COLOR`` to disable ANSI
styling of the human-readable summaries.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from . import io as pio
from .agreement import (
    POINT_RULES,
    LineKey,
    SubstitutionPolicy,
    agreement_report,
    expert_errors,
    expert_summaries,
    grid_covering,
    group_by_expert,
    substitution_errors,
)
from .harness import parse_experiment_config, run_experiment
from .metrics import EtwSweep, etw_sweep, mae, mse, per_document_stats
from .model import Century, validate_manifest

_GREEN = "32"
_RED = "31"


def _paint(text: str, code: str) -> str:
    if os.environ.get("PAPYRODATE_NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\x1b[{code}m{text}\x1b[0m"


def _parse_policy(raw: str) -> SubstitutionPolicy:
    if raw == "per-item-max":
        return SubstitutionPolicy("per-item-max")
    if raw == "dataset-max":
        return SubstitutionPolicy("dataset-max")
    if raw.startswith("constant:"):
        return SubstitutionPolicy("constant", constant=float(raw.split(":", 1)[1]))
    raise ValueError(
        f"unknown policy {raw!r}: expected per-item-max, dataset-max or constant:<centuries>"
    )


def _metadata(command: str, seed: int | None, config: dict) -> dict:
    return {
        "tool": "papyrodate",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
    }


def cmd_validate(args: argparse.Namespace) -> int:
    manifest = pio.load_manifest(args.manifest)
    violations = validate_manifest(manifest)
    for violation in violations:
        print(_paint(str(violation), _RED))
    if violations:
        print(f"{len(violations)} violation(s) in {args.manifest}")
        return 1
    n_lines = len(manifest.line_keys())
    print(
        _paint(
            f"ok: {args.manifest} ({len(manifest.documents)} documents, {n_lines} lines)",
            _GREEN,
        )
    )
    return 0


def _eval_truths(args: argparse.Namespace, pred_keys: Sequence[LineKey]) -> tuple[
    dict[LineKey, Century], dict[str, Century]
]:
    """Line- and document-level truths for the predictions being scored."""
    if args.manifest:
        manifest = pio.load_manifest(args.manifest)
        violations = validate_manifest(manifest)
        if violations:
            listing = "; ".join(str(v) for v in violations)
            raise ValueError(f"manifest {args.manifest} is invalid: {listing}")
        line_truths = manifest.truth_by_line()
        unmatched = sorted(set(pred_keys) - set(line_truths))
        if unmatched:
            listing = ", ".join(f"{d}/{l}" for d, l in unmatched)
            raise ValueError(f"predictions for unknown lines: {listing}")
        doc_truths = {d.doc_id: d.ground_truth for d in manifest.documents}
        return {k: line_truths[k] for k in pred_keys}, doc_truths
    doc_years = pio.read_truths_csv(args.truth)
    unmatched_docs = sorted({d for d, _ in pred_keys} - set(doc_years))
    if unmatched_docs:
        raise ValueError(f"predictions for unknown documents: {', '.join(unmatched_docs)}")
    doc_truths = {d: y / 100 for d, y in doc_years.items()}
    return {k: doc_truths[k[0]] for k in pred_keys}, doc_truths


def cmd_eval(args: argparse.Namespace) -> int:
    if bool(args.truth) == bool(args.manifest):
        raise ValueError("exactly one of --truth or --manifest is required")
    predictions = pio.read_predictions_csv(args.pred)
    keys = sorted(predictions)
    line_truths, doc_truths = _eval_truths(args, keys)

    sweep = EtwSweep(args.alpha_min, args.alpha_max, args.alpha_step)
    if args.alpha_is_full_width:
        sweep = EtwSweep(sweep.alpha_min / 2, sweep.alpha_max / 2, sweep.alpha_step / 2)

    preds = [predictions[k] for k in keys]
    truths = [line_truths[k] for k in keys]
    overall_mae = mae(preds, truths)
    overall_mse = mse(preds, truths)
    curve = etw_sweep(preds, truths, sweep)

    by_doc: dict[str, list[Century]] = {}
    for (doc_id, _), pred in sorted(predictions.items()):
        by_doc.setdefault(doc_id, []).append(pred)
    doc_stats = per_document_stats(
        by_doc, {d: doc_truths[d] for d in by_doc}, sigma_mode=args.sigma
    )

    report = {
        "metadata": _metadata(
            "eval",
            args.seed,
            {
                "pred": args.pred,
                "truth": args.truth,
                "manifest": args.manifest,
                "alpha_min": args.alpha_min,
                "alpha_max": args.alpha_max,
                "alpha_step": args.alpha_step,
                "alpha_is_full_width": args.alpha_is_full_width,
                "sigma_mode": args.sigma,
            },
        ),
        "metrics": {"n": len(preds), "mae": overall_mae, "mse": overall_mse},
        "etw_curve": [
            {
                "alpha": r.alpha,
                "positives": r.positives,
                "negatives": r.negatives,
                "accuracy": r.accuracy,
            }
            for r in curve
        ],
        "doc_stats": [
            {
                "doc_id": s.doc_id,
                "n": s.n_predictions,
                "mean": s.mean,
                "mae": s.mae,
                "sigma": s.sigma,
                "quartiles": {
                    "min": s.quartiles.min,
                    "q1": s.quartiles.q1,
                    "median": s.quartiles.median,
                    "q3": s.quartiles.q3,
                    "max": s.quartiles.max,
                },
                "truth": s.ground_truth,
            }
            for s in doc_stats
        ],
    }

    out = Path(args.out)
    pio.write_json(out / "report.json", report)
    pio.write_csv(
        out / "etw_curve.csv",
        ("alpha", "positives", "negatives", "accuracy"),
        [(r.alpha, r.positives, r.negatives, r.accuracy) for r in curve],
    )
    pio.write_csv(
        out / "doc_stats.csv",
        ("doc_id", "n", "mean", "mae", "sigma", "min", "q1", "median", "q3", "max", "truth"),
        [
            (
                s.doc_id,
                s.n_predictions,
                s.mean,
                s.mae,
                s.sigma,
                s.quartiles.min,
                s.quartiles.q1,
                s.quartiles.median,
                s.quartiles.q3,
                s.quartiles.max,
                s.ground_truth,
            )
            for s in doc_stats
        ],
    )
    print(f"lines  {len(preds)}")
    print(f"MAE    {overall_mae:.4f}")
    print(f"MSE    {overall_mse:.4f}")
    print(f"wrote report.json, etw_curve.csv, doc_stats.csv to {args.out}")
    return 0


def _line_truths_for_responses(
    responses: Sequence, doc_years: Mapping[str, int]
) -> dict[LineKey, Century]:
    roster = sorted({r.key for r in responses})
    missing = sorted({doc for doc, _ in roster} - set(doc_years))
    if missing:
        raise ValueError(f"responses for documents with no truth: {', '.join(missing)}")
    return {key: doc_years[key[0]] / 100 for key in roster}


def cmd_agree(args: argparse.Namespace) -> int:
    responses = pio.read_responses_csv(args.responses)
    doc_years = pio.read_truths_csv(args.truth)
    truths = _line_truths_for_responses(responses, doc_years)
    experts = sorted({r.expert_id for r in responses})
    if len(experts) < 2:
        raise ValueError(f"agreement needs at least two experts, got {len(experts)}")

    policy = _parse_policy(args.policy)
    answers = [r.answer for r in responses if r.answer is not None]
    grid = grid_covering(answers, truths.values(), step=args.grid_step)
    report = agreement_report(
        responses, truths, grid=grid, policy=policy, point_rule=args.point_rule
    )
    table = expert_summaries(
        responses, truths, policy=policy, point_rule=args.point_rule, grid=grid
    )

    payload = {
        "metadata": _metadata(
            "agree",
            args.seed,
            {
                "responses": args.responses,
                "truth": args.truth,
                "grid_step": args.grid_step,
                "policy": args.policy,
                "point_rule": args.point_rule,
            },
        ),
        "grid": {"origin": grid.origin, "step": grid.step, "n_bins": grid.n_bins},
        "indices": {
            "mean_pairwise_mae_years": report.mean_pairwise_mae_years,
            "mean_pairwise_spearman": report.mean_pairwise_spearman,
            "mean_pairwise_pearson": report.mean_pairwise_pearson,
            "fleiss_kappa": report.fleiss_kappa,
            "fleiss_kappa_degenerate": report.fleiss_kappa is None,
        },
        "experts": [
            {
                "expert_id": expert,
                "mae_incl": stats.mae_incl,
                "mae_excl": stats.mae_excl,
                "n_empty": stats.n_empty,
            }
            for expert, stats in table
        ],
        "units": {"per_expert_mae": "centuries", "mean_pairwise_mae": "years"},
    }

    out = Path(args.out)
    pio.write_json(out / "agreement.json", payload)
    pio.write_csv(
        out / "experts.csv",
        ("expert_id", "mae_incl", "mae_excl", "n_empty"),
        [(e, s.mae_incl, s.mae_excl, s.n_empty) for e, s in table],
    )
    print(f"experts                {len(experts)}")
    print(f"mean pairwise MAE      {report.mean_pairwise_mae_years:.4f} years")
    print(f"mean pairwise Spearman {report.mean_pairwise_spearman:.4f}")
    print(f"mean pairwise Pearson  {report.mean_pairwise_pearson:.4f}")
    kappa = "degenerate" if report.fleiss_kappa is None else f"{report.fleiss_kappa:.4f}"
    print(f"Fleiss' kappa          {kappa}")
    print(f"wrote agreement.json, experts.csv to {args.out}")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    cfg = parse_experiment_config(raw)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, split_spec=dataclasses.replace(cfg.split_spec, seed=args.seed)
        )
    out_dir = args.out or cfg.out_dir
    if out_dir is None:
        raise ValueError("no output directory: set out_dir in the config or pass --out")

    base_dir = Path(args.config).parent
    report = run_experiment(cfg, base_dir=base_dir)

    out = Path(out_dir)
    pio.write_json(out / "report.json", report)
    rows = report["rows"]
    if cfg.protocol == "baseline":
        pio.write_csv(
            out / "baseline.csv",
            ("pct", "train_lines", "val_lines", "test_lines", "mae", "mse"),
            [
                (r["pct"], r["train_lines"], r["val_lines"], r["test_lines"], r["mae"], r["mse"])
                for r in rows
            ],
        )
        table = "baseline.csv"
    elif cfg.protocol == "transfer":
        pio.write_csv(
            out / "transfer.csv",
            ("pct", "continued_lines", "mae", "mse"),
            [(r["pct"], r["continued_lines"], r["mae"], r["mse"]) for r in rows],
        )
        table = "transfer.csv"
    else:
        pio.write_csv(
            out / "union.csv",
            (
                "pct",
                "first_mae",
                "first_mse",
                "second_mae",
                "second_mse",
                "union_mae",
                "union_mse",
                "balanced",
            ),
            [
                (
                    r["pct"],
                    r["test_first"]["mae"],
                    r["test_first"]["mse"],
                    r["test_second"]["mae"],
                    r["test_second"]["mse"],
                    r["test_union"]["mae"],
                    r["test_union"]["mse"],
                    "true" if r["balanced"] else "false",
                )
                for r in rows
            ],
        )
        table = "union.csv"

    for row in rows:
        if cfg.protocol == "union":
            print(
                f"pct {row['pct']:<6g} union MAE {row['test_union']['mae']:.4f} "
                f"MSE {row['test_union']['mse']:.4f}"
            )
        else:
            print(f"pct {row['pct']:<6g} MAE {row['mae']:.4f} MSE {row['mse']:.4f}")
    print(f"wrote report.json, {table} to {out_dir}")
    return 0


def _error_stats(errors: Sequence[float]) -> tuple[float, float]:
    n = len(errors)
    mean_e = sum(errors) / n
    sigma = (sum((e - mean_e) ** 2 for e in errors) / n) ** 0.5
    return mean_e, sigma


def cmd_compare(args: argparse.Namespace) -> int:
    predictions = pio.read_predictions_csv(args.pred)
    responses = pio.read_responses_csv(args.responses)
    doc_years = pio.read_truths_csv(args.truth)
    truths = _line_truths_for_responses(responses, doc_years)

    missing_docs = sorted({d for d, _ in predictions} - set(doc_years))
    if missing_docs:
        raise ValueError(f"predictions for unknown documents: {', '.join(missing_docs)}")

    policy = _parse_policy(args.policy)
    grouped = group_by_expert(responses)
    if len(grouped) < 2:
        raise ValueError(f"comparison needs at least two experts, got {len(grouped)}")
    errors_by_expert = {
        expert: expert_errors(answers, truths, args.point_rule)
        for expert, answers in grouped.items()
    }
    grid = None
    if policy.kind == "dataset-max":
        answers = [r.answer for r in responses if r.answer is not None]
        grid = grid_covering(answers, truths.values(), step=25)
    substitutions = substitution_errors(errors_by_expert, policy, truths=truths, grid=grid)

    # Inclusive per-line error vector per expert: substitution for abstentions.
    filled = {
        expert: {k: (e if e is not None else substitutions[k]) for k, e in errors.items()}
        for expert, errors in errors_by_expert.items()
    }
    summaries = expert_summaries(responses, truths, policy=policy, point_rule=args.point_rule, grid=grid)
    best_expert = min(summaries, key=lambda item: (item[1].mae_incl, item[0]))[0]

    model_errors: dict[str, list[float]] = {}
    for (doc_id, _), pred in sorted(predictions.items()):
        model_errors.setdefault(doc_id, []).append(abs(pred - doc_years[doc_id] / 100))
    pool_errors: dict[str, list[float]] = {}
    best_errors: dict[str, list[float]] = {}
    for key in sorted(truths):
        doc_id = key[0]
        for expert in sorted(filled):
            pool_errors.setdefault(doc_id, []).append(filled[expert][key])
        best_errors.setdefault(doc_id, []).append(filled[best_expert][key])

    docs = sorted(set(model_errors) & set(pool_errors))
    if not docs:
        raise ValueError("predictions and expert responses share no documents")

    rows = []
    for doc_id in docs:
        m_mae, m_sigma = _error_stats(model_errors[doc_id])
        p_mae, p_sigma = _error_stats(pool_errors[doc_id])
        b_mae, b_sigma = _error_stats(best_errors[doc_id])
        rows.append(
            {
                "doc_id": doc_id,
                "model_mae": m_mae,
                "model_sigma": m_sigma,
                "experts_mae": p_mae,
                "experts_sigma": p_sigma,
                "best_mae": b_mae,
                "best_sigma": b_sigma,
            }
        )

    payload = {
        "metadata": _metadata(
            "compare",
            args.seed,
            {
                "pred": args.pred,
                "responses": args.responses,
                "truth": args.truth,
                "policy": args.policy,
                "point_rule": args.point_rule,
            },
        ),
        "best_expert_id": best_expert,
        "rows": rows,
    }
    out = Path(args.out)
    pio.write_json(out / "comparison.json", payload)
    pio.write_csv(
        out / "comparison.csv",
        (
            "doc_id",
            "model_mae",
            "model_sigma",
            "experts_mae",
            "experts_sigma",
            "best_mae",
            "best_sigma",
        ),
        [
            (
                r["doc_id"],
                r["model_mae"],
                r["model_sigma"],
                r["experts_mae"],
                r["experts_sigma"],
                r["best_mae"],
                r["best_sigma"],
            )
            for r in rows
        ],
    )
    print(f"documents    {len(docs)}")
    print(f"best expert  {best_expert}")
    print(f"wrote comparison.json, comparison.csv to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="papyrodate",
        description="Error analysis and experiment harness for manuscript dating.",
    )
    parser.add_argument("--version", action="version", version=f"papyrodate {__version__}")
    parser.add_argument(
        "--seed", type=int, default=None, help="override the seed (echoed in reports)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a manifest against all invariants")
    p_validate.add_argument("manifest", help="manifest JSON path")
    p_validate.set_defaults(func=cmd_validate)

    p_eval = sub.add_parser("eval", help="score predictions: MAE/MSE, ETW curve, doc stats")
    p_eval.add_argument("--pred", required=True, help="CSV doc_id,line_id,pred_century")
    p_eval.add_argument("--truth", help="CSV doc_id,year")
    p_eval.add_argument("--manifest", help="manifest JSON (alternative to --truth)")
    p_eval.add_argument("--alpha-min", type=float, default=0.0)
    p_eval.add_argument("--alpha-max", type=float, default=2.5)
    p_eval.add_argument("--alpha-step", type=float, default=0.1)
    p_eval.add_argument(
        "--alpha-is-full-width",
        action="store_true",
        help="treat alpha flags as full window spans and halve them",
    )
    p_eval.add_argument("--sigma", choices=("population", "sample"), default="population")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.set_defaults(func=cmd_eval)

    p_agree = sub.add_parser("agree", help="expert tables and agreement indices")
    p_agree.add_argument("--responses", required=True, help="CSV expert_id,doc_id,line_id,lo_year,hi_year")
    p_agree.add_argument("--truth", required=True, help="CSV doc_id,year")
    p_agree.add_argument("--grid-step", type=int, default=25, help="time axis step in years")
    p_agree.add_argument(
        "--policy",
        default="per-item-max",
        help="empty-answer substitution: per-item-max, dataset-max or constant:<centuries>",
    )
    p_agree.add_argument("--point-rule", choices=POINT_RULES, default="midpoint")
    p_agree.add_argument("--out", required=True, help="output directory")
    p_agree.set_defaults(func=cmd_agree)

    p_exp = sub.add_parser("experiment", help="run a baseline/transfer/union protocol")
    p_exp.add_argument("--config", required=True, help="experiment config JSON")
    p_exp.add_argument("--out", help="output directory (overrides config out_dir)")
    p_exp.set_defaults(func=cmd_experiment)

    p_cmp = sub.add_parser("compare", help="model vs expert pool vs best expert, per document")
    p_cmp.add_argument("--pred", required=True, help="CSV doc_id,line_id,pred_century")
    p_cmp.add_argument("--responses", required=True, help="CSV expert_id,doc_id,line_id,lo_year,hi_year")
    p_cmp.add_argument("--truth", required=True, help="CSV doc_id,year")
    p_cmp.add_argument("--policy", default="per-item-max")
    p_cmp.add_argument("--point-rule", choices=POINT_RULES, default="midpoint")
    p_cmp.add_argument("--out", required=True, help="output directory")
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
