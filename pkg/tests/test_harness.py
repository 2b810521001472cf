import json
import math
import random

import pytest

from papyrodate.harness import (
    ConfigError,
    Dataset,
    ExperimentConfig,
    PredictorSpec,
    SplitSpec,
    parse_experiment_config,
    run_baseline,
    run_experiment,
    run_transfer,
    run_union,
    split,
    split_from_labels,
    subsample,
)
from papyrodate.io import dumps_canonical
from papyrodate.model import DatasetManifest, DatedDocument, LineRecord
from papyrodate.predictors import MeanPredictor


def make_manifest(name, n_docs, lines_per_doc=3, year0=-260, step=20):
    docs = []
    for d in range(n_docs):
        year = year0 + step * d
        lines = tuple(
            LineRecord(
                line_id=f"l{i + 1}",
                features=(year / 100 + 0.01 * i, 0.5 - 0.001 * year, 0.1 * i),
            )
            for i in range(lines_per_doc)
        )
        docs.append(
            DatedDocument(doc_id=f"{name}-{d:03d}", ground_truth_year=year, dataset=name, lines=lines)
        )
    return DatasetManifest(name=name, documents=tuple(docs))


def make_dataset(name, n_docs, **kwargs):
    return Dataset.from_manifest(name, make_manifest(name, n_docs, **kwargs))


def spec(seed=42, unit="document", train=0.5, val=0.25, test=0.25):
    return SplitSpec(train=train, val=val, test=test, unit=unit, seed=seed)


def config(protocol, n_datasets=1, fractions=(1.0, 0.5), predictor=None, seed=42, etw=None):
    return ExperimentConfig(
        protocol=protocol,
        datasets=tuple(),
        fractions=tuple(fractions),
        predictor=predictor or PredictorSpec("mean"),
        split_spec=spec(seed=seed),
        etw=etw,
    )


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(train=0.0, val=0.5, test=0.5)
    with pytest.raises(ValueError):
        SplitSpec(train=0.5, val=0.3, test=0.3)
    with pytest.raises(ValueError):
        SplitSpec(train=0.5, val=0.25, test=0.25, unit="page")


def test_split_is_deterministic():
    manifest = make_manifest("m", 10)
    first = split(manifest, spec(seed=42))
    second = split(manifest, spec(seed=42))
    assert first == second
    other = split(manifest, spec(seed=43))
    assert other != first


def test_split_by_document_keeps_documents_whole():
    manifest = make_manifest("m", 10)
    parts = split(manifest, spec(seed=42, train=0.8, val=0.1, test=0.1))
    doc_part = {}
    for part_name, keys in (("train", parts.train), ("val", parts.val), ("test", parts.test)):
        for doc_id, _ in keys:
            assert doc_part.setdefault(doc_id, part_name) == part_name
    assert len(parts.train) == 8 * 3
    assert len(parts.val) == 3
    assert len(parts.test) == 3


def test_split_covers_every_line_exactly_once():
    manifest = make_manifest("m", 7, lines_per_doc=4)
    for unit in ("document", "line"):
        parts = split(manifest, spec(seed=9, unit=unit))
        combined = list(parts.train) + list(parts.val) + list(parts.test)
        assert sorted(combined) == sorted(manifest.line_keys())
        assert len(set(combined)) == len(combined)


def test_split_rejects_empty_part():
    manifest = make_manifest("m", 2)
    with pytest.raises(ValueError):
        split(manifest, spec(seed=1))  # 2 docs cannot fill three parts


def test_split_from_labels_uses_manifest_partition():
    manifest = make_manifest("m", 3, lines_per_doc=2)
    keys = manifest.line_keys()
    labels = dict.fromkeys(keys[:2], "train")
    labels.update(dict.fromkeys(keys[2:4], "val"))
    labels.update(dict.fromkeys(keys[4:], "test"))
    labelled = DatasetManifest(manifest.name, manifest.documents, labels)
    parts = split_from_labels(labelled)
    assert parts.train == tuple(keys[:2])
    assert parts.val == tuple(keys[2:4])
    assert parts.test == tuple(keys[4:])


def test_split_from_labels_requires_complete_labels():
    manifest = make_manifest("m", 3, lines_per_doc=2)
    with pytest.raises(ValueError):
        split_from_labels(manifest)
    partial = DatasetManifest(
        manifest.name, manifest.documents, {manifest.line_keys()[0]: "train"}
    )
    with pytest.raises(ValueError):
        split_from_labels(partial)


def test_subsample_full_fraction_is_identity():
    lines = [("d", f"l{i}") for i in range(10)]
    assert subsample(lines, 1.0, seed=4) == tuple(lines)


def test_subsample_half_of_ten_is_five():
    lines = [("d", f"l{i}") for i in range(10)]
    picked = subsample(lines, 0.5, seed=4)
    assert len(picked) == 5
    assert len(set(picked)) == 5
    assert set(picked) <= set(lines)


def test_subsample_nests_for_growing_fractions():
    lines = [("d", f"l{i}") for i in range(40)]
    for seed in (1, 2, 3):
        previous = set()
        for fraction in (0.1, 0.25, 0.5, 0.75, 0.9):
            current = set(subsample(lines, fraction, seed=seed))
            assert previous <= current
            previous = current


def test_subsample_validation():
    lines = [("d", "l0"), ("d", "l1")]
    with pytest.raises(ValueError):
        subsample(lines, 0.0, seed=1)
    with pytest.raises(ValueError):
        subsample(lines, 1.1, seed=1)
    with pytest.raises(ValueError):
        subsample(lines, 0.2, seed=1)  # floor(0.4) == 0 lines


def test_run_baseline_mean_predictor_matches_closed_form():
    dataset = make_dataset("m", 8)
    cfg = config("baseline", fractions=(1.0, 0.5))
    report = run_baseline(cfg, dataset)
    parts = split(dataset.manifest, cfg.split_spec)
    test_truths = [dataset.truths[k] for k in parts.test]
    for row in report["rows"]:
        train_keys = subsample(parts.train, row["pct"], cfg.split_spec.seed)
        train_mean = sum(dataset.truths[k] for k in train_keys) / len(train_keys)
        expected_mae = sum(abs(train_mean - t) for t in test_truths) / len(test_truths)
        expected_mse = sum((train_mean - t) ** 2 for t in test_truths) / len(test_truths)
        assert row["mae"] == pytest.approx(expected_mae, abs=1e-12)
        assert row["mse"] == pytest.approx(expected_mse, abs=1e-12)
        assert row["test_lines"] == len(parts.test)


def test_baseline_evaluates_every_fraction_on_same_test_set():
    dataset = make_dataset("m", 8)
    cfg = config("baseline", fractions=(1.0, 0.5, 0.35, 0.1))
    report = run_baseline(cfg, dataset)
    assert [row["pct"] for row in report["rows"]] == [1.0, 0.5, 0.35, 0.1]
    test_counts = {row["test_lines"] for row in report["rows"]}
    assert len(test_counts) == 1


def test_transfer_fraction_zero_equals_source_only():
    source = make_dataset("src", 8)
    target = make_dataset("tgt", 6, year0=-250, step=30)
    cfg = config("transfer", fractions=(0.0, 1.0))
    report = run_transfer(cfg, source, target)

    source_parts = split(source.manifest, cfg.split_spec)
    target_parts = split(target.manifest, cfg.split_spec)
    predictor = MeanPredictor()
    predictor.fit(
        [source.features[k] for k in source_parts.train],
        [source.truths[k] for k in source_parts.train],
    )
    preds = [predictor.predict(target.features[k]) for k in target_parts.test]
    truths = [target.truths[k] for k in target_parts.test]
    expected_mae = sum(abs(p - t) for p, t in zip(preds, truths)) / len(preds)

    zero_row = report["rows"][0]
    assert zero_row["pct"] == 0.0
    assert zero_row["continued_lines"] == 0
    assert zero_row["mae"] == pytest.approx(expected_mae, abs=1e-12)


def test_transfer_full_fraction_mean_is_union_mean():
    source = make_dataset("src", 8)
    target = make_dataset("tgt", 6, year0=-250, step=30)
    cfg = config("transfer", fractions=(1.0,))
    report = run_transfer(cfg, source, target)

    source_parts = split(source.manifest, cfg.split_spec)
    target_parts = split(target.manifest, cfg.split_spec)
    dates = [source.truths[k] for k in source_parts.train] + [
        target.truths[k] for k in target_parts.train
    ]
    union_mean = sum(dates) / len(dates)
    truths = [target.truths[k] for k in target_parts.test]
    expected_mae = sum(abs(union_mean - t) for t in truths) / len(truths)
    assert report["rows"][0]["mae"] == pytest.approx(expected_mae, abs=1e-12)


def test_union_identical_datasets_coincide():
    first = make_dataset("a", 8)
    second = make_dataset("a", 8)
    cfg = config("union", fractions=(1.0,))
    report = run_union(cfg, first, second)
    row = report["rows"][0]
    assert row["balanced"] is True
    assert row["test_first"]["mae"] == row["test_second"]["mae"]
    assert row["test_union"]["mae"] == row["test_first"]["mae"]
    assert row["test_union"]["n"] == row["test_first"]["n"] + row["test_second"]["n"]


def test_union_mean_predictor_matches_weighted_mean_oracle():
    first = make_dataset("a", 8)
    second = make_dataset("b", 6, year0=-250, step=30)
    cfg = config("union", fractions=(0.5,))
    report = run_union(cfg, first, second)

    first_parts = split(first.manifest, cfg.split_spec)
    second_parts = split(second.manifest, cfg.split_spec)
    picked = subsample(second_parts.train, 0.5, cfg.split_spec.seed)
    dates = [first.truths[k] for k in first_parts.train] + [second.truths[k] for k in picked]
    union_mean = sum(dates) / len(dates)

    truths_first = [first.truths[k] for k in first_parts.test]
    expected = sum(abs(union_mean - t) for t in truths_first) / len(truths_first)
    assert report["rows"][0]["test_first"]["mae"] == pytest.approx(expected, abs=1e-12)


def test_union_balanced_flag():
    first = make_dataset("a", 8)   # 12 training lines
    second = make_dataset("b", 8)  # 12 training lines
    cfg = config("union", fractions=(1.0, 0.1))
    report = run_union(cfg, first, second)
    assert report["rows"][0]["balanced"] is True   # 12 vs 12
    assert report["rows"][1]["balanced"] is False  # 12 vs 1


def test_document_split_never_leaks_doc_ids():
    rng = random.Random(314)
    for _ in range(30):
        manifest = make_manifest("m", rng.randint(4, 12), lines_per_doc=rng.randint(1, 4))
        parts = split(manifest, spec(seed=rng.randint(0, 10_000)))
        train_docs = {d for d, _ in parts.train}
        test_docs = {d for d, _ in parts.test}
        assert train_docs & test_docs == set()


def test_parse_config_happy_path():
    cfg = parse_experiment_config(
        {
            "protocol": "baseline",
            "datasets": [{"name": "a", "manifest": "a.json"}],
            "fractions": [1.0, 0.5],
            "predictor": {"kind": "knn", "k": 3},
            "split": {"train": 0.5, "val": 0.25, "test": 0.25, "unit": "line", "seed": 7},
            "etw": {"alpha_min": 0, "alpha_max": 1, "alpha_step": 0.5},
            "out_dir": "out",
        }
    )
    assert cfg.protocol == "baseline"
    assert cfg.predictor.k == 3
    assert cfg.split_spec.unit == "line"
    assert cfg.etw is not None
    assert cfg.out_dir == "out"


def test_parse_config_defaults_fractions():
    cfg = parse_experiment_config(
        {
            "protocol": "transfer",
            "datasets": [
                {"name": "a", "manifest": "a.json"},
                {"name": "b", "manifest": "b.json"},
            ],
            "predictor": {"kind": "mean"},
            "split": {"train": 0.5, "val": 0.25, "test": 0.25, "seed": 7},
        }
    )
    assert cfg.fractions == (0.0, 0.25, 0.5, 0.75, 1.0)


@pytest.mark.parametrize(
    "patch,path",
    [
        ({"protocol": "bogus"}, "$.protocol"),
        ({"datasets": []}, "$.datasets"),
        ({"fractions": [0.0]}, "$.fractions[0]"),
        ({"fractions": [2.0]}, "$.fractions[0]"),
        ({"predictor": {"kind": "svm"}}, "$.predictor.kind"),
        ({"predictor": {"kind": "knn"}}, "$.predictor.k"),
        ({"predictor": {"kind": "mean", "k": 2}}, "$.predictor.k"),
        ({"split": {"train": 0.5, "val": 0.25, "test": 0.25}}, "$.split.seed"),
        ({"split": {"train": 0.5, "val": 0.3, "test": 0.3, "seed": 1}}, "$.split"),
        ({"etw": {"alpha_min": 0, "alpha_max": 1}}, "$.etw.alpha_step"),
        ({"out_dir": 7}, "$.out_dir"),
    ],
)
def test_parse_config_errors_name_offending_field(patch, path):
    base = {
        "protocol": "baseline",
        "datasets": [{"name": "a", "manifest": "a.json"}],
        "fractions": [1.0],
        "predictor": {"kind": "mean"},
        "split": {"train": 0.5, "val": 0.25, "test": 0.25, "seed": 7},
    }
    base.update(patch)
    with pytest.raises(ConfigError) as err:
        parse_experiment_config(base)
    assert str(err.value).startswith(path + ":")


def test_transfer_allows_zero_fraction_baseline_does_not():
    base = {
        "protocol": "baseline",
        "datasets": [{"name": "a", "manifest": "a.json"}],
        "fractions": [0],
        "predictor": {"kind": "mean"},
        "split": {"train": 0.5, "val": 0.25, "test": 0.25, "seed": 7},
    }
    with pytest.raises(ConfigError):
        parse_experiment_config(base)
    base["protocol"] = "transfer"
    base["datasets"].append({"name": "b", "manifest": "b.json"})
    assert parse_experiment_config(base).fractions == (0.0,)


def test_run_experiment_is_byte_deterministic():
    manifests = {"a.json": make_manifest("a", 8), "b.json": make_manifest("b", 6)}

    def load(ref, base):
        return Dataset.from_manifest(ref.name, manifests[ref.manifest])

    cfg = parse_experiment_config(
        {
            "protocol": "union",
            "datasets": [
                {"name": "a", "manifest": "a.json"},
                {"name": "b", "manifest": "b.json"},
            ],
            "fractions": [1.0, 0.5],
            "predictor": {"kind": "knn", "k": 2},
            "split": {"train": 0.5, "val": 0.25, "test": 0.25, "seed": 11},
        }
    )
    first = run_experiment(cfg, load=load)
    second = run_experiment(cfg, load=load)
    assert dumps_canonical(first) == dumps_canonical(second)


def test_run_experiment_report_shape():
    manifest = make_manifest("a", 8)

    def load(ref, base):
        return Dataset.from_manifest(ref.name, manifest)

    cfg = parse_experiment_config(
        {
            "protocol": "baseline",
            "datasets": [{"name": "a", "manifest": "a.json"}],
            "fractions": [1.0, 0.5, 0.35, 0.1],
            "predictor": {"kind": "mean"},
            "split": {"train": 0.5, "val": 0.25, "test": 0.25, "seed": 3},
            "etw": {"alpha_min": 0, "alpha_max": 1, "alpha_step": 0.5},
            "out_dir": "somewhere",
        }
    )
    report = run_experiment(cfg, load=load)
    assert report["metadata"]["protocol"] == "baseline"
    assert report["metadata"]["seed"] == 3
    assert report["metadata"]["config"]["fractions"] == [1.0, 0.5, 0.35, 0.1]
    assert "out_dir" not in report["metadata"]["config"]
    assert report["splits"]["a"]["train_lines"] == 12
    for row in report["rows"]:
        assert len(row["etw_curve"]) == 3


def test_dataset_from_manifest_rejects_invalid():
    doc = DatedDocument("d", 0, "x", (LineRecord("l1", features=(0.1,)),))
    manifest = DatasetManifest("bad", (doc,))
    with pytest.raises(ValueError):
        Dataset.from_manifest("bad", manifest)
