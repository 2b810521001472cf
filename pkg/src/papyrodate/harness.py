"""Seeded experiment protocols with pluggable predictors.

Three protocols are provided: ``baseline`` (train and test on one
dataset, sweeping the training fraction), ``transfer`` (fit on a source
dataset, continue fitting on a fraction of a target dataset, evaluate on
the target test set) and ``union`` (fit on the first dataset's full
training set plus a fraction of the second's, evaluate on both test sets
and their union).

Everything is deterministic: splits and subsamples are driven by an
explicit seed, fractions subsample a prefix of one fixed shuffle so
smaller fractions nest inside larger ones, and within one run every
fraction is evaluated against the same test set.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import io as pio
from .metrics import EtwSweep, etw_sweep, mae, mse
from .model import Century, DatasetManifest, validate_manifest
from .predictors import (
    FeatureVector,
    KnnPredictor,
    MeanPredictor,
    Predictor,
    extract_features,
)

LineKey = tuple[str, str]

SPLIT_UNITS = ("document", "line")
PROTOCOLS = ("baseline", "transfer", "union")

DEFAULT_FRACTIONS = {
    "baseline": (1.0, 0.5, 0.35, 0.10),
    "transfer": (0.0, 0.25, 0.5, 0.75, 1.0),
    "union": (1.0, 0.5, 0.35, 0.10),
}

# Training sets of the union protocol count as balanced when the smaller
# one is at least this fraction of the larger.
BALANCED_RATIO = 0.8

_COUNT_EPS = 1e-9


class ConfigError(ValueError):
    """Experiment config violation, carrying the offending field path."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SplitSpec:
    """Ratios for train/val/test, the shuffling unit, and the seed."""

    train: float
    val: float
    test: float
    unit: str = "document"
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.train, self.val, self.test) <= 0:
            raise ValueError("split ratios must all be positive")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")
        if self.unit not in SPLIT_UNITS:
            raise ValueError(f"split unit must be one of {SPLIT_UNITS}")


@dataclass(frozen=True)
class SplitParts:
    train: tuple[LineKey, ...]
    val: tuple[LineKey, ...]
    test: tuple[LineKey, ...]


def _allocate(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    n_train = int(math.floor(spec.train * n + _COUNT_EPS))
    n_val = int(math.floor(spec.val * n + _COUNT_EPS))
    n_test = n - n_train - n_val
    if n_train < 1 or n_val < 1 or n_test < 1:
        raise ValueError(
            f"split of {n} {spec.unit}s with ratios "
            f"{spec.train}/{spec.val}/{spec.test} leaves an empty part"
        )
    return n_train, n_val, n_test


def split(manifest: DatasetManifest, spec: SplitSpec) -> SplitParts:
    """Partition a manifest's lines into train/val/test.

    Deterministic under (manifest order, seed).  With ``unit=document``
    all lines of a document land in the same part, so writer identity
    cannot leak between train and test; ``unit=line`` shuffles lines
    independently of their documents.
    """
    rng = random.Random(spec.seed)
    if spec.unit == "document":
        docs = list(manifest.documents)
        rng.shuffle(docs)
        n_train, n_val, _ = _allocate(len(docs), spec)
        parts = (docs[:n_train], docs[n_train : n_train + n_val], docs[n_train + n_val :])
        expanded = tuple(
            tuple((d.doc_id, ln.line_id) for d in part for ln in d.lines) for part in parts
        )
        return SplitParts(*expanded)
    keys = manifest.line_keys()
    rng.shuffle(keys)
    n_train, n_val, _ = _allocate(len(keys), spec)
    return SplitParts(
        train=tuple(keys[:n_train]),
        val=tuple(keys[n_train : n_train + n_val]),
        test=tuple(keys[n_train + n_val :]),
    )


def split_from_labels(manifest: DatasetManifest) -> SplitParts:
    """Use the manifest's own split labels instead of a seeded shuffle.

    Lines keep manifest order within each part.  The manifest must carry
    a complete ``splits`` block; run validation first to get readable
    diagnostics.
    """
    if manifest.split_labels is None:
        raise ValueError(f"manifest {manifest.name!r} carries no split labels")
    parts: dict[str, list[LineKey]] = {"train": [], "val": [], "test": []}
    for key in manifest.line_keys():
        label = manifest.split_labels.get(key)
        if label not in parts:
            raise ValueError(f"line {key!r} has no valid split label")
        parts[label].append(key)
    if not all(parts.values()):
        raise ValueError(f"manifest {manifest.name!r} labels leave an empty split part")
    return SplitParts(
        train=tuple(parts["train"]), val=tuple(parts["val"]), test=tuple(parts["test"])
    )


def subsample(lines: Sequence[LineKey], fraction: float, seed: int) -> tuple[LineKey, ...]:
    """Draw floor(fraction * n) lines without replacement, deterministically.

    Fraction 1.0 returns the lines unchanged in their original order.
    Smaller fractions take a prefix of one seed-fixed shuffle, so for a
    given seed the subsets nest as the fraction grows.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return tuple(lines)
    count = int(math.floor(fraction * len(lines) + _COUNT_EPS))
    if count < 1:
        raise ValueError(f"fraction {fraction} of {len(lines)} lines is empty")
    shuffled = list(lines)
    random.Random(seed).shuffle(shuffled)
    return tuple(shuffled[:count])


@dataclass(frozen=True)
class PredictorSpec:
    kind: str
    k: int | None = None

    def build(self) -> Predictor:
        if self.kind == "mean":
            return MeanPredictor()
        if self.kind == "knn":
            assert self.k is not None
            return KnnPredictor(self.k)
        raise ValueError(f"unknown predictor kind {self.kind!r}")


@dataclass(frozen=True)
class DatasetRef:
    name: str
    manifest: str  # path as written in the config


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    datasets: tuple[DatasetRef, ...]
    fractions: tuple[float, ...]
    predictor: PredictorSpec
    split_spec: SplitSpec
    etw: EtwSweep | None = None
    out_dir: str | None = None


def parse_experiment_config(raw: object) -> ExperimentConfig:
    """Validate a parsed config JSON; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("$", "config must be a JSON object")

    protocol = raw.get("protocol")
    if protocol not in PROTOCOLS:
        raise ConfigError("$.protocol", f"must be one of {PROTOCOLS}")

    raw_datasets = raw.get("datasets")
    expected = 1 if protocol == "baseline" else 2
    if not isinstance(raw_datasets, list) or len(raw_datasets) != expected:
        raise ConfigError("$.datasets", f"{protocol} protocol needs exactly {expected} dataset(s)")
    datasets: list[DatasetRef] = []
    for i, entry in enumerate(raw_datasets):
        if not isinstance(entry, dict):
            raise ConfigError(f"$.datasets[{i}]", "must be an object")
        name = entry.get("name")
        manifest = entry.get("manifest")
        if not isinstance(name, str) or not name:
            raise ConfigError(f"$.datasets[{i}].name", "must be a nonempty string")
        if not isinstance(manifest, str) or not manifest:
            raise ConfigError(f"$.datasets[{i}].manifest", "must be a manifest path")
        datasets.append(DatasetRef(name=name, manifest=manifest))

    raw_fractions = raw.get("fractions", list(DEFAULT_FRACTIONS[protocol]))
    if not isinstance(raw_fractions, list) or not raw_fractions:
        raise ConfigError("$.fractions", "must be a nonempty list of numbers")
    fractions: list[float] = []
    for i, f in enumerate(raw_fractions):
        if isinstance(f, bool) or not isinstance(f, (int, float)):
            raise ConfigError(f"$.fractions[{i}]", "must be a number")
        f = float(f)
        low_ok = f >= 0 if protocol == "transfer" else f > 0
        if not (low_ok and f <= 1):
            bounds = "[0, 1]" if protocol == "transfer" else "(0, 1]"
            raise ConfigError(f"$.fractions[{i}]", f"must be in {bounds}")
        fractions.append(f)

    raw_pred = raw.get("predictor")
    if not isinstance(raw_pred, dict):
        raise ConfigError("$.predictor", "must be an object")
    kind = raw_pred.get("kind")
    if kind not in ("mean", "knn"):
        raise ConfigError("$.predictor.kind", "must be one of ('mean', 'knn')")
    k = raw_pred.get("k")
    if kind == "knn":
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise ConfigError("$.predictor.k", "knn needs an integer k >= 1")
    elif k is not None:
        raise ConfigError("$.predictor.k", "only the knn predictor takes k")
    predictor = PredictorSpec(kind=kind, k=k if kind == "knn" else None)

    raw_split = raw.get("split")
    if not isinstance(raw_split, dict):
        raise ConfigError("$.split", "must be an object")
    for field in ("train", "val", "test"):
        v = raw_split.get(field)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"$.split.{field}", "must be a number")
    unit = raw_split.get("unit", "document")
    if unit not in SPLIT_UNITS:
        raise ConfigError("$.split.unit", f"must be one of {SPLIT_UNITS}")
    seed = raw_split.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("$.split.seed", "an explicit integer seed is required")
    try:
        split_spec = SplitSpec(
            train=float(raw_split["train"]),
            val=float(raw_split["val"]),
            test=float(raw_split["test"]),
            unit=unit,
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("$.split", str(exc))

    etw: EtwSweep | None = None
    raw_etw = raw.get("etw")
    if raw_etw is not None:
        if not isinstance(raw_etw, dict):
            raise ConfigError("$.etw", "must be an object")
        for field in ("alpha_min", "alpha_max", "alpha_step"):
            v = raw_etw.get(field)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"$.etw.{field}", "must be a number")
        try:
            etw = EtwSweep(
                alpha_min=float(raw_etw["alpha_min"]),
                alpha_max=float(raw_etw["alpha_max"]),
                alpha_step=float(raw_etw["alpha_step"]),
            )
        except ValueError as exc:
            raise ConfigError("$.etw", str(exc))

    out_dir = raw.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("$.out_dir", "must be a path string")

    return ExperimentConfig(
        protocol=protocol,
        datasets=tuple(datasets),
        fractions=tuple(fractions),
        predictor=predictor,
        split_spec=split_spec,
        etw=etw,
        out_dir=out_dir,
    )


@dataclass(frozen=True)
class Dataset:
    """A loaded manifest with per-line features and truths resolved."""

    name: str
    manifest: DatasetManifest
    features: Mapping[LineKey, FeatureVector]
    truths: Mapping[LineKey, Century]

    @classmethod
    def from_manifest(
        cls, name: str, manifest: DatasetManifest, base_dir: str | Path = "."
    ) -> "Dataset":
        violations = validate_manifest(manifest)
        if violations:
            listing = "; ".join(str(v) for v in violations)
            raise ValueError(f"manifest {manifest.name!r} is invalid: {listing}")
        base = Path(base_dir)
        features: dict[LineKey, FeatureVector] = {}
        for doc in manifest.documents:
            for line in doc.lines:
                if line.features is not None:
                    features[(doc.doc_id, line.line_id)] = line.features
                else:
                    assert line.image is not None
                    image = pio.read_pgm(base / line.image)
                    features[(doc.doc_id, line.line_id)] = extract_features(image)
        return cls(
            name=name,
            manifest=manifest,
            features=features,
            truths=manifest.truth_by_line(),
        )


def _fit(
    spec: PredictorSpec,
    dataset_parts: Sequence[tuple[Dataset, Sequence[LineKey]]],
) -> Predictor:
    predictor = spec.build()
    first = True
    for dataset, keys in dataset_parts:
        feats = [dataset.features[k] for k in keys]
        dates = [dataset.truths[k] for k in keys]
        if first:
            predictor.fit(feats, dates)
            first = False
        else:
            predictor.continue_fit(feats, dates)
    return predictor


def _predict_all(
    predictor: Predictor, dataset_parts: Sequence[tuple[Dataset, Sequence[LineKey]]]
) -> tuple[list[Century], list[Century]]:
    preds: list[Century] = []
    truths: list[Century] = []
    for dataset, keys in dataset_parts:
        for key in keys:
            preds.append(predictor.predict(dataset.features[key]))
            truths.append(dataset.truths[key])
    return preds, truths


def _metric_block(
    preds: Sequence[Century], truths: Sequence[Century], etw: EtwSweep | None
) -> dict:
    block: dict = {"n": len(preds), "mae": mae(preds, truths), "mse": mse(preds, truths)}
    if etw is not None:
        block["etw_curve"] = [
            {
                "alpha": r.alpha,
                "positives": r.positives,
                "negatives": r.negatives,
                "accuracy": r.accuracy,
            }
            for r in etw_sweep(preds, truths, etw)
        ]
    return block


def run_baseline(cfg: ExperimentConfig, dataset: Dataset) -> dict:
    """Fraction sweep on one dataset: fit on a subsample of the training
    split, always evaluate on the full, fixed test split."""
    parts = split(dataset.manifest, cfg.split_spec)
    rows = []
    for fraction in cfg.fractions:
        train_keys = subsample(parts.train, fraction, cfg.split_spec.seed)
        predictor = _fit(cfg.predictor, [(dataset, train_keys)])
        preds, truths = _predict_all(predictor, [(dataset, parts.test)])
        row = {
            "pct": fraction,
            "train_lines": len(train_keys),
            "val_lines": len(parts.val),
            "test_lines": len(parts.test),
        }
        row.update(_metric_block(preds, truths, cfg.etw))
        rows.append(row)
    return {
        "rows": rows,
        "splits": {
            dataset.name: {
                "train_lines": len(parts.train),
                "val_lines": len(parts.val),
                "test_lines": len(parts.test),
            }
        },
    }


def run_transfer(cfg: ExperimentConfig, source: Dataset, target: Dataset) -> dict:
    """Fit on the full source training split, continue fitting on a
    fraction of the target training split, evaluate on the target test
    split.  Fraction 0 evaluates the pure source-trained predictor."""
    source_parts = split(source.manifest, cfg.split_spec)
    target_parts = split(target.manifest, cfg.split_spec)
    rows = []
    for fraction in cfg.fractions:
        predictor = _fit(cfg.predictor, [(source, source_parts.train)])
        continued = 0
        if fraction > 0:
            keys = subsample(target_parts.train, fraction, cfg.split_spec.seed)
            predictor.continue_fit(
                [target.features[k] for k in keys], [target.truths[k] for k in keys]
            )
            continued = len(keys)
        preds, truths = _predict_all(predictor, [(target, target_parts.test)])
        row = {"pct": fraction, "continued_lines": continued}
        row.update(_metric_block(preds, truths, cfg.etw))
        rows.append(row)
    return {
        "rows": rows,
        "splits": {
            source.name: {
                "train_lines": len(source_parts.train),
                "val_lines": len(source_parts.val),
                "test_lines": len(source_parts.test),
            },
            target.name: {
                "train_lines": len(target_parts.train),
                "val_lines": len(target_parts.val),
                "test_lines": len(target_parts.test),
            },
        },
    }


def run_union(cfg: ExperimentConfig, first: Dataset, second: Dataset) -> dict:
    """Fit on the union of the first training split and a fraction of the
    second, evaluate on each test split and on their union."""
    first_parts = split(first.manifest, cfg.split_spec)
    second_parts = split(second.manifest, cfg.split_spec)
    rows = []
    for fraction in cfg.fractions:
        second_keys = subsample(second_parts.train, fraction, cfg.split_spec.seed)
        predictor = _fit(
            cfg.predictor, [(first, first_parts.train), (second, second_keys)]
        )
        sizes = (len(first_parts.train), len(second_keys))
        balanced = min(sizes) / max(sizes) >= BALANCED_RATIO
        preds_a, truths_a = _predict_all(predictor, [(first, first_parts.test)])
        preds_b, truths_b = _predict_all(predictor, [(second, second_parts.test)])
        rows.append(
            {
                "pct": fraction,
                "train_lines_first": sizes[0],
                "train_lines_second": sizes[1],
                "balanced": balanced,
                "test_first": _metric_block(preds_a, truths_a, cfg.etw),
                "test_second": _metric_block(preds_b, truths_b, cfg.etw),
                "test_union": _metric_block(preds_a + preds_b, truths_a + truths_b, cfg.etw),
            }
        )
    return {
        "rows": rows,
        "splits": {
            first.name: {
                "train_lines": len(first_parts.train),
                "val_lines": len(first_parts.val),
                "test_lines": len(first_parts.test),
            },
            second.name: {
                "train_lines": len(second_parts.train),
                "val_lines": len(second_parts.val),
                "test_lines": len(second_parts.test),
            },
        },
    }


def config_echo(cfg: ExperimentConfig) -> dict:
    """Config as a JSON-ready dict; out_dir is omitted so reports do not
    depend on where they were written."""
    echo: dict = {
        "protocol": cfg.protocol,
        "datasets": [{"name": d.name, "manifest": d.manifest} for d in cfg.datasets],
        "fractions": list(cfg.fractions),
        "predictor": {"kind": cfg.predictor.kind},
        "split": {
            "train": cfg.split_spec.train,
            "val": cfg.split_spec.val,
            "test": cfg.split_spec.test,
            "unit": cfg.split_spec.unit,
            "seed": cfg.split_spec.seed,
        },
    }
    if cfg.predictor.k is not None:
        echo["predictor"]["k"] = cfg.predictor.k
    if cfg.etw is not None:
        echo["etw"] = {
            "alpha_min": cfg.etw.alpha_min,
            "alpha_max": cfg.etw.alpha_max,
            "alpha_step": cfg.etw.alpha_step,
        }
    return echo


def _load_dataset(ref: DatasetRef, base: Path) -> Dataset:
    manifest = pio.load_manifest(base / ref.manifest)
    return Dataset.from_manifest(ref.name, manifest, base_dir=(base / ref.manifest).parent)


def run_experiment(
    cfg: ExperimentConfig,
    base_dir: str | Path = ".",
    load: Callable[[DatasetRef, Path], Dataset] | None = None,
) -> dict:
    """Load the configured datasets, run the protocol, assemble the report."""
    base = Path(base_dir)
    loader = load if load is not None else _load_dataset
    datasets = [loader(ref, base) for ref in cfg.datasets]
    if cfg.protocol == "baseline":
        body = run_baseline(cfg, datasets[0])
    elif cfg.protocol == "transfer":
        body = run_transfer(cfg, datasets[0], datasets[1])
    else:
        body = run_union(cfg, datasets[0], datasets[1])

    from . import __version__

    report = {
        "metadata": {
            "tool": "papyrodate",
            "version": __version__,
            "protocol": cfg.protocol,
            "seed": cfg.split_spec.seed,
            "config": config_echo(cfg),
        }
    }
    report.update(body)
    return report
