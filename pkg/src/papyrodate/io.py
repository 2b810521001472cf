"""File codecs and deterministic report serialisation.

Everything emitted here is byte-reproducible: JSON objects are written
with sorted keys and floats fixed to six decimal places, CSV files get a
single header row, UTF-8 text and ``\\n`` newlines throughout, and all
writes are atomic (temp file then rename).  Parsing an emitted file and
re-emitting it yields identical bytes.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .model import (
    Century,
    DatasetManifest,
    DatedDocument,
    DateInterval,
    LineRecord,
)
from .agreement import ExpertResponse

FLOAT_DECIMALS = 6


class ManifestFormatError(ValueError):
    """Manifest JSON parsed but does not match the manifest schema."""


class CsvFormatError(ValueError):
    """A CSV input does not match its declared schema."""


def fmt_float(value: float) -> str:
    """Fixed six-decimal rendering used in every emitted file."""
    if not math.isfinite(value):
        raise ValueError(f"cannot serialise non-finite float {value!r}")
    if value == 0.0:
        value = 0.0  # normalise -0.0
    return f"{value:.{FLOAT_DECIMALS}f}"


def _to_json(obj: Any, indent: int) -> str:
    pad = " " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            items.append(f'{pad}  {json.dumps(key, ensure_ascii=False)}: {_to_json(obj[key], indent + 2)}')
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {_to_json(v, indent + 2)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__} to report JSON")


def dumps_canonical(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, floats at six decimals."""
    return _to_json(obj, 0) + "\n"


def write_bytes_atomic(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_text_atomic(path: str | Path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def write_json(path: str | Path, obj: Any) -> None:
    write_text_atomic(path, dumps_canonical(obj))


def format_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Render a CSV with one header row; floats use the fixed format."""
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [fmt_float(v) if isinstance(v, float) else v for v in row]
        )
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    write_text_atomic(path, format_csv(header, rows))


def _read_csv_rows(path: str | Path, expected_header: Sequence[str]) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected header {list(expected_header)}")
        if header != list(expected_header):
            raise CsvFormatError(
                f"{path}: header {header} does not match expected {list(expected_header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(expected_header)} fields")
            rows.append(row)
        return rows


def read_predictions_csv(path: str | Path) -> dict[tuple[str, str], Century]:
    """Per-line model predictions: columns doc_id,line_id,pred_century."""
    out: dict[tuple[str, str], Century] = {}
    for row in _read_csv_rows(path, ("doc_id", "line_id", "pred_century")):
        key = (row[0], row[1])
        if key in out:
            raise CsvFormatError(f"{path}: duplicate prediction for line {key!r}")
        try:
            out[key] = float(row[2])
        except ValueError:
            raise CsvFormatError(f"{path}: bad pred_century {row[2]!r} for line {key!r}")
    if not out:
        raise CsvFormatError(f"{path}: no prediction rows")
    return out


def read_truths_csv(path: str | Path) -> dict[str, int]:
    """Per-document ground truth: columns doc_id,year (signed integers)."""
    out: dict[str, int] = {}
    for row in _read_csv_rows(path, ("doc_id", "year")):
        if row[0] in out:
            raise CsvFormatError(f"{path}: duplicate truth for doc {row[0]!r}")
        try:
            year = int(row[1])
        except ValueError:
            raise CsvFormatError(f"{path}: bad year {row[1]!r} for doc {row[0]!r}")
        if year == 0:
            raise CsvFormatError(f"{path}: year 0 does not exist (doc {row[0]!r})")
        out[row[0]] = year
    if not out:
        raise CsvFormatError(f"{path}: no truth rows")
    return out


def read_responses_csv(path: str | Path) -> list[ExpertResponse]:
    """Expert answers: columns expert_id,doc_id,line_id,lo_year,hi_year.

    Empty lo and hi mean an abstention; exactly one empty bound is a
    format error.  Years are signed integers.
    """
    responses: list[ExpertResponse] = []
    for row in _read_csv_rows(path, ("expert_id", "doc_id", "line_id", "lo_year", "hi_year")):
        expert_id, doc_id, line_id, lo_raw, hi_raw = row
        if lo_raw == "" and hi_raw == "":
            answer: DateInterval | None = None
        elif lo_raw == "" or hi_raw == "":
            raise CsvFormatError(
                f"{path}: line ({doc_id!r}, {line_id!r}) of {expert_id!r} "
                "has only one interval bound"
            )
        else:
            try:
                lo_year, hi_year = int(lo_raw), int(hi_raw)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: bad interval bounds ({lo_raw!r}, {hi_raw!r}) "
                    f"for line ({doc_id!r}, {line_id!r})"
                )
            answer = DateInterval(lo_year / 100, hi_year / 100)
        responses.append(ExpertResponse(expert_id, doc_id, line_id, answer))
    if not responses:
        raise CsvFormatError(f"{path}: no response rows")
    return responses


def read_features_csv(path: str | Path) -> dict[tuple[str, str], tuple[float, ...]]:
    """Precomputed feature vectors: columns doc_id,line_id,f0..fN."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file")
        if header[:2] != ["doc_id", "line_id"] or len(header) < 3:
            raise CsvFormatError(f"{path}: expected header doc_id,line_id,f0..fN")
        expected = [f"f{i}" for i in range(len(header) - 2)]
        if header[2:] != expected:
            raise CsvFormatError(f"{path}: feature columns must be f0..f{len(header) - 3}")
        out: dict[tuple[str, str], tuple[float, ...]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields")
            key = (row[0], row[1])
            if key in out:
                raise CsvFormatError(f"{path}: duplicate features for line {key!r}")
            try:
                out[key] = tuple(float(v) for v in row[2:])
            except ValueError:
                raise CsvFormatError(f"{path}:{lineno}: bad feature value")
        if not out:
            raise CsvFormatError(f"{path}: no feature rows")
        return out


def manifest_from_dict(
    raw: Any, default_dataset: str = "", base_dir: str | Path = "."
) -> DatasetManifest:
    """Build a manifest from parsed JSON, checking the schema strictly.

    A line's ``features`` may be an inline list of numbers or a string
    naming a features CSV (resolved against ``base_dir``) that carries
    the line's vector under its (doc_id, line_id).
    """
    if not isinstance(raw, dict):
        raise ManifestFormatError("manifest must be a JSON object")
    feature_files: dict[str, dict[tuple[str, str], tuple[float, ...]]] = {}

    def _resolve_reference(ref: str, key: tuple[str, str], where: str) -> tuple[float, ...]:
        if ref not in feature_files:
            feature_files[ref] = read_features_csv(Path(base_dir) / ref)
        table = feature_files[ref]
        if key not in table:
            raise ManifestFormatError(f"{where}: {ref} has no features for line {key!r}")
        return table[key]
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise ManifestFormatError("manifest field 'name' must be a nonempty string")
    raw_docs = raw.get("documents")
    if not isinstance(raw_docs, list):
        raise ManifestFormatError("manifest field 'documents' must be a list")

    documents: list[DatedDocument] = []
    for i, raw_doc in enumerate(raw_docs):
        where = f"documents[{i}]"
        if not isinstance(raw_doc, dict):
            raise ManifestFormatError(f"{where} must be an object")
        doc_id = raw_doc.get("doc_id")
        if not isinstance(doc_id, str) or not doc_id:
            raise ManifestFormatError(f"{where}.doc_id must be a nonempty string")
        year = raw_doc.get("ground_truth_year")
        if not isinstance(year, int) or isinstance(year, bool):
            raise ManifestFormatError(f"{where}.ground_truth_year must be an integer year")
        dataset = raw_doc.get("dataset", default_dataset or name)
        if not isinstance(dataset, str):
            raise ManifestFormatError(f"{where}.dataset must be a string")
        raw_lines = raw_doc.get("lines")
        if not isinstance(raw_lines, list):
            raise ManifestFormatError(f"{where}.lines must be a list")
        lines: list[LineRecord] = []
        for j, raw_line in enumerate(raw_lines):
            lwhere = f"{where}.lines[{j}]"
            if not isinstance(raw_line, dict):
                raise ManifestFormatError(f"{lwhere} must be an object")
            line_id = raw_line.get("line_id")
            if not isinstance(line_id, str) or not line_id:
                raise ManifestFormatError(f"{lwhere}.line_id must be a nonempty string")
            image = raw_line.get("image")
            features = raw_line.get("features")
            if image is not None and not isinstance(image, str):
                raise ManifestFormatError(f"{lwhere}.image must be a path string")
            feat_tuple: tuple[float, ...] | None = None
            if isinstance(features, str):
                feat_tuple = _resolve_reference(features, (doc_id, line_id), lwhere)
            elif features is not None:
                if not isinstance(features, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in features
                ):
                    raise ManifestFormatError(
                        f"{lwhere}.features must be a list of numbers or a features CSV path"
                    )
                feat_tuple = tuple(float(v) for v in features)
            lines.append(LineRecord(line_id=line_id, image=image, features=feat_tuple))
        documents.append(
            DatedDocument(
                doc_id=doc_id,
                ground_truth_year=year,
                dataset=dataset,
                lines=tuple(lines),
            )
        )

    split_labels: dict[tuple[str, str], str] | None = None
    raw_splits = raw.get("splits")
    if raw_splits is not None:
        if not isinstance(raw_splits, dict):
            raise ManifestFormatError("manifest field 'splits' must be an object")
        split_labels = {}
        for doc_id, lines_map in raw_splits.items():
            if not isinstance(lines_map, dict):
                raise ManifestFormatError(f"splits[{doc_id!r}] must be an object")
            for line_id, label in lines_map.items():
                if not isinstance(label, str):
                    raise ManifestFormatError(
                        f"splits[{doc_id!r}][{line_id!r}] must be a string label"
                    )
                split_labels[(doc_id, line_id)] = label

    return DatasetManifest(name=name, documents=tuple(documents), split_labels=split_labels)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load a manifest JSON file.

    Unreadable files raise OSError and malformed JSON raises
    json.JSONDecodeError (both I/O-level); schema problems raise
    :class:`ManifestFormatError`.  Invariant checks are separate, see
    :func:`papyrodate.model.validate_manifest`.  Image paths and
    features CSV references resolve relative to the manifest file.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return manifest_from_dict(raw, base_dir=path.parent)


def read_pgm(path: str | Path) -> list[list[int]]:
    """Read a binary (P5) 8-bit grayscale PGM into a row-major int matrix."""
    data = Path(path).read_bytes()
    pos = 0

    def _token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        return data[start:pos]

    if _token() != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width = int(_token())
    height = int(_token())
    maxval = int(_token())
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: bad PGM dimensions {width}x{height}")
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace after maxval
    pixels = data[pos : pos + width * height]
    if len(pixels) != width * height:
        raise ValueError(f"{path}: truncated PGM pixel data")
    return [
        [pixels[r * width + c] for c in range(width)]
        for r in range(height)
    ]


def write_pgm(path: str | Path, image: Sequence[Sequence[int]]) -> None:
    """Write an int matrix as a binary (P5) 8-bit grayscale PGM."""
    height = len(image)
    width = len(image[0]) if height else 0
    if height == 0 or width == 0:
        raise ValueError("cannot write an empty image")
    body = bytearray()
    for row in image:
        if len(row) != width:
            raise ValueError("ragged image rows")
        for px in row:
            if not 0 <= px <= 255:
                raise ValueError(f"pixel {px} outside 0..255")
            body.append(px)
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    write_bytes_atomic(path, header + bytes(body))
