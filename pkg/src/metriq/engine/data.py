"""Columnar datasets and loaders for CSV and JSONL inputs."""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path

from ..core import ValueType
from ..diagnostics import ConfigError, DataError
from ..schema import DatasetSchema, schema_from_manifest


class Dataset:
    """An immutable in-memory table with a declared schema.

    Number columns hold floats, string columns str, bool columns bool; null
    is None and may appear only in nullable columns.
    """

    def __init__(self, schema: DatasetSchema, columns: dict[str, list], n_rows: int):
        for col in schema.columns:
            if col.name not in columns:
                raise DataError(f"missing column '{col.name}'")
            if len(columns[col.name]) != n_rows:
                raise DataError(
                    f"column '{col.name}' has {len(columns[col.name])} values, expected {n_rows}"
                )
        self.schema = schema
        self.columns = columns
        self.n_rows = n_rows
        self._rational: dict[str, list] = {}

    def column(self, name: str) -> list:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"no such column '{name}'") from None

    def rational_column(self, name: str) -> list:
        """Number column with float values converted to exact rationals."""
        cached = self._rational.get(name)
        if cached is None:
            cached = [None if v is None else Fraction(v) for v in self.column(name)]
            self._rational[name] = cached
        return cached

    def with_column(self, name: str, values: list) -> "Dataset":
        """A new dataset sharing all columns except a replaced one."""
        if len(values) != self.n_rows:
            raise DataError(f"replacement column '{name}' has wrong length")
        columns = dict(self.columns)
        columns[name] = list(values)
        return Dataset(self.schema, columns, self.n_rows)


def load_manifest(path: str | Path) -> DatasetSchema:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"manifest file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from None
    return schema_from_manifest(doc)


def _coerce(raw, vtype: ValueType, nullable: bool, row: int, col: str):
    """CSV cell text to a typed value; empty text is null."""
    if raw is None or raw == "":
        if not nullable:
            raise DataError(f"null in non-nullable column '{col}' at row {row}")
        return None
    if vtype is ValueType.NUMBER:
        try:
            value = float(raw)
        except ValueError:
            raise DataError(
                f"cannot parse {raw!r} as a number at row {row}, column '{col}'"
            ) from None
        if not math.isfinite(value):
            raise DataError(f"non-finite number {raw!r} at row {row}, column '{col}'")
        return value
    if vtype is ValueType.BOOL:
        if raw == "true":
            return True
        if raw == "false":
            return False
        raise DataError(
            f"cannot parse {raw!r} as a bool at row {row}, column '{col}' "
            "(expected 'true' or 'false')"
        )
    return raw


def _check_json_value(value, vtype: ValueType, nullable: bool, row: int, col: str):
    if value is None:
        if not nullable:
            raise DataError(f"null in non-nullable column '{col}' at row {row}")
        return None
    if vtype is ValueType.NUMBER:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DataError(f"expected a number at row {row}, column '{col}', got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise DataError(f"non-finite number at row {row}, column '{col}'")
        return value
    if vtype is ValueType.BOOL:
        if not isinstance(value, bool):
            raise DataError(f"expected a bool at row {row}, column '{col}', got {value!r}")
        return value
    if not isinstance(value, str):
        raise DataError(f"expected a string at row {row}, column '{col}', got {value!r}")
    return value


def load_dataset(path: str | Path, schema: DatasetSchema) -> Dataset:
    """Load a CSV (with header) or JSONL file against a schema.

    The format is chosen by extension: .jsonl / .ndjson parse as JSON lines,
    anything else as CSV. Row numbers in errors are 1-based data rows.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        return dataset_from_jsonl(text, schema)
    return dataset_from_csv(text, schema)


def dataset_from_csv(text: str, schema: DatasetSchema) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("dataset has no header row") from None
    positions: dict[str, int] = {}
    for col in schema.columns:
        if col.name not in header:
            raise DataError(f"dataset is missing declared column '{col.name}'")
        positions[col.name] = header.index(col.name)

    columns: dict[str, list] = {col.name: [] for col in schema.columns}
    n_rows = 0
    for row_idx, record in enumerate(reader, start=1):
        if not record:
            continue
        for col in schema.columns:
            pos = positions[col.name]
            raw = record[pos] if pos < len(record) else ""
            columns[col.name].append(_coerce(raw, col.vtype, col.nullable, row_idx, col.name))
        n_rows += 1
    return Dataset(schema, columns, n_rows)


def dataset_from_jsonl(text: str, schema: DatasetSchema) -> Dataset:
    columns: dict[str, list] = {col.name: [] for col in schema.columns}
    n_rows = 0
    for row_idx, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"row {row_idx} is not valid JSON: {exc}") from None
        if not isinstance(record, dict):
            raise DataError(f"row {row_idx} must be a JSON object")
        for col in schema.columns:
            value = record.get(col.name)
            columns[col.name].append(
                _check_json_value(value, col.vtype, col.nullable, row_idx, col.name)
            )
        n_rows += 1
    return Dataset(schema, columns, n_rows)


def dataset_from_rows(schema: DatasetSchema, rows: list[dict]) -> Dataset:
    """Build a dataset from in-memory row dicts (mostly for tests and tools)."""
    columns: dict[str, list] = {col.name: [] for col in schema.columns}
    for row_idx, record in enumerate(rows, start=1):
        for col in schema.columns:
            columns[col.name].append(
                _check_json_value(record.get(col.name), col.vtype, col.nullable, row_idx, col.name)
            )
    return Dataset(schema, columns, len(rows))
